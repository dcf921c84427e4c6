#include "relink/index_builder.hpp"

#include <algorithm>
#include <charconv>
#include <exception>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_set>

#include "relink/error.hpp"
#include "relink/text.hpp"

namespace relink {
namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (true) {
    std::size_t tab = line.find('\t', pos);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(pos));
      break;
    }
    fields.push_back(line.substr(pos, tab - pos));
    pos = tab + 1;
  }
  return fields;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open " + path.string());
  return in;
}

bool is_namespaced(std::string_view target) {
  if (target.starts_with(':')) return true;
  static constexpr std::string_view kSkipped[] = {"File:", "Image:", "Category:", "Template:", "Wikipedia:", "Help:"};
  return std::any_of(std::begin(kSkipped), std::end(kSkipped), [&](std::string_view ns) { return target.starts_with(ns); });
}

void chomp(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

void RedirectTable::add(const std::string& alias, const std::string& canonical) {
  std::string from = canonical_title(alias);
  std::string to = canonical_title(canonical);
  if (from.empty() || to.empty() || from == to) return;
  map_[from] = to;
}

void RedirectTable::close() {
  cycles_.clear();
  std::map<std::string, std::string> closed;
  for (const auto& [alias, target] : map_) {
    std::set<std::string> visited{alias};
    std::string current = target;
    bool cyclic = false;
    for (auto it = map_.find(current); it != map_.end(); it = map_.find(current)) {
      if (!visited.insert(current).second) {
        cyclic = true;
        break;
      }
      current = it->second;
    }
    if (cyclic || visited.count(current)) {
      cycles_.push_back(alias);
      continue;
    }
    closed.emplace(alias, current);
  }
  map_ = std::move(closed);
}

const std::string& RedirectTable::resolve(const std::string& title) const {
  auto it = map_.find(title);
  return it == map_.end() ? title : it->second;
}

RedirectTable read_redirects(std::istream& in, const std::string& source_name) {
  RedirectTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    chomp(line);
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      throw Error(ErrorCode::MalformedLine, source_name + ":" + std::to_string(line_no) + ": expected alias<TAB>canonical");
    }
    table.add(std::string(fields[0]), std::string(fields[1]));
  }
  table.close();
  return table;
}

RedirectTable read_redirects(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_redirects(in, path.string());
}

void AnchorCounts::add(const std::string& surface, const std::string& entity, std::uint64_t count) {
  counts[{surface, entity}] += count;
}

void AnchorCounts::merge(const AnchorCounts& other) {
  for (const auto& [key, count] : other.counts) counts[key] += count;
  warnings += other.warnings;
}

void parse_wikitext(std::istream& in, const RedirectTable& redirects, AnchorCounts& into, const AnchorParseOptions& options) {
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  while ((pos = text.find("[[", pos)) != std::string::npos) {
    std::size_t close = text.find("]]", pos + 2);
    std::size_t reopen = text.find("[[", pos + 2);
    if (close == std::string::npos || (reopen != std::string::npos && reopen < close)) {
      ++into.warnings;
      pos += 2;
      continue;
    }
    std::string_view body(text.data() + pos + 2, close - pos - 2);
    pos = close + 2;
    if (body.find('\n') != std::string_view::npos) {
      ++into.warnings;
      continue;
    }
    std::string_view target = body;
    std::string_view anchor = body;
    if (auto bar = body.find('|'); bar != std::string_view::npos) {
      target = body.substr(0, bar);
      anchor = body.substr(bar + 1);
    }
    if (is_namespaced(target)) continue;
    std::string title = canonical_title(target);
    std::string surface = normalize_surface(anchor, options.case_sensitive);
    if (title.empty() || surface.empty()) {
      ++into.warnings;
      continue;
    }
    into.add(surface, redirects.resolve(title), 1);
  }
}

void parse_anchor_tsv(std::istream& in, const std::string& source_name, const RedirectTable& redirects, AnchorCounts& into,
                      const AnchorParseOptions& options) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    chomp(line);
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    auto malformed = [&](const std::string& why) {
      return Error(ErrorCode::MalformedLine, source_name + ":" + std::to_string(line_no) + ": " + why);
    };
    if (fields.size() != 3) throw malformed("expected surface<TAB>entity<TAB>count");
    std::uint64_t count = 0;
    auto [ptr, ec] = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), count);
    if (ec != std::errc() || ptr != fields[2].data() + fields[2].size() || count == 0) {
      throw malformed("count must be a positive integer, got '" + std::string(fields[2]) + "'");
    }
    std::string surface = normalize_surface(fields[0], options.case_sensitive);
    std::string title = canonical_title(fields[1]);
    if (surface.empty() || title.empty()) throw malformed("empty surface or entity");
    into.add(surface, redirects.resolve(title), count);
  }
}

void parse_anchor_corpus(const std::filesystem::path& path, const RedirectTable& redirects, AnchorCounts& into,
                         const AnchorParseOptions& options) {
  auto in = open_input(path);
  if (path.extension() == ".tsv") {
    parse_anchor_tsv(in, path.string(), redirects, into, options);
  } else {
    parse_wikitext(in, redirects, into, options);
  }
}

AnchorCounts parse_anchor_corpora(const std::vector<std::filesystem::path>& paths, const RedirectTable& redirects,
                                  const AnchorParseOptions& options) {
  std::vector<AnchorCounts> partial(paths.size());
  std::vector<std::exception_ptr> errors(paths.size());
  const auto n = static_cast<std::ptrdiff_t>(paths.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      parse_anchor_corpus(paths[static_cast<std::size_t>(i)], redirects, partial[static_cast<std::size_t>(i)], options);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  AnchorCounts total;
  for (const auto& p : partial) total.merge(p);
  return total;
}

void read_uniform_dict(std::istream& in, const std::string& source_name, const RedirectTable& redirects, UniformDict& into,
                       const AnchorParseOptions& options) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    chomp(line);
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      throw Error(ErrorCode::MalformedLine, source_name + ":" + std::to_string(line_no) + ": expected surface<TAB>entity");
    }
    std::string surface = normalize_surface(fields[0], options.case_sensitive);
    if (surface.empty()) continue;
    into[surface].insert(redirects.resolve(canonical_title(fields[1])));
  }
}

void read_uniform_dict(const std::filesystem::path& path, const RedirectTable& redirects, UniformDict& into,
                       const AnchorParseOptions& options) {
  auto in = open_input(path);
  read_uniform_dict(in, path.string(), redirects, into, options);
}

WikiPrior compute_wiki_prior(const AnchorCounts& counts) {
  WikiPrior out;
  auto it = counts.counts.begin();
  while (it != counts.counts.end()) {
    const std::string& surface = it->first.first;
    auto group_end = it;
    std::uint64_t total = 0;
    while (group_end != counts.counts.end() && group_end->first.first == surface) {
      total += group_end->second;
      ++group_end;
    }
    auto& row = out[surface];
    for (; it != group_end; ++it) {
      row[it->first.second] = static_cast<double>(it->second) / static_cast<double>(total);
    }
  }
  return out;
}

TitledPriors combine_priors(const WikiPrior& wiki, const UniformDict& dict, std::size_t max_candidates) {
  TitledPriors out;
  auto emit = [&](const std::string& surface, std::map<std::string, double> scores) {
    std::vector<std::pair<std::string, double>> list;
    list.reserve(scores.size());
    for (auto& [title, p] : scores) list.emplace_back(title, std::min(1.0, p));
    std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (list.size() > max_candidates) list.resize(max_candidates);
    if (!list.empty()) out.emplace(surface, std::move(list));
  };

  auto w = wiki.begin();
  auto d = dict.begin();
  while (w != wiki.end() || d != dict.end()) {
    bool take_wiki = d == dict.end() || (w != wiki.end() && w->first <= d->first);
    bool take_dict = w == wiki.end() || (d != dict.end() && d->first <= w->first);
    const std::string& surface = take_wiki ? w->first : d->first;
    std::map<std::string, double> scores;
    if (take_wiki) scores = w->second;
    if (take_dict && !d->second.empty()) {
      const double uniform = 1.0 / static_cast<double>(d->second.size());
      for (const auto& title : d->second) scores[title] += uniform;
    }
    emit(surface, std::move(scores));
    if (take_wiki) ++w;
    if (take_dict) ++d;
  }
  return out;
}

std::vector<std::byte> build_store_bytes(EmbeddingPair embeddings, const TitledPriors& priors, BuildReport& report,
                                         bool case_sensitive) {
  std::unordered_set<std::string_view> known(embeddings.entities.tokens.begin(), embeddings.entities.tokens.end());
  std::set<std::string> dropped;
  StoreContents contents;
  contents.case_sensitive = case_sensitive;
  report = BuildReport{};
  for (const auto& [surface, list] : priors) {
    std::vector<std::pair<std::string, double>> kept;
    for (const auto& entry : list) {
      if (known.count(entry.first)) {
        kept.push_back(entry);
      } else {
        dropped.insert(entry.first);
        ++report.dropped_entries;
      }
    }
    if (kept.empty()) continue;
    report.entries += kept.size();
    contents.priors.emplace(surface, std::move(kept));
  }
  report.dropped_entities = dropped.size();
  if (contents.priors.empty()) throw Error(ErrorCode::EmptyStore, "no prior entry has an entity embedding; refusing to write an empty store");
  report.surfaces = contents.priors.size();
  report.words = embeddings.words.size();
  report.entities = embeddings.entities.size();
  contents.words = std::move(embeddings.words);
  contents.entities = std::move(embeddings.entities);
  return serialize_store(contents);
}

BuildReport build_store(EmbeddingPair embeddings, const TitledPriors& priors, const std::filesystem::path& out_path,
                        bool case_sensitive) {
  BuildReport report;
  auto bytes = build_store_bytes(std::move(embeddings), priors, report, case_sensitive);
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot create store file " + out_path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for " + out_path.string());
  return report;
}

}  // namespace relink
