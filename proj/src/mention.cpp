#include "relink/mention.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>

#include "relink/error.hpp"

namespace relink {

std::vector<Span> detect_gazetteer(const Document& doc, const KnowledgeStore& store, const DetectorConfig& config) {
  struct Match {
    std::size_t first_token;
    std::size_t token_count;
    std::size_t start;
    std::size_t length;
    double top_prior;
  };

  const auto& tokens = doc.tokens();
  const std::size_t max_n = std::max<std::size_t>(1, config.max_ngram);
  std::vector<Match> matches;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (std::size_t n = 1; n <= max_n && i + n <= tokens.size(); ++n) {
      std::size_t start = tokens[i].start;
      std::size_t length = tokens[i + n - 1].end() - start;
      auto entries = store.lookup_prior(doc.substring(start, length));
      if (!entries.empty()) matches.push_back({i, n, start, length, entries.front().prior});
    }
  }

  std::sort(matches.begin(), matches.end(), [](const Match& a, const Match& b) {
    if (a.token_count != b.token_count) return a.token_count > b.token_count;
    if (a.length != b.length) return a.length > b.length;
    return a.start < b.start;
  });

  // Overlaps are resolved before thresholding so that a higher threshold can
  // only remove spans, never expose shorter ones.
  std::vector<bool> taken(tokens.size(), false);
  std::vector<Span> spans;
  for (const Match& m : matches) {
    auto first = taken.begin() + static_cast<std::ptrdiff_t>(m.first_token);
    auto last = first + static_cast<std::ptrdiff_t>(m.token_count);
    if (std::any_of(first, last, [](bool b) { return b; })) continue;
    std::fill(first, last, true);
    if (m.top_prior < config.min_link_probability) continue;
    spans.push_back(Span{m.start, m.length, std::nullopt, std::nullopt});
  }
  std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) { return a.start < b.start; });
  return spans;
}

std::vector<Span> adapt_external_spans(const Document& doc, std::vector<Span> spans) {
  const std::size_t doc_length = doc.length();
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const Span& s = spans[i];
    if (s.length == 0 || s.start > doc_length || s.length > doc_length - s.start) {
      throw Error(ErrorCode::OutOfBounds, "span " + std::to_string(i) + " (" + std::to_string(s.start) + ", " + std::to_string(s.length) +
                                              ") lies outside the document of length " + std::to_string(doc_length));
    }
  }
  std::vector<std::size_t> order(spans.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return spans[a].start < spans[b].start; });
  for (std::size_t k = 1; k < order.size(); ++k) {
    const Span& prev = spans[order[k - 1]];
    const Span& cur = spans[order[k]];
    if (cur.start < prev.end()) {
      throw Error(ErrorCode::Overlap, "spans " + std::to_string(std::min(order[k - 1], order[k])) + " and " +
                                          std::to_string(std::max(order[k - 1], order[k])) + " overlap");
    }
  }
  std::vector<Span> sorted;
  sorted.reserve(spans.size());
  for (std::size_t idx : order) sorted.push_back(std::move(spans[idx]));
  return sorted;
}

std::vector<Span> read_span_tsv(std::istream& in, const std::string& source_name) {
  std::vector<Span> spans;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (std::size_t tab; (tab = rest.find('\t')) != std::string_view::npos; rest.remove_prefix(tab + 1)) {
      fields.push_back(rest.substr(0, tab));
    }
    fields.push_back(rest);
    auto malformed = [&](const std::string& why) {
      return Error(ErrorCode::MalformedLine, source_name + ":" + std::to_string(line_no) + ": " + why);
    };
    if (fields.size() < 2 || fields.size() > 4) throw malformed("expected start<TAB>length[<TAB>tag[<TAB>confidence]]");
    auto parse_size = [&](std::string_view f) {
      std::size_t v = 0;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size()) throw malformed("bad integer '" + std::string(f) + "'");
      return v;
    };
    Span span;
    span.start = parse_size(fields[0]);
    span.length = parse_size(fields[1]);
    if (fields.size() >= 3 && !fields[2].empty()) span.tag = std::string(fields[2]);
    if (fields.size() == 4) {
      double c = 0;
      auto [ptr, ec] = std::from_chars(fields[3].data(), fields[3].data() + fields[3].size(), c);
      if (ec != std::errc() || ptr != fields[3].data() + fields[3].size()) throw malformed("bad confidence");
      span.md_confidence = c;
    }
    spans.push_back(std::move(span));
  }
  return spans;
}

std::vector<Span> read_span_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open " + path.string());
  return read_span_tsv(in, path.string());
}

}  // namespace relink
