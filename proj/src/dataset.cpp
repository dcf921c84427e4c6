#include "relink/dataset.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "relink/error.hpp"
#include "relink/mention.hpp"
#include "relink/text.hpp"

namespace relink {
namespace {

using nlohmann::json;

// Canonicalizes titles, drops NIL mentions and validates spans.
void finalize(LabeledDocument& doc, const std::string& where) {
  std::vector<GoldMention> kept;
  for (auto& m : doc.mentions) {
    if (is_nil_entity(m.entity)) continue;
    m.entity = canonical_title(m.entity);
    kept.push_back(std::move(m));
  }
  Document parsed(doc.text);
  std::vector<Span> spans;
  spans.reserve(kept.size());
  for (const auto& m : kept) spans.push_back(Span{m.start, m.length, std::nullopt, std::nullopt});
  try {
    adapt_external_spans(parsed, spans);
  } catch (const Error& e) {
    throw Error(e.code(), where + ": " + e.what());
  }
  std::stable_sort(kept.begin(), kept.end(), [](const GoldMention& a, const GoldMention& b) { return a.start < b.start; });
  doc.mentions = std::move(kept);
}

}  // namespace

bool is_nil_entity(std::string_view entity) {
  return entity.empty() || entity == "NIL" || entity == "--NME--" || entity == "nil";
}

std::vector<LabeledDocument> read_jsonl_documents(std::istream& in, const std::string& source_name) {
  std::vector<LabeledDocument> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source_name + ":" + std::to_string(line_no);
    LabeledDocument doc;
    try {
      json record = json::parse(line);
      if (!record.is_object() || !record.contains("text") || !record["text"].is_string()) {
        throw Error(ErrorCode::MalformedLine, where + ": record needs a string \"text\" field");
      }
      doc.text = record["text"].get<std::string>();
      if (record.contains("id")) doc.id = record["id"].is_string() ? record["id"].get<std::string>() : record["id"].dump();
      if (doc.id.empty()) doc.id = std::to_string(docs.size());
      if (record.contains("mentions")) {
        for (const auto& m : record.at("mentions")) {
          GoldMention gm;
          gm.start = m.at("start").get<std::size_t>();
          gm.length = m.at("length").get<std::size_t>();
          gm.entity = m.contains("entity") && m["entity"].is_string() ? m["entity"].get<std::string>() : std::string();
          doc.mentions.push_back(std::move(gm));
        }
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedLine, where + ": " + e.what());
    }
    finalize(doc, where);
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<LabeledDocument> read_jsonl_documents(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open " + path.string());
  return read_jsonl_documents(in, path.string());
}

void write_jsonl_documents(std::ostream& out, const std::vector<LabeledDocument>& docs) {
  for (const auto& doc : docs) {
    json mentions = json::array();
    for (const auto& m : doc.mentions) mentions.push_back({{"start", m.start}, {"length", m.length}, {"entity", m.entity}});
    json record = {{"id", doc.id}, {"text", doc.text}, {"mentions", mentions}};
    out << record.dump() << '\n';
  }
}

std::vector<LabeledDocument> read_aida_tsv(std::istream& in, const std::string& source_name) {
  std::vector<LabeledDocument> docs;
  LabeledDocument current;
  bool open = false;
  bool sentence_start = true;
  std::size_t cursor = 0;  // code points emitted so far
  GoldMention* active = nullptr;

  auto flush = [&]() {
    if (open) {
      finalize(current, source_name + " document " + current.id);
      docs.push_back(std::move(current));
    }
    current = LabeledDocument{};
    cursor = 0;
    sentence_start = true;
    active = nullptr;
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.starts_with("-DOCSTART-")) {
      flush();
      open = true;
      auto lp = line.find('(');
      auto rp = line.rfind(')');
      current.id = lp != std::string::npos && rp != std::string::npos && rp > lp ? line.substr(lp + 1, rp - lp - 1)
                                                                                 : std::to_string(docs.size());
      continue;
    }
    if (!open) {
      open = true;
      current.id = std::to_string(docs.size());
    }
    if (line.empty()) {
      if (!current.text.empty() && !sentence_start) {
        current.text += '\n';
        ++cursor;
      }
      sentence_start = true;
      active = nullptr;
      continue;
    }
    std::vector<std::string> fields;
    std::size_t pos = 0;
    for (std::size_t tab; (tab = line.find('\t', pos)) != std::string::npos; pos = tab + 1) fields.push_back(line.substr(pos, tab - pos));
    fields.push_back(line.substr(pos));
    const std::string& token = fields[0];
    if (token.empty()) throw Error(ErrorCode::MalformedLine, source_name + ":" + std::to_string(line_no) + ": empty token");

    if (!sentence_start) {
      current.text += ' ';
      ++cursor;
    }
    sentence_start = false;
    const std::size_t token_start = cursor;
    const std::size_t token_length = count_code_points(token);
    current.text += token;
    cursor += token_length;

    if (fields.size() >= 3 && (fields[1] == "B" || fields[1] == "I")) {
      std::string entity = fields.size() >= 4 ? fields[3] : std::string();
      if (fields[1] == "I" && active != nullptr) {
        active->length = token_start + token_length - active->start;
      } else {
        current.mentions.push_back(GoldMention{token_start, token_length, entity});
        active = &current.mentions.back();
      }
    } else {
      active = nullptr;
    }
  }
  flush();
  return docs;
}

std::vector<LabeledDocument> read_aida_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open " + path.string());
  return read_aida_tsv(in, path.string());
}

}  // namespace relink
