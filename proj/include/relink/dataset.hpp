#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace relink {

struct GoldMention {
  std::size_t start = 0;
  std::size_t length = 0;
  std::string entity;  // canonical title

  friend bool operator==(const GoldMention&, const GoldMention&) = default;
};

// Annotated document used for training, validation and scoring.
struct LabeledDocument {
  std::string id;
  std::string text;
  std::vector<GoldMention> mentions;  // sorted by start, non-overlapping

  friend bool operator==(const LabeledDocument&, const LabeledDocument&) = default;
};

using TrainingDoc = LabeledDocument;
using GoldDoc = LabeledDocument;

// Entity strings treated as out-of-KB and dropped on import.
bool is_nil_entity(std::string_view entity);

// One JSON object per line:
//   {"id": "...", "text": "...", "mentions": [{"start": 0, "length": 8, "entity": "Belgrade"}]}
// "id" and "mentions" are optional. Spans are validated against the text;
// NIL mentions are dropped; titles are canonicalized.
std::vector<LabeledDocument> read_jsonl_documents(std::istream& in, const std::string& source_name);
std::vector<LabeledDocument> read_jsonl_documents(const std::filesystem::path& path);
void write_jsonl_documents(std::ostream& out, const std::vector<LabeledDocument>& docs);

// CoNLL/AIDA-style token TSV: "-DOCSTART- (id)" starts a document, blank
// lines end sentences, and annotated tokens carry
// "token<TAB>B|I<TAB>mention<TAB>entity[...]". Tokens are joined with single
// spaces, sentences with newlines.
std::vector<LabeledDocument> read_aida_tsv(std::istream& in, const std::string& source_name);
std::vector<LabeledDocument> read_aida_tsv(const std::filesystem::path& path);

}  // namespace relink
