#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "relink/store.hpp"
#include "relink/text.hpp"

namespace relink {

// A candidate mention; offsets and length in code points.
struct Span {
  std::size_t start = 0;
  std::size_t length = 0;
  std::optional<double> md_confidence;
  std::optional<std::string> tag;

  std::size_t end() const { return start + length; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct DetectorConfig {
  std::size_t max_ngram = 5;
  // Surfaces whose highest prior is below this are not proposed.
  double min_link_probability = 0.001;
};

// Matches every token n-gram (n <= max_ngram) against the store's surface
// index. Overlaps resolve longest-first (token count, then character length),
// then leftmost. Output is sorted by start.
std::vector<Span> detect_gazetteer(const Document& doc, const KnowledgeStore& store, const DetectorConfig& config = {});

// Validates externally produced spans against the document and returns them
// sorted by start. Throws OutOfBounds / Overlap naming the input indices.
std::vector<Span> adapt_external_spans(const Document& doc, std::vector<Span> spans);

// "start<TAB>length[<TAB>tag[<TAB>confidence]]" lines.
std::vector<Span> read_span_tsv(std::istream& in, const std::string& source_name);
std::vector<Span> read_span_tsv(const std::filesystem::path& path);

}  // namespace relink
