#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace relink {

// Unicode NFC, whitespace runs collapsed to one space, trimmed, and
// lowercased unless `case_sensitive` is set. Total on any input; invalid
// UTF-8 sequences become U+FFFD.
std::string normalize_surface(std::string_view text, bool case_sensitive = false);

// Wikipedia-style title canonicalization: trims, maps spaces to
// underscores, drops a "#section" suffix and uppercases the first code point.
std::string canonical_title(std::string_view title);

std::string to_lower(std::string_view text);

struct Token {
  std::string text;    // UTF-8
  std::size_t start;   // code-point offset into the document
  std::size_t length;  // code points

  std::size_t end() const { return start + length; }
};

// A document with code-point addressing and word tokens. Offsets everywhere
// in the public API are Unicode code-point offsets.
class Document {
 public:
  Document() = default;
  explicit Document(std::string_view utf8);

  const std::string& text() const { return text_; }
  std::size_t length() const { return byte_offsets_.empty() ? 0 : byte_offsets_.size() - 1; }
  const std::vector<Token>& tokens() const { return tokens_; }

  // UTF-8 substring for a code-point range; clamps to the document end.
  std::string substring(std::size_t start, std::size_t length) const;

  // Half-open token index range [first, last) of tokens overlapping the span.
  std::pair<std::size_t, std::size_t> token_range(std::size_t start, std::size_t length) const;

 private:
  std::string text_;
  std::vector<std::size_t> byte_offsets_;  // code point -> byte offset, plus end sentinel
  std::vector<Token> tokens_;
};

// Word tokens via Unicode word-boundary rules. Whitespace and punctuation
// segments are dropped, so punctuation always splits tokens.
std::vector<Token> tokenize(std::string_view utf8);

std::size_t count_code_points(std::string_view utf8);

}  // namespace relink
