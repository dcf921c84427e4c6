#include "relink/text.hpp"

#include <algorithm>
#include <memory>

#include <unicode/brkiter.h>
#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

namespace relink {
namespace {

icu::UnicodeString from_utf8(std::string_view text) {
  return icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
}

std::string to_utf8(const icu::UnicodeString& text) {
  std::string out;
  text.toUTF8String(out);
  return out;
}

icu::UnicodeString nfc(const icu::UnicodeString& text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* normalizer = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) return text;
  icu::UnicodeString out = normalizer->normalize(text, status);
  return U_FAILURE(status) ? text : out;
}

// Collapses whitespace runs into a single U+0020 and trims both ends.
icu::UnicodeString collapse_whitespace(const icu::UnicodeString& text) {
  icu::UnicodeString out;
  bool pending_space = false;
  for (int32_t i = 0; i < text.length();) {
    UChar32 c = text.char32At(i);
    i += U16_LENGTH(c);
    if (u_isUWhiteSpace(c)) {
      pending_space = !out.isEmpty();
      continue;
    }
    if (pending_space) out.append(static_cast<UChar>(0x20));
    pending_space = false;
    out.append(c);
  }
  return out;
}

}  // namespace

std::string normalize_surface(std::string_view text, bool case_sensitive) {
  icu::UnicodeString s = nfc(from_utf8(text));
  if (!case_sensitive) s.toLower(icu::Locale::getRoot());
  return to_utf8(collapse_whitespace(s));
}

std::string to_lower(std::string_view text) {
  icu::UnicodeString s = from_utf8(text);
  s.toLower(icu::Locale::getRoot());
  return to_utf8(s);
}

std::string canonical_title(std::string_view title) {
  if (auto hash = title.find('#'); hash != std::string_view::npos) title = title.substr(0, hash);
  icu::UnicodeString s = collapse_whitespace(nfc(from_utf8(title)));
  s.findAndReplace(icu::UnicodeString(static_cast<UChar>(0x20)), icu::UnicodeString(static_cast<UChar>(0x5F)));
  if (!s.isEmpty()) {
    UChar32 first = s.char32At(0);
    UChar32 upper = u_toupper(first);
    if (upper != first) s.replace(0, U16_LENGTH(first), upper);
  }
  return to_utf8(s);
}

std::size_t count_code_points(std::string_view utf8) {
  return static_cast<std::size_t>(from_utf8(utf8).countChar32());
}

Document::Document(std::string_view utf8) {
  icu::UnicodeString u = from_utf8(utf8);
  // Re-encode so that invalid input bytes are replaced consistently.
  text_ = to_utf8(u);

  std::vector<std::size_t> cp_of_unit(static_cast<std::size_t>(u.length()) + 1, 0);
  byte_offsets_.reserve(static_cast<std::size_t>(u.length()) + 1);
  std::size_t cp = 0;
  std::size_t byte = 0;
  for (int32_t i = 0; i < u.length();) {
    UChar32 c = u.char32At(i);
    int32_t units = U16_LENGTH(c);
    for (int32_t k = 0; k < units; ++k) cp_of_unit[static_cast<std::size_t>(i + k)] = cp;
    byte_offsets_.push_back(byte);
    byte += static_cast<std::size_t>(U8_LENGTH(c));
    i += units;
    ++cp;
  }
  cp_of_unit[static_cast<std::size_t>(u.length())] = cp;
  byte_offsets_.push_back(byte);

  UErrorCode status = U_ZERO_ERROR;
  std::unique_ptr<icu::BreakIterator> words(icu::BreakIterator::createWordInstance(icu::Locale::getRoot(), status));
  if (U_FAILURE(status) || !words) return;
  words->setText(u);
  int32_t begin = words->first();
  for (int32_t end = words->next(); end != icu::BreakIterator::DONE; begin = end, end = words->next()) {
    if (words->getRuleStatus() == UBRK_WORD_NONE) continue;
    Token token;
    token.start = cp_of_unit[static_cast<std::size_t>(begin)];
    token.length = cp_of_unit[static_cast<std::size_t>(end)] - token.start;
    icu::UnicodeString piece(u, begin, end - begin);
    token.text = to_utf8(piece);
    tokens_.push_back(std::move(token));
  }
}

std::string Document::substring(std::size_t start, std::size_t length) const {
  std::size_t n = this->length();
  start = std::min(start, n);
  std::size_t stop = std::min(n, start + std::min(length, n - start));
  return text_.substr(byte_offsets_[start], byte_offsets_[stop] - byte_offsets_[start]);
}

std::pair<std::size_t, std::size_t> Document::token_range(std::size_t start, std::size_t length) const {
  std::size_t stop = start + length;
  auto first = std::partition_point(tokens_.begin(), tokens_.end(), [&](const Token& t) { return t.end() <= start; });
  auto last = std::partition_point(first, tokens_.end(), [&](const Token& t) { return t.start < stop; });
  return {static_cast<std::size_t>(first - tokens_.begin()), static_cast<std::size_t>(last - tokens_.begin())};
}

std::vector<Token> tokenize(std::string_view utf8) { return Document(utf8).tokens(); }

}  // namespace relink
