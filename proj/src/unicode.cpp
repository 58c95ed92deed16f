#include "ettag/unicode.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "ettag/error.hpp"

namespace ettag::unicode {
namespace {

bool all_ascii(std::string_view text) {
  for (unsigned char c : text) {
    if (c >= 0x80) return false;
  }
  return true;
}

template <typename F>
void walk(std::string_view text, F&& on_codepoint) {
  const auto* s = reinterpret_cast<const std::uint8_t*>(text.data());
  const auto n = static_cast<std::int32_t>(text.size());
  std::int32_t i = 0;
  while (i < n) {
    const std::int32_t start = i;
    UChar32 c;
    U8_NEXT(s, i, n, c);
    if (c < 0) {
      throw Error(ErrorKind::InvalidArgument,
                  "malformed UTF-8 at byte " + std::to_string(start));
    }
    on_codepoint(static_cast<char32_t>(c), static_cast<std::size_t>(start));
  }
}

}  // namespace

bool is_valid_utf8(std::string_view text) {
  if (all_ascii(text)) return true;
  const auto* s = reinterpret_cast<const std::uint8_t*>(text.data());
  const auto n = static_cast<std::int32_t>(text.size());
  std::int32_t i = 0;
  while (i < n) {
    UChar32 c;
    U8_NEXT(s, i, n, c);
    if (c < 0) return false;
  }
  return true;
}

std::vector<char32_t> decode(std::string_view text) {
  std::vector<char32_t> out;
  out.reserve(text.size());
  walk(text, [&](char32_t cp, std::size_t) { out.push_back(cp); });
  return out;
}

void append(std::string& out, char32_t cp) {
  std::uint8_t buf[U8_MAX_LENGTH];
  std::int32_t len = 0;
  UBool error = false;
  U8_APPEND(buf, len, U8_MAX_LENGTH, static_cast<UChar32>(cp), error);
  if (error) {
    throw Error(ErrorKind::InvalidArgument, "cannot encode code point as UTF-8");
  }
  out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(len));
}

std::string encode(char32_t cp) {
  std::string out;
  append(out, cp);
  return out;
}

bool is_whitespace(char32_t cp) {
  if (cp < 0x80) {
    return cp == ' ' || (cp >= 0x09 && cp <= 0x0D);
  }
  return u_isUWhiteSpace(static_cast<UChar32>(cp));
}

bool is_punctuation(char32_t cp) {
  return u_ispunct(static_cast<UChar32>(cp));
}

std::string nfc(std::string_view text) {
  if (all_ascii(text)) return std::string(text);
  if (!is_valid_utf8(text)) {
    throw Error(ErrorKind::InvalidArgument, "malformed UTF-8");
  }
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) {
    throw Error(ErrorKind::InvalidArgument, "ICU NFC normalizer unavailable");
  }
  const auto src = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<std::int32_t>(text.size())));
  icu::UnicodeString dst = norm->normalize(src, status);
  if (U_FAILURE(status)) {
    throw Error(ErrorKind::InvalidArgument, "NFC normalization failed");
  }
  std::string out;
  dst.toUTF8String(out);
  return out;
}

std::size_t length(std::string_view text) {
  std::size_t n = 0;
  walk(text, [&](char32_t, std::size_t) { ++n; });
  return n;
}

std::size_t byte_offset(std::string_view text, std::size_t scalar_offset) {
  std::size_t seen = 0;
  std::size_t result = text.size();
  bool found = false;
  walk(text, [&](char32_t, std::size_t at) {
    if (!found && seen == scalar_offset) {
      result = at;
      found = true;
    }
    ++seen;
  });
  if (!found && scalar_offset != seen) {
    throw Error(ErrorKind::InvalidArgument, "scalar offset past end of text");
  }
  return result;
}

std::vector<std::size_t> boundaries(std::string_view text) {
  std::vector<std::size_t> out;
  out.reserve(text.size() + 1);
  walk(text, [&](char32_t, std::size_t at) { out.push_back(at); });
  out.push_back(text.size());
  return out;
}

}  // namespace ettag::unicode

namespace ettag {

void ContentHash::update(std::string_view bytes) {
  for (unsigned char c : bytes) {
    state_ ^= c;
    state_ *= 1099511628211ULL;
  }
  // length terminator keeps ("ab","c") distinct from ("a","bc")
  update_u64(bytes.size());
}

void ContentHash::update_u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    state_ ^= (v >> (8 * i)) & 0xFF;
    state_ *= 1099511628211ULL;
  }
}

}  // namespace ettag
