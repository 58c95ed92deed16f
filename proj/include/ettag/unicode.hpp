#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

// Thin UTF-8 helpers over ICU. Offsets exposed here are Unicode scalar-value
// offsets unless the name says "byte".
namespace ettag::unicode {

bool is_valid_utf8(std::string_view text);

/// Decodes UTF-8 into scalar values. Throws Error(InvalidArgument) on
/// malformed input.
std::vector<char32_t> decode(std::string_view text);
std::string encode(char32_t cp);
void append(std::string& out, char32_t cp);

bool is_whitespace(char32_t cp);
bool is_punctuation(char32_t cp);

/// NFC normalization. Input must be valid UTF-8.
std::string nfc(std::string_view text);

std::size_t length(std::string_view text);

/// Byte offset of the given scalar-value offset; offset == length() maps to
/// text.size().
std::size_t byte_offset(std::string_view text, std::size_t scalar_offset);

/// Byte offsets of every scalar value boundary, size length()+1.
std::vector<std::size_t> boundaries(std::string_view text);

}  // namespace ettag::unicode

namespace ettag {

/// 64-bit FNV-1a, used for cache and checkpoint content hashes.
class ContentHash {
 public:
  void update(std::string_view bytes);
  void update_u64(std::uint64_t v);
  std::uint64_t value() const { return state_; }

 private:
  std::uint64_t state_ = 14695981039346656037ULL;
};

}  // namespace ettag
