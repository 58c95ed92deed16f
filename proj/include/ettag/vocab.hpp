#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ettag/catalog.hpp"

namespace ettag {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

namespace reserved {
inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kSep = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr std::size_t kCount = 4;
inline constexpr std::string_view kStrings[kCount] = {"[BOS]", "[EOS]", "[SEP]", "[UNK]"};
}  // namespace reserved

inline bool is_reserved(TokenId t) { return t < reserved::kCount; }

/// Splits text into pieces and joins pieces back. Implementations must
/// guarantee join(split(n)) == n for canonical entity names and must never
/// produce a piece equal to one of reserved::kStrings.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<std::string> split(std::string_view text) const = 0;
  virtual std::string join(std::span<const std::string> pieces) const = 0;
};

// Whitespace split, then leading/trailing punctuation peeled off one code
// point at a time. Peeled pieces carry glue markers so join() can restore
// spacing: "(album)" -> "(@@" "album" "##)".
class PunctuationSplitTokenizer final : public Tokenizer {
 public:
  std::vector<std::string> split(std::string_view text) const override;
  std::string join(std::span<const std::string> pieces) const override;
};

const Tokenizer& default_tokenizer();

class Vocabulary {
 public:
  Vocabulary();

  /// Reserved tokens first, then the given content pieces in order.
  static Vocabulary from_pieces(std::span<const std::string> content);

  std::size_t size() const noexcept { return pieces_.size(); }
  const std::string& piece(TokenId id) const { return pieces_.at(id); }
  std::span<const std::string> pieces() const noexcept { return pieces_; }

  /// Content pieces only; reserved ids are never returned.
  std::optional<TokenId> find(std::string_view piece) const;

  std::uint64_t content_hash() const;

  /// TSV `token_id<TAB>token`, reserved tokens first.
  void dump(std::ostream& out) const;
  static Vocabulary load(std::istream& in);

 private:
  friend Vocabulary build_output_vocabulary(const EntityCatalog&, const Tokenizer&);
  friend Vocabulary build_input_vocabulary(std::span<const std::string>, std::size_t,
                                           const Tokenizer&);

  TokenId add(std::string piece);

  std::vector<std::string> pieces_;
  std::unordered_map<std::string, TokenId> index_;
};

enum class TokenizeMode { Input, Output };

/// Input mode maps unknown pieces to UNK; output mode throws OutputOOV.
TokenSeq tokenize(std::string_view text, const Vocabulary& vocab, TokenizeMode mode,
                  const Tokenizer& tokenizer = default_tokenizer());

std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab,
                       const Tokenizer& tokenizer = default_tokenizer());

struct Vocabularies {
  Vocabulary input;
  Vocabulary output;
};

Vocabulary build_output_vocabulary(const EntityCatalog& catalog,
                                   const Tokenizer& tokenizer = default_tokenizer());

Vocabulary build_input_vocabulary(std::span<const std::string> corpus, std::size_t min_count = 1,
                                  const Tokenizer& tokenizer = default_tokenizer());

/// Throws EmptyCatalog.
Vocabularies build_vocabularies(const EntityCatalog& catalog, std::span<const std::string> corpus,
                                std::size_t min_count = 1,
                                const Tokenizer& tokenizer = default_tokenizer());

}  // namespace ettag
