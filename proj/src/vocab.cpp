#include "ettag/vocab.hpp"

#include <istream>
#include <ostream>

#include "ettag/error.hpp"
#include "ettag/unicode.hpp"

namespace ettag {
namespace {

constexpr std::string_view kGlueLeft = "##";   // attaches to the previous piece
constexpr std::string_view kGlueRight = "@@";  // attaches to the next piece

enum class Glue { None, Left, Right };

struct Piece {
  Glue glue;
  std::string_view text;
};

Piece classify(std::string_view piece) {
  // A glued piece is exactly marker + one code point; core pieces can never
  // look like that because they start and end with a non-punctuation char.
  if (piece.size() > 2 && piece.starts_with(kGlueLeft)) {
    auto rest = piece.substr(2);
    if (unicode::length(rest) == 1) return {Glue::Left, rest};
  }
  if (piece.size() > 2 && piece.ends_with(kGlueRight)) {
    auto head = piece.substr(0, piece.size() - 2);
    if (unicode::length(head) == 1) return {Glue::Right, head};
  }
  return {Glue::None, piece};
}

void split_word(const std::vector<char32_t>& word, std::vector<std::string>& out) {
  std::size_t lead = 0;
  while (lead < word.size() && unicode::is_punctuation(word[lead])) ++lead;
  if (lead == word.size()) {
    out.push_back(unicode::encode(word[0]));
    for (std::size_t i = 1; i < word.size(); ++i) {
      out.push_back(std::string(kGlueLeft) + unicode::encode(word[i]));
    }
    return;
  }
  std::size_t trail = word.size();
  while (trail > lead && unicode::is_punctuation(word[trail - 1])) --trail;

  for (std::size_t i = 0; i < lead; ++i) {
    out.push_back(unicode::encode(word[i]) + std::string(kGlueRight));
  }
  std::string core;
  for (std::size_t i = lead; i < trail; ++i) unicode::append(core, word[i]);
  out.push_back(std::move(core));
  for (std::size_t i = trail; i < word.size(); ++i) {
    out.push_back(std::string(kGlueLeft) + unicode::encode(word[i]));
  }
}

}  // namespace

std::vector<std::string> PunctuationSplitTokenizer::split(std::string_view text) const {
  std::vector<std::string> out;
  std::vector<char32_t> word;
  for (char32_t cp : unicode::decode(text)) {
    if (unicode::is_whitespace(cp)) {
      if (!word.empty()) split_word(word, out);
      word.clear();
    } else {
      word.push_back(cp);
    }
  }
  if (!word.empty()) split_word(word, out);
  return out;
}

std::string PunctuationSplitTokenizer::join(std::span<const std::string> pieces) const {
  std::string out;
  bool attach_next = false;
  for (const auto& raw : pieces) {
    const Piece p = classify(raw);
    if (p.glue != Glue::Left && !out.empty() && !attach_next) out.push_back(' ');
    out.append(p.text);
    attach_next = p.glue == Glue::Right;
  }
  return out;
}

const Tokenizer& default_tokenizer() {
  static const PunctuationSplitTokenizer instance;
  return instance;
}

Vocabulary::Vocabulary() {
  for (auto s : reserved::kStrings) pieces_.emplace_back(s);
}

TokenId Vocabulary::add(std::string piece) {
  auto [it, inserted] = index_.emplace(piece, static_cast<TokenId>(pieces_.size()));
  if (inserted) pieces_.push_back(std::move(piece));
  return it->second;
}

Vocabulary Vocabulary::from_pieces(std::span<const std::string> content) {
  Vocabulary v;
  for (const auto& p : content) {
    for (auto r : reserved::kStrings) {
      if (p == r) {
        throw Error(ErrorKind::InvalidArgument, "content piece collides with reserved token " + p);
      }
    }
    v.add(p);
  }
  return v;
}

std::optional<TokenId> Vocabulary::find(std::string_view piece) const {
  auto it = index_.find(std::string(piece));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t Vocabulary::content_hash() const {
  ContentHash h;
  h.update_u64(pieces_.size());
  for (const auto& p : pieces_) h.update(p);
  return h.value();
}

void Vocabulary::dump(std::ostream& out) const {
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    out << i << '\t' << pieces_[i] << '\n';
  }
}

Vocabulary Vocabulary::load(std::istream& in) {
  Vocabulary v;
  std::string line;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error(ErrorKind::SchemaError, "vocabulary line without a tab");
    }
    std::size_t id = 0;
    try {
      id = std::stoul(line.substr(0, tab));
    } catch (const std::exception&) {
      throw Error(ErrorKind::SchemaError, "vocabulary line with a non-numeric id");
    }
    if (id != expected) {
      throw Error(ErrorKind::SchemaError, "vocabulary ids must be contiguous from 0");
    }
    std::string piece = line.substr(tab + 1);
    if (id < reserved::kCount) {
      if (piece != reserved::kStrings[id]) {
        throw Error(ErrorKind::SchemaError, "vocabulary reserved token mismatch at id " +
                                                std::to_string(id));
      }
    } else if (v.add(std::move(piece)) != id) {
      throw Error(ErrorKind::SchemaError, "duplicate vocabulary token at id " + std::to_string(id));
    }
    ++expected;
  }
  if (expected < reserved::kCount) {
    throw Error(ErrorKind::SchemaError, "vocabulary is missing reserved tokens");
  }
  return v;
}

TokenSeq tokenize(std::string_view text, const Vocabulary& vocab, TokenizeMode mode,
                  const Tokenizer& tokenizer) {
  const std::string normalized = unicode::nfc(text);
  TokenSeq out;
  for (const auto& piece : tokenizer.split(normalized)) {
    if (auto id = vocab.find(piece)) {
      out.push_back(*id);
    } else if (mode == TokenizeMode::Input) {
      out.push_back(reserved::kUnk);
    } else {
      throw Error(ErrorKind::OutputOOV, "token \"" + piece + "\" is not in the output vocabulary");
    }
  }
  return out;
}

std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab,
                       const Tokenizer& tokenizer) {
  std::vector<std::string> pieces;
  pieces.reserve(ids.size());
  for (TokenId id : ids) {
    if (is_reserved(id) || id >= vocab.size()) {
      throw Error(ErrorKind::InvalidArgument,
                  "cannot detokenize token id " + std::to_string(id));
    }
    pieces.push_back(vocab.piece(id));
  }
  return tokenizer.join(pieces);
}

Vocabulary build_output_vocabulary(const EntityCatalog& catalog, const Tokenizer& tokenizer) {
  if (catalog.empty()) {
    throw Error(ErrorKind::EmptyCatalog, "cannot build an output vocabulary from an empty catalog");
  }
  Vocabulary v;
  for (const auto& name : catalog.names()) {
    for (auto& piece : tokenizer.split(name.view())) v.add(std::move(piece));
  }
  return v;
}

Vocabulary build_input_vocabulary(std::span<const std::string> corpus, std::size_t min_count,
                                  const Tokenizer& tokenizer) {
  std::unordered_map<std::string, std::size_t> counts;
  std::vector<std::string> order;
  for (const auto& doc : corpus) {
    for (auto& piece : tokenizer.split(unicode::nfc(doc))) {
      auto [it, inserted] = counts.emplace(piece, 0);
      if (inserted) order.push_back(std::move(piece));
      ++it->second;
    }
  }
  Vocabulary v;
  for (auto& piece : order) {
    if (counts[piece] >= min_count) v.add(std::move(piece));
  }
  return v;
}

Vocabularies build_vocabularies(const EntityCatalog& catalog, std::span<const std::string> corpus,
                                std::size_t min_count, const Tokenizer& tokenizer) {
  return {build_input_vocabulary(corpus, min_count, tokenizer),
          build_output_vocabulary(catalog, tokenizer)};
}

}  // namespace ettag
