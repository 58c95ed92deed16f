#pragma once

// Independent oracles and generators shared by the unit and acceptance
// tests. Nothing here calls into the trie or the decoder.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ettag/catalog.hpp"
#include "ettag/decoding.hpp"
#include "ettag/trie.hpp"
#include "ettag/vocab.hpp"

namespace ettag::testing {

inline std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

/// Random catalog of `size` names built from a small word pool, so names
/// share leading words. At least `overlaps` names are strict token prefixes
/// of another name.
inline std::vector<std::string> random_names(std::mt19937_64& rng, std::size_t size,
                                             std::size_t overlaps = 3) {
  static const std::vector<std::string> pool = {
      "Black", "hole", "Solar", "System", "Earth", "Parsec", "Light-year", "North", "Sea",
      "Port",  "Ellis", "(album)", "&",     "St.",   "Louis", "Blues",     "A",     "B"};
  std::set<std::string> seen;
  std::vector<std::string> names;
  auto add = [&](const std::string& n) {
    if (names.size() < size && seen.insert(n).second) names.push_back(n);
  };
  std::size_t made = 0;
  while (made < overlaps && names.size() + 2 <= size) {
    std::string base = pool[pick(rng, pool.size())];
    if (pick(rng, 2) == 0) base += " " + pool[pick(rng, pool.size())];
    const std::string longer = base + " " + pool[pick(rng, pool.size())];
    if (seen.count(base) || seen.count(longer)) continue;
    add(base);
    add(longer);
    ++made;
  }
  std::size_t guard = 0;
  while (names.size() < size && guard++ < 100000) {
    std::string n = pool[pick(rng, pool.size())];
    const std::size_t words = 1 + pick(rng, 3);
    for (std::size_t i = 1; i < words; ++i) n += " " + pool[pick(rng, pool.size())];
    add(n);
  }
  return names;
}

struct Fixture {
  EntityCatalog catalog;
  Vocabulary vocab;
  TokenTrie trie;
  std::vector<TokenSeq> name_tokens;  // by entity id

  explicit Fixture(const std::vector<std::string>& names)
      : catalog(EntityCatalog::from_names(names)),
        vocab(build_output_vocabulary(catalog)),
        trie(TokenTrie::build(catalog, vocab)) {
    for (const auto& n : catalog.names()) {
      name_tokens.push_back(tokenize(n.view(), vocab, TokenizeMode::Output));
    }
  }
};

/// Every output sequence the decoding language admits, by direct
/// enumeration of ordered entity tuples.
inline std::set<TokenSeq> brute_force_language(const std::vector<TokenSeq>& names,
                                               const DecodeConfig& c) {
  std::set<TokenSeq> out;
  if (c.allow_empty && c.max_tokens >= 1) out.insert({reserved::kEos});
  std::vector<std::size_t> chosen;
  auto rec = [&](auto&& self, TokenSeq prefix) -> void {
    for (std::size_t e = 0; e < names.size(); ++e) {
      if (c.no_repeat && std::find(chosen.begin(), chosen.end(), e) != chosen.end()) continue;
      TokenSeq seq = prefix;
      if (!chosen.empty()) seq.push_back(reserved::kSep);
      seq.insert(seq.end(), names[e].begin(), names[e].end());
      if (seq.size() + 1 > c.max_tokens) continue;
      chosen.push_back(e);
      TokenSeq done = seq;
      done.push_back(reserved::kEos);
      out.insert(done);
      if (chosen.size() < c.max_entities) self(self, seq);
      chosen.pop_back();
    }
  };
  rec(rec, {});
  return out;
}

/// Deterministic pseudo-random scorer: logits are a hash of (seed, prefix,
/// token), scaled by `temperature`, then log-softmaxed.
class HashScorer final : public Scorer {
 public:
  HashScorer(std::size_t vocab, std::uint64_t seed, double temperature = 3.0)
      : vocab_(vocab), seed_(seed), temperature_(temperature) {}

  std::size_t vocab_size() const override { return vocab_; }
  std::vector<double> encode(std::span<const TokenId>) const override { return {}; }

  void next_logprobs(std::span<const double>, std::span<const TokenId> prefix,
                     std::span<double> out) const override {
    std::uint64_t h = seed_ * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL;
    for (TokenId t : prefix) h = mix(h ^ (t + 0x1234567ULL));
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < vocab_; ++v) {
      const std::uint64_t x = mix(h ^ (v * 0xBF58476D1CE4E5B9ULL));
      out[v] = temperature_ * (static_cast<double>(x >> 11) * 0x1.0p-53);
      hi = std::max(hi, out[v]);
    }
    double sum = 0.0;
    for (double v : out) sum += std::exp(v - hi);
    const double lse = hi + std::log(sum);
    for (double& v : out) v -= lse;
  }

  static std::uint64_t mix(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
  }

 private:
  std::size_t vocab_;
  std::uint64_t seed_;
  double temperature_;
};

/// Token ids legal after `prefix` in `language`: the next token of every
/// member that extends the prefix.
inline std::set<TokenId> next_tokens(const std::set<TokenSeq>& language, const TokenSeq& prefix) {
  std::set<TokenId> out;
  for (const auto& s : language) {
    if (s.size() > prefix.size() && std::equal(prefix.begin(), prefix.end(), s.begin())) {
      out.insert(s[prefix.size()]);
    }
  }
  return out;
}

using NextTable = std::map<TokenSeq, std::set<TokenId>>;

/// next_tokens for every proper prefix of every member, computed once.
inline NextTable next_token_table(const std::set<TokenSeq>& language) {
  NextTable table;
  for (const auto& s : language) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      table[TokenSeq(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(i))].insert(s[i]);
    }
  }
  return table;
}

/// Scores a full sequence the way the decoder does, with the allowed set at
/// each step taken from the language itself.
inline double sequence_score(const Scorer& scorer, const NextTable& table, const TokenSeq& seq,
                             bool renormalize) {
  std::vector<double> lp(scorer.vocab_size());
  double score = 0.0;
  TokenSeq prefix;
  for (TokenId t : seq) {
    scorer.next_logprobs({}, prefix, lp);
    double norm = 0.0;
    if (renormalize) {
      const auto& allowed = table.at(prefix);
      double hi = -std::numeric_limits<double>::infinity();
      for (TokenId a : allowed) hi = std::max(hi, lp[a]);
      double sum = 0.0;
      for (TokenId a : allowed) sum += std::exp(lp[a] - hi);
      norm = hi + std::log(sum);
    }
    score += lp[t] - norm;
    prefix.push_back(t);
  }
  return score;
}

/// Best member of `language` by exhaustive scoring; ties go to the
/// lexicographically smaller sequence.
inline TokenSeq exhaustive_argmax(const Scorer& scorer, const std::set<TokenSeq>& language,
                                  bool renormalize, double* best_score = nullptr) {
  const NextTable table = next_token_table(language);
  TokenSeq best;
  double best_s = -std::numeric_limits<double>::infinity();
  for (const auto& s : language) {  // std::set iterates in lexicographic order
    const double v = sequence_score(scorer, table, s, renormalize);
    if (v > best_s) {
      best_s = v;
      best = s;
    }
  }
  if (best_score) *best_score = best_s;
  return best;
}

/// Enumerates every sequence reachable through allowed_tokens and step().
inline std::set<TokenSeq> reachable_language(const TokenTrie& trie, const DecodeConfig& c) {
  std::set<TokenSeq> out;
  auto rec = [&](auto&& self, const ConstraintState& state, TokenSeq& seq) -> void {
    const std::size_t remaining = c.max_tokens > state.length ? c.max_tokens - state.length : 0;
    const auto allowed = allowed_tokens(trie, state.cursor, state.emitted, c, remaining);
    for (TokenId t : allowed) {
      const ConstraintState next = step(trie, state, t);
      seq.push_back(t);
      if (next.cursor.finished()) {
        out.insert(seq);
      } else {
        self(self, next, seq);
      }
      seq.pop_back();
    }
  };
  TokenSeq seq;
  rec(rec, ConstraintState{}, seq);
  return out;
}

/// Set-overlap counts by direct membership tests.
struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

inline Counts brute_counts(const std::vector<EntityId>& pred, const std::vector<EntityId>& gold) {
  Counts c;
  for (EntityId p : pred) {
    bool hit = false;
    for (EntityId g : gold) hit = hit || g == p;
    (hit ? c.tp : c.fp) += 1;
  }
  for (EntityId g : gold) {
    bool hit = false;
    for (EntityId p : pred) hit = hit || g == p;
    if (!hit) ++c.fn;
  }
  return c;
}

inline std::vector<EntityId> random_set(std::mt19937_64& rng, std::size_t max_size,
                                        EntityId universe) {
  std::set<EntityId> s;
  const std::size_t n = pick(rng, max_size + 1);
  while (s.size() < n) s.insert(static_cast<EntityId>(pick(rng, universe)));
  return {s.begin(), s.end()};
}

}  // namespace ettag::testing
