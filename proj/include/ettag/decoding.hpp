#pragma once

#include <span>
#include <vector>

#include "ettag/decode_config.hpp"
#include "ettag/trie.hpp"
#include "ettag/vocab.hpp"

namespace ettag {

/// Any autoregressive model over the output vocabulary. next_logprobs must
/// write one finite log-probability per output token, normalized so that
/// log-sum-exp is within 1e-6 of zero.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual std::vector<double> encode(std::span<const TokenId> input) const = 0;
  virtual void next_logprobs(std::span<const double> encoding, std::span<const TokenId> prefix,
                             std::span<double> out) const = 0;
};

inline constexpr double kLogprobNormTolerance = 1e-6;

double log_sum_exp(std::span<const double> values);

/// Throws ScorerContractViolation on a non-finite or unnormalized vector.
void check_scorer_output(std::span<const double> logprobs);

struct Hypothesis {
  TokenSeq tokens;
  double score = 0.0;
  ConstraintState state;
  bool finished = false;
};

struct ScoredSequence {
  TokenSeq tokens;
  /// Sum of per-token (possibly renormalized) log-probabilities.
  double score = 0.0;
  /// Value used for ranking: score, or score / length with length_normalize.
  double rank_score = 0.0;
};

/// Argmax over the allowed set at every step; ties go to the lowest token id.
ScoredSequence greedy_decode(const Scorer& scorer, const TokenTrie& trie,
                             std::span<const TokenId> input, const DecodeConfig& config);

/// Constrained beam search with a retirement pool for EOS-terminated
/// hypotheses. Returns up to beam_size finished sequences, best first. Throws
/// NoFinishedHypothesis when nothing fits in max_tokens.
std::vector<ScoredSequence> beam_decode(const Scorer& scorer, const TokenTrie& trie,
                                        std::span<const TokenId> input,
                                        const DecodeConfig& config);

/// Greedy when beam_size == 1, beam search otherwise; returns the best.
ScoredSequence decode(const Scorer& scorer, const TokenTrie& trie, std::span<const TokenId> input,
                      const DecodeConfig& config);

struct ParsedOutput {
  std::vector<EntityId> entities;  // sorted, unique
  std::size_t dropped = 0;
};

/// Splits on SEP, stops at the first EOS and maps each segment through the
/// trie. Segments that are not exact names are dropped and counted. Total on
/// arbitrary token sequences.
ParsedOutput parse_output(std::span<const TokenId> tokens, const TokenTrie& trie);

}  // namespace ettag
