#include "ettag/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ettag/error.hpp"

namespace ettag {
namespace {

void check_vocab(const Scorer& scorer, const TokenTrie& trie) {
  if (scorer.vocab_size() != trie.output_vocab_size()) {
    throw Error(ErrorKind::InvalidArgument,
                "scorer vocabulary size " + std::to_string(scorer.vocab_size()) +
                    " does not match the trie's output vocabulary " +
                    std::to_string(trie.output_vocab_size()));
  }
}

std::size_t remaining_budget(const DecodeConfig& config, std::size_t length) {
  return config.max_tokens > length ? config.max_tokens - length : 0;
}

double allowed_log_mass(std::span<const double> logprobs, std::span<const TokenId> allowed) {
  double hi = -std::numeric_limits<double>::infinity();
  for (TokenId t : allowed) hi = std::max(hi, logprobs[t]);
  double sum = 0.0;
  for (TokenId t : allowed) sum += std::exp(logprobs[t] - hi);
  return hi + std::log(sum);
}

double rank_of(const DecodeConfig& config, double score, std::size_t length) {
  return config.length_normalize && length > 0 ? score / static_cast<double>(length) : score;
}

// Higher score first; equal scores fall back to the lexicographically
// smaller sequence, which also puts a proper prefix first.
bool ranks_before(const ScoredSequence& a, const ScoredSequence& b) {
  if (a.rank_score != b.rank_score) return a.rank_score > b.rank_score;
  return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(), b.tokens.begin(),
                                      b.tokens.end());
}

}  // namespace

double log_sum_exp(std::span<const double> values) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values) hi = std::max(hi, v);
  if (!std::isfinite(hi)) return hi;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - hi);
  return hi + std::log(sum);
}

void check_scorer_output(std::span<const double> logprobs) {
  for (double v : logprobs) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::ScorerContractViolation, "scorer returned a non-finite log-probability");
    }
  }
  const double lse = log_sum_exp(logprobs);
  if (!(std::abs(lse) <= kLogprobNormTolerance)) {
    throw Error(ErrorKind::ScorerContractViolation,
                "scorer output is not normalized (log-sum-exp = " + std::to_string(lse) + ")");
  }
}

ScoredSequence greedy_decode(const Scorer& scorer, const TokenTrie& trie,
                             std::span<const TokenId> input, const DecodeConfig& config) {
  config.validate();
  check_vocab(scorer, trie);
  const auto encoding = scorer.encode(input);
  std::vector<double> logprobs(scorer.vocab_size());
  std::vector<TokenId> allowed;

  ScoredSequence out;
  ConstraintState state;
  while (!state.cursor.finished()) {
    allowed_tokens(trie, state.cursor, state.emitted, config, allowed,
                   remaining_budget(config, state.length));
    if (allowed.empty()) {
      throw Error(ErrorKind::NoFinishedHypothesis,
                  "greedy decode cannot finish within max_tokens = " +
                      std::to_string(config.max_tokens));
    }
    scorer.next_logprobs(encoding, out.tokens, logprobs);
    check_scorer_output(logprobs);
    TokenId best = allowed.front();
    for (TokenId t : allowed) {
      if (logprobs[t] > logprobs[best]) best = t;
    }
    const double norm = config.renormalize_constrained ? allowed_log_mass(logprobs, allowed) : 0.0;
    out.score += logprobs[best] - norm;
    out.tokens.push_back(best);
    state = step(trie, state, best);
  }
  out.rank_score = rank_of(config, out.score, out.tokens.size());
  return out;
}

std::vector<ScoredSequence> beam_decode(const Scorer& scorer, const TokenTrie& trie,
                                        std::span<const TokenId> input,
                                        const DecodeConfig& config) {
  config.validate();
  check_vocab(scorer, trie);
  const auto encoding = scorer.encode(input);
  std::vector<double> logprobs(scorer.vocab_size());
  std::vector<TokenId> allowed;

  struct Candidate {
    std::size_t parent;
    TokenId token;
    double score;
  };

  std::vector<Hypothesis> live(1);
  std::vector<ScoredSequence> pool;
  std::vector<Candidate> candidates;

  while (!live.empty()) {
    candidates.clear();
    for (std::size_t i = 0; i < live.size(); ++i) {
      const Hypothesis& h = live[i];
      allowed_tokens(trie, h.state.cursor, h.state.emitted, config, allowed,
                     remaining_budget(config, h.state.length));
      if (allowed.empty()) continue;
      scorer.next_logprobs(encoding, h.tokens, logprobs);
      check_scorer_output(logprobs);
      const double norm =
          config.renormalize_constrained ? allowed_log_mass(logprobs, allowed) : 0.0;
      for (TokenId t : allowed) candidates.push_back({i, t, h.score + logprobs[t] - norm});
    }
    if (candidates.empty()) break;

    const auto keep = std::min(config.beam_size, candidates.size());
    auto before = [&](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      const auto& ta = live[a.parent].tokens;
      const auto& tb = live[b.parent].tokens;
      if (a.parent != b.parent && ta != tb) {
        return std::lexicographical_compare(ta.begin(), ta.end(), tb.begin(), tb.end());
      }
      return a.token < b.token;
    };
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), before);

    std::vector<Hypothesis> next;
    next.reserve(keep);
    for (std::size_t k = 0; k < keep; ++k) {
      const Candidate& c = candidates[k];
      const Hypothesis& parent = live[c.parent];
      Hypothesis h;
      h.tokens = parent.tokens;
      h.tokens.push_back(c.token);
      h.score = c.score;
      h.state = step(trie, parent.state, c.token);
      if (h.state.cursor.finished()) {
        pool.push_back({std::move(h.tokens), h.score, rank_of(config, h.score, parent.tokens.size() + 1)});
      } else {
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);

    // Scores only decrease as tokens are added, so once the pool holds
    // beam_size sequences strictly better than every live hypothesis the
    // result cannot change.
    if (!config.length_normalize && pool.size() >= config.beam_size && !live.empty()) {
      std::nth_element(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(config.beam_size - 1),
                       pool.end(), ranks_before);
      const double kth = pool[config.beam_size - 1].rank_score;
      double best_live = -std::numeric_limits<double>::infinity();
      for (const auto& h : live) best_live = std::max(best_live, h.score);
      if (best_live < kth) break;
    }
  }

  if (pool.empty()) {
    throw Error(ErrorKind::NoFinishedHypothesis,
                "beam search produced no finished hypothesis within max_tokens = " +
                    std::to_string(config.max_tokens));
  }
  std::sort(pool.begin(), pool.end(), ranks_before);
  if (pool.size() > config.beam_size) pool.resize(config.beam_size);
  return pool;
}

ScoredSequence decode(const Scorer& scorer, const TokenTrie& trie, std::span<const TokenId> input,
                      const DecodeConfig& config) {
  if (config.beam_size == 1) return greedy_decode(scorer, trie, input, config);
  return beam_decode(scorer, trie, input, config).front();
}

ParsedOutput parse_output(std::span<const TokenId> tokens, const TokenTrie& trie) {
  ParsedOutput out;
  auto end = std::find(tokens.begin(), tokens.end(), reserved::kEos);
  const std::span<const TokenId> body(tokens.begin(), end);
  if (body.empty()) return out;

  auto flush = [&](std::span<const TokenId> segment) {
    if (auto e = trie.lookup(segment)) {
      out.entities.push_back(*e);
    } else {
      ++out.dropped;
    }
  };
  auto seg_begin = body.begin();
  for (auto it = body.begin(); it != body.end(); ++it) {
    if (*it == reserved::kSep) {
      flush({seg_begin, it});
      seg_begin = it + 1;
    }
  }
  flush({seg_begin, body.end()});
  std::sort(out.entities.begin(), out.entities.end());
  out.entities.erase(std::unique(out.entities.begin(), out.entities.end()), out.entities.end());
  return out;
}

}  // namespace ettag
