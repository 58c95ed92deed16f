#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ettag/ingest.hpp"

namespace ettag {

struct SyntheticConfig {
  std::size_t entities = 50;
  std::size_t docs = 200;
  std::size_t min_gold = 2;
  std::size_t max_gold = 6;
  /// Filler words between entity cues.
  std::size_t noise_words = 4;
  /// Probability that an entity is cued by its own name rather than a cue word.
  double name_mention_rate = 0.5;
  /// Fraction of documents held out for evaluation.
  double eval_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

// Entities come in families that share leading tokens ("Port Ellis",
// "Port Ellis Harbour"), so the trie has names that are prefixes of others.
// Each entity owns two cue words; a document mentions each gold entity once,
// in a random order, and gold_order records that order.
struct SyntheticBenchmark {
  std::vector<std::string> names;
  std::vector<ETRecord> train;
  std::vector<ETRecord> eval;
};

SyntheticBenchmark make_synthetic_benchmark(const SyntheticConfig& config);

/// `count` distinct names of one to four words drawn from a Zipf-like word
/// list, for scale tests.
std::vector<std::string> synthetic_names(std::size_t count, std::uint64_t seed);

}  // namespace ettag
