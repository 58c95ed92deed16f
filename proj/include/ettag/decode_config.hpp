#pragma once

#include <cstddef>

namespace ettag {

struct DecodeConfig {
  std::size_t beam_size = 20;
  std::size_t max_entities = 64;
  std::size_t max_tokens = 256;
  /// Forbid emitting an entity that was already emitted in this sequence.
  bool no_repeat = true;
  /// Allow EOS straight from the root, i.e. the empty prediction.
  bool allow_empty = false;
  /// Rank finished hypotheses by score / length.
  bool length_normalize = false;
  /// Score tokens with log-probs renormalized over the allowed set.
  bool renormalize_constrained = true;

  void validate() const;
};

}  // namespace ettag
