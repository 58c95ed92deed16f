#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ettag/catalog.hpp"
#include "ettag/decoding.hpp"
#include "ettag/vocab.hpp"

namespace ettag {

/// One Entity Tagging example: tokenized input text and its gold entity set.
struct ETExample {
  std::string doc_id;
  TokenSeq input;
  std::vector<EntityId> gold;  // sorted, unique
  /// First-mention order, when the source corpus had spans.
  std::optional<std::vector<EntityId>> gold_order;
};

struct ModelShape {
  std::size_t input_vocab = 0;
  std::size_t output_vocab = 0;
  std::size_t dim = 32;
  std::size_t context = 3;
};

// Mean-of-embeddings encoder plus a fixed-window feedforward decoder:
//   feature = [encode(input); E_out[y(t-k)]; ...; E_out[y(t-1)]]  (BOS padded)
//   logprobs = log_softmax(W^T feature + b)
struct ToyModelParams {
  std::size_t dim = 0;
  std::size_t context = 0;
  Eigen::MatrixXd input_embedding;   // V_in x d
  Eigen::MatrixXd output_embedding;  // V_out x d
  Eigen::MatrixXd projection;        // (d + k*d) x V_out
  Eigen::VectorXd bias;              // V_out

  static ToyModelParams zeros(const ModelShape& shape);

  ModelShape shape() const;
  std::size_t feature_dim() const { return dim * (1 + context); }
  std::size_t input_vocab() const { return static_cast<std::size_t>(input_embedding.rows()); }
  std::size_t output_vocab() const { return static_cast<std::size_t>(bias.size()); }

  std::size_t parameter_count() const;
  /// All parameters in checkpoint order.
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::VectorXd& flat);

  bool all_finite() const;
  void set_zero();
};

/// Gradients share the parameter layout.
using ToyModelGradient = ToyModelParams;

/// Mean of input embedding rows; the zero vector for empty input.
Eigen::VectorXd encode_input(const ToyModelParams& params, std::span<const TokenId> input);

Eigen::VectorXd next_logprobs(const ToyModelParams& params, const Eigen::VectorXd& encoding,
                              std::span<const TokenId> prefix);

/// Names of gold[perm[0]], gold[perm[1]], ... joined by SEP and closed by EOS.
TokenSeq build_target(std::span<const EntityId> gold, std::span<const std::size_t> perm,
                      const EntityCatalog& catalog, const Vocabulary& output_vocab);

/// Same, with the entities already in target order.
TokenSeq build_target(std::span<const EntityId> ordered, const EntityCatalog& catalog,
                      const Vocabulary& output_vocab);

/// Uniform index in [0, n) by rejection; stable across standard libraries.
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n);

/// Fisher-Yates shuffle of 0..m-1. Throws InvalidArgument when m == 0.
std::vector<std::size_t> sample_permutation(std::mt19937_64& rng, std::size_t m);

/// Teacher-forced negative log-likelihood of `target` (which ends in EOS).
double nll_loss(const ToyModelParams& params, std::span<const TokenId> input,
                std::span<const TokenId> target);

/// Adds scale * d(nll_loss)/d(params) into `grad` and returns the loss.
double backward(const ToyModelParams& params, std::span<const TokenId> input,
                std::span<const TokenId> target, ToyModelGradient& grad, double scale = 1.0);

enum class OrderStrategy { Shuffle, MentionOrder, Lexicographic };
enum class OptimizerKind { Sgd, Adam };

std::string to_string(OrderStrategy s);
OrderStrategy parse_order_strategy(std::string_view s);
std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view s);

struct TrainConfig {
  double lr = 1e-2;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  OrderStrategy order_strategy = OrderStrategy::Shuffle;
  std::size_t batch_size = 1;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Permutations sampled per example per epoch for the shuffle strategy.
  std::size_t permutations_per_example = 1;
  std::size_t dim = 32;
  std::size_t context = 3;
  double init_range = 0.1;

  void validate() const;
};

struct TrainResult {
  ToyModelParams params;
  std::vector<double> epoch_loss;
};

/// Target for one example under a fixed (non-shuffle) strategy.
TokenSeq fixed_order_target(const ETExample& example, OrderStrategy strategy,
                            const EntityCatalog& catalog, const Vocabulary& output_vocab);

/// Uniform(-range, range) in checkpoint order (E_in, E_out, W, b); this is
/// how train() starts, drawing from its seeded generator.
ToyModelParams init_params(const ModelShape& shape, double range, std::mt19937_64& rng);

/// Throws MissingMentionOrder when the mention_order strategy meets an
/// example without gold_order.
TrainResult train(std::span<const ETExample> corpus, const TrainConfig& config,
                  const EntityCatalog& catalog, const Vocabulary& input_vocab,
                  const Vocabulary& output_vocab);

/// Scorer adapter over frozen parameters.
class ToyScorer final : public Scorer {
 public:
  explicit ToyScorer(const ToyModelParams& params) : params_(params) {}

  std::size_t vocab_size() const override { return params_.output_vocab(); }
  std::vector<double> encode(std::span<const TokenId> input) const override;
  void next_logprobs(std::span<const double> encoding, std::span<const TokenId> prefix,
                     std::span<double> out) const override;

 private:
  const ToyModelParams& params_;
};

/// Hash of both vocabularies, stored in checkpoints.
std::uint64_t model_vocab_hash(const Vocabulary& input_vocab, const Vocabulary& output_vocab);

/// "ETMDL1", u32 d, u32 k, u32 V_in, u32 V_out, u64 vocab hash, then E_in,
/// E_out, W, b as row-major little-endian f64.
void save_checkpoint(const std::filesystem::path& path, const ToyModelParams& params,
                     std::uint64_t vocab_hash);

struct Checkpoint {
  ToyModelParams params;
  std::uint64_t vocab_hash = 0;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ettag
