#include "ettag/toy_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "ettag/error.hpp"
#include "ettag/unicode.hpp"

namespace ettag {
namespace {

constexpr char kModelMagic[6] = {'E', 'T', 'M', 'D', 'L', '1'};

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

void fill_uniform(Eigen::Ref<Eigen::MatrixXd> m, std::mt19937_64& rng, double range) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = (2.0 * uniform01(rng) - 1.0) * range;
  }
}

// Decoder feature for predicting the token after `prefix`.
Eigen::VectorXd feature(const ToyModelParams& p, const Eigen::VectorXd& encoding,
                        std::span<const TokenId> prefix) {
  const auto d = static_cast<Eigen::Index>(p.dim);
  Eigen::VectorXd f(static_cast<Eigen::Index>(p.feature_dim()));
  f.head(d) = encoding;
  const auto n = static_cast<std::ptrdiff_t>(prefix.size());
  const auto k = static_cast<std::ptrdiff_t>(p.context);
  for (std::ptrdiff_t slot = 0; slot < k; ++slot) {
    const std::ptrdiff_t pos = n - k + slot;
    const TokenId tok = pos >= 0 ? prefix[static_cast<std::size_t>(pos)] : reserved::kBos;
    f.segment(d * (1 + slot), d) = p.output_embedding.row(tok).transpose();
  }
  return f;
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  const double hi = logits.maxCoeff();
  const double lse = hi + std::log((logits.array() - hi).exp().sum());
  return logits.array() - lse;
}

void check_input(const ToyModelParams& p, std::span<const TokenId> input) {
  for (TokenId t : input) {
    if (t >= p.input_vocab()) {
      throw Error(ErrorKind::InvalidArgument, "input token id out of range: " + std::to_string(t));
    }
  }
}

void check_output(const ToyModelParams& p, std::span<const TokenId> tokens) {
  for (TokenId t : tokens) {
    if (t >= p.output_vocab()) {
      throw Error(ErrorKind::InvalidArgument, "output token id out of range: " + std::to_string(t));
    }
  }
}

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error(ErrorKind::Io, "truncated checkpoint");
  return v;
}

void write_row_major(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) write_pod<double>(out, m(r, c));
  }
}

void read_row_major(std::istream& in, Eigen::Ref<Eigen::MatrixXd> m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = read_pod<double>(in);
  }
}

}  // namespace

ToyModelParams ToyModelParams::zeros(const ModelShape& shape) {
  // The decoder pads with BOS and the target ends with EOS, so the output
  // vocabulary must at least hold those two ids.
  if (shape.dim == 0 || shape.input_vocab == 0 || shape.output_vocab <= reserved::kEos) {
    throw Error(ErrorKind::InvalidArgument, "invalid model shape");
  }
  ToyModelParams p;
  p.dim = shape.dim;
  p.context = shape.context;
  const auto d = static_cast<Eigen::Index>(shape.dim);
  const auto vin = static_cast<Eigen::Index>(shape.input_vocab);
  const auto vout = static_cast<Eigen::Index>(shape.output_vocab);
  p.input_embedding = Eigen::MatrixXd::Zero(vin, d);
  p.output_embedding = Eigen::MatrixXd::Zero(vout, d);
  p.projection = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p.feature_dim()), vout);
  p.bias = Eigen::VectorXd::Zero(vout);
  return p;
}

ModelShape ToyModelParams::shape() const {
  return {input_vocab(), output_vocab(), dim, context};
}

std::size_t ToyModelParams::parameter_count() const {
  return static_cast<std::size_t>(input_embedding.size() + output_embedding.size() +
                                  projection.size() + bias.size());
}

Eigen::VectorXd ToyModelParams::flatten() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index at = 0;
  auto put = [&](const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) flat(at++) = m(r, c);
    }
  };
  put(input_embedding);
  put(output_embedding);
  put(projection);
  put(bias);
  return flat;
}

void ToyModelParams::assign(const Eigen::VectorXd& flat) {
  if (flat.size() != static_cast<Eigen::Index>(parameter_count())) {
    throw Error(ErrorKind::InvalidArgument, "flat parameter vector has the wrong size");
  }
  Eigen::Index at = 0;
  auto take = [&](Eigen::Ref<Eigen::MatrixXd> m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = flat(at++);
    }
  };
  take(input_embedding);
  take(output_embedding);
  take(projection);
  take(bias);
}

bool ToyModelParams::all_finite() const {
  return input_embedding.allFinite() && output_embedding.allFinite() && projection.allFinite() &&
         bias.allFinite();
}

void ToyModelParams::set_zero() {
  input_embedding.setZero();
  output_embedding.setZero();
  projection.setZero();
  bias.setZero();
}

Eigen::VectorXd encode_input(const ToyModelParams& params, std::span<const TokenId> input) {
  check_input(params, input);
  Eigen::VectorXd enc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.dim));
  if (input.empty()) return enc;
  for (TokenId t : input) enc += params.input_embedding.row(t).transpose();
  return enc / static_cast<double>(input.size());
}

Eigen::VectorXd next_logprobs(const ToyModelParams& params, const Eigen::VectorXd& encoding,
                              std::span<const TokenId> prefix) {
  check_output(params, prefix);
  const Eigen::VectorXd f = feature(params, encoding, prefix);
  return log_softmax(params.projection.transpose() * f + params.bias);
}

TokenSeq build_target(std::span<const EntityId> ordered, const EntityCatalog& catalog,
                      const Vocabulary& output_vocab) {
  TokenSeq out;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    if (ordered[i] >= catalog.size()) {
      throw Error(ErrorKind::UnknownEntity, "entity id " + std::to_string(ordered[i]) +
                                                " is not in the catalog");
    }
    if (i > 0) out.push_back(reserved::kSep);
    const auto name = tokenize(catalog.name(ordered[i]).view(), output_vocab, TokenizeMode::Output);
    out.insert(out.end(), name.begin(), name.end());
  }
  out.push_back(reserved::kEos);
  return out;
}

TokenSeq build_target(std::span<const EntityId> gold, std::span<const std::size_t> perm,
                      const EntityCatalog& catalog, const Vocabulary& output_vocab) {
  if (perm.size() != gold.size()) {
    throw Error(ErrorKind::InvalidArgument, "permutation size does not match the gold set");
  }
  std::vector<bool> used(gold.size(), false);
  std::vector<EntityId> ordered;
  ordered.reserve(gold.size());
  for (std::size_t i : perm) {
    if (i >= gold.size() || used[i]) {
      throw Error(ErrorKind::InvalidArgument, "not a permutation of the gold set");
    }
    used[i] = true;
    ordered.push_back(gold[i]);
  }
  return build_target(ordered, catalog, output_vocab);
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "uniform_index over an empty range");
  const std::uint64_t bound = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

std::vector<std::size_t> sample_permutation(std::mt19937_64& rng, std::size_t m) {
  if (m == 0) throw Error(ErrorKind::InvalidArgument, "cannot permute an empty set");
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = m - 1; i > 0; --i) {
    std::swap(perm[i], perm[uniform_index(rng, i + 1)]);
  }
  return perm;
}

double nll_loss(const ToyModelParams& params, std::span<const TokenId> input,
                std::span<const TokenId> target) {
  check_output(params, target);
  const Eigen::VectorXd enc = encode_input(params, input);
  double loss = 0.0;
  for (std::size_t j = 0; j < target.size(); ++j) {
    const Eigen::VectorXd lp = next_logprobs(params, enc, target.first(j));
    loss -= lp(target[j]);
  }
  return loss;
}

double backward(const ToyModelParams& params, std::span<const TokenId> input,
                std::span<const TokenId> target, ToyModelGradient& grad, double scale) {
  check_output(params, target);
  const auto d = static_cast<Eigen::Index>(params.dim);
  const auto k = static_cast<std::ptrdiff_t>(params.context);
  const Eigen::VectorXd enc = encode_input(params, input);
  Eigen::VectorXd d_enc = Eigen::VectorXd::Zero(d);
  double loss = 0.0;

  for (std::size_t j = 0; j < target.size(); ++j) {
    const auto prefix = target.first(j);
    const Eigen::VectorXd f = feature(params, enc, prefix);
    const Eigen::VectorXd lp = log_softmax(params.projection.transpose() * f + params.bias);
    loss -= lp(target[j]);

    // d loss / d logits = softmax - onehot(target)
    Eigen::VectorXd g = lp.array().exp();
    g(target[j]) -= 1.0;
    g *= scale;

    grad.projection.noalias() += f * g.transpose();
    grad.bias += g;
    const Eigen::VectorXd df = params.projection * g;
    d_enc += df.head(d);
    const auto n = static_cast<std::ptrdiff_t>(prefix.size());
    for (std::ptrdiff_t slot = 0; slot < k; ++slot) {
      const std::ptrdiff_t pos = n - k + slot;
      const TokenId tok = pos >= 0 ? prefix[static_cast<std::size_t>(pos)] : reserved::kBos;
      grad.output_embedding.row(tok) += df.segment(d * (1 + slot), d).transpose();
    }
  }

  if (!input.empty()) {
    const Eigen::RowVectorXd share = d_enc.transpose() / static_cast<double>(input.size());
    for (TokenId t : input) grad.input_embedding.row(t) += share;
  }
  return loss;
}

std::string to_string(OrderStrategy s) {
  switch (s) {
    case OrderStrategy::Shuffle: return "shuffle";
    case OrderStrategy::MentionOrder: return "mention_order";
    case OrderStrategy::Lexicographic: return "lexicographic";
  }
  return "?";
}

OrderStrategy parse_order_strategy(std::string_view s) {
  if (s == "shuffle") return OrderStrategy::Shuffle;
  if (s == "mention_order") return OrderStrategy::MentionOrder;
  if (s == "lexicographic") return OrderStrategy::Lexicographic;
  throw Error(ErrorKind::InvalidArgument, "unknown order strategy: " + std::string(s));
}

std::string to_string(OptimizerKind k) {
  return k == OptimizerKind::Adam ? "adam" : "sgd";
}

OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "sgd") return OptimizerKind::Sgd;
  throw Error(ErrorKind::InvalidArgument, "unknown optimizer: " + std::string(s));
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw Error(ErrorKind::InvalidArgument, "lr must be > 0");
  if (epochs == 0) throw Error(ErrorKind::InvalidArgument, "epochs must be >= 1");
  if (batch_size == 0) throw Error(ErrorKind::InvalidArgument, "batch_size must be >= 1");
  if (permutations_per_example == 0) {
    throw Error(ErrorKind::InvalidArgument, "permutations_per_example must be >= 1");
  }
  if (dim == 0) throw Error(ErrorKind::InvalidArgument, "dim must be >= 1");
}

TokenSeq fixed_order_target(const ETExample& example, OrderStrategy strategy,
                            const EntityCatalog& catalog, const Vocabulary& output_vocab) {
  switch (strategy) {
    case OrderStrategy::MentionOrder:
      if (!example.gold_order) {
        throw Error(ErrorKind::MissingMentionOrder,
                    "example " + example.doc_id + " has no gold_order");
      }
      return build_target(*example.gold_order, catalog, output_vocab);
    case OrderStrategy::Lexicographic: {
      std::vector<EntityId> ordered = example.gold;
      std::sort(ordered.begin(), ordered.end(), [&](EntityId a, EntityId b) {
        return catalog.name(a).str() < catalog.name(b).str();
      });
      return build_target(ordered, catalog, output_vocab);
    }
    case OrderStrategy::Shuffle:
      break;
  }
  throw Error(ErrorKind::InvalidArgument, "shuffle has no fixed target order");
}

ToyModelParams init_params(const ModelShape& shape, double range, std::mt19937_64& rng) {
  ToyModelParams p = ToyModelParams::zeros(shape);
  fill_uniform(p.input_embedding, rng, range);
  fill_uniform(p.output_embedding, rng, range);
  fill_uniform(p.projection, rng, range);
  fill_uniform(p.bias, rng, range);
  return p;
}

TrainResult train(std::span<const ETExample> corpus, const TrainConfig& config,
                  const EntityCatalog& catalog, const Vocabulary& input_vocab,
                  const Vocabulary& output_vocab) {
  config.validate();
  if (corpus.empty()) throw Error(ErrorKind::EmptyDataset, "training corpus is empty");

  // Fixed targets are built once; this also surfaces MissingMentionOrder
  // before any optimization happens.
  std::vector<TokenSeq> fixed;
  if (config.order_strategy != OrderStrategy::Shuffle) {
    fixed.reserve(corpus.size());
    for (const auto& ex : corpus) {
      fixed.push_back(fixed_order_target(ex, config.order_strategy, catalog, output_vocab));
    }
  }

  std::mt19937_64 rng(config.seed);
  TrainResult result;
  ToyModelParams& params = result.params;
  params = init_params({input_vocab.size(), output_vocab.size(), config.dim, config.context},
                       config.init_range, rng);

  ToyModelGradient grad = ToyModelParams::zeros(params.shape());
  ToyModelParams m1 = ToyModelParams::zeros(params.shape());
  ToyModelParams m2 = ToyModelParams::zeros(params.shape());
  std::size_t adam_step = 0;

  auto apply = [&](Eigen::Ref<Eigen::MatrixXd> w, const Eigen::MatrixXd& g, Eigen::Ref<Eigen::MatrixXd> a,
                   Eigen::Ref<Eigen::MatrixXd> b) {
    if (config.optimizer == OptimizerKind::Sgd) {
      w -= config.lr * g;
      return;
    }
    const double c1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(adam_step));
    const double c2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(adam_step));
    a = config.adam_beta1 * a + (1.0 - config.adam_beta1) * g;
    b = config.adam_beta2 * b + (1.0 - config.adam_beta2) * g.cwiseProduct(g);
    w.array() -= config.lr * (a.array() / c1) / ((b.array() / c2).sqrt() + config.adam_epsilon);
  };

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  result.epoch_loss.reserve(config.epochs);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i-- > 1;) std::swap(order[i], order[uniform_index(rng, i + 1)]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      grad.set_zero();
      for (std::size_t b = start; b < stop; ++b) {
        const ETExample& ex = corpus[order[b]];
        const double per_batch = 1.0 / static_cast<double>(stop - start);
        if (config.order_strategy == OrderStrategy::Shuffle) {
          const double w = per_batch / static_cast<double>(config.permutations_per_example);
          double loss = 0.0;
          for (std::size_t s = 0; s < config.permutations_per_example; ++s) {
            const TokenSeq target =
                ex.gold.empty()
                    ? TokenSeq{reserved::kEos}
                    : build_target(ex.gold, sample_permutation(rng, ex.gold.size()), catalog,
                                   output_vocab);
            loss += backward(params, ex.input, target, grad, w);
          }
          epoch_loss += loss / static_cast<double>(config.permutations_per_example);
        } else {
          epoch_loss += backward(params, ex.input, fixed[order[b]], grad, per_batch);
        }
      }
      ++adam_step;
      apply(params.input_embedding, grad.input_embedding, m1.input_embedding, m2.input_embedding);
      apply(params.output_embedding, grad.output_embedding, m1.output_embedding, m2.output_embedding);
      apply(params.projection, grad.projection, m1.projection, m2.projection);
      apply(params.bias, grad.bias, m1.bias, m2.bias);
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(corpus.size()));
  }
  return result;
}

std::vector<double> ToyScorer::encode(std::span<const TokenId> input) const {
  const Eigen::VectorXd enc = encode_input(params_, input);
  return {enc.data(), enc.data() + enc.size()};
}

void ToyScorer::next_logprobs(std::span<const double> encoding, std::span<const TokenId> prefix,
                              std::span<double> out) const {
  const Eigen::Map<const Eigen::VectorXd> enc(encoding.data(),
                                              static_cast<Eigen::Index>(encoding.size()));
  const Eigen::VectorXd lp = ettag::next_logprobs(params_, enc, prefix);
  std::copy(lp.data(), lp.data() + lp.size(), out.begin());
}

std::uint64_t model_vocab_hash(const Vocabulary& input_vocab, const Vocabulary& output_vocab) {
  ContentHash h;
  h.update("ETMDL1");
  h.update_u64(input_vocab.content_hash());
  h.update_u64(output_vocab.content_hash());
  return h.value();
}

void save_checkpoint(const std::filesystem::path& path, const ToyModelParams& params,
                     std::uint64_t vocab_hash) {
  static_assert(std::endian::native == std::endian::little);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write checkpoint: " + path.string());
  out.write(kModelMagic, sizeof(kModelMagic));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.dim));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.context));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.input_vocab()));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.output_vocab()));
  write_pod<std::uint64_t>(out, vocab_hash);
  write_row_major(out, params.input_embedding);
  write_row_major(out, params.output_embedding);
  write_row_major(out, params.projection);
  write_row_major(out, params.bias);
  if (!out) throw Error(ErrorKind::Io, "failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open checkpoint: " + path.string());
  char magic[sizeof(kModelMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0) {
    throw Error(ErrorKind::CacheMismatch, "not a model checkpoint: " + path.string());
  }
  ModelShape shape;
  shape.dim = read_pod<std::uint32_t>(in);
  shape.context = read_pod<std::uint32_t>(in);
  shape.input_vocab = read_pod<std::uint32_t>(in);
  shape.output_vocab = read_pod<std::uint32_t>(in);
  Checkpoint ck;
  ck.vocab_hash = read_pod<std::uint64_t>(in);
  ck.params = ToyModelParams::zeros(shape);
  read_row_major(in, ck.params.input_embedding);
  read_row_major(in, ck.params.output_embedding);
  read_row_major(in, ck.params.projection);
  read_row_major(in, ck.params.bias);
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorKind::CacheMismatch, "trailing bytes in checkpoint: " + path.string());
  }
  return ck;
}

}  // namespace ettag
