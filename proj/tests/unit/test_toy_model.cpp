#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "../support.hpp"
#include "ettag/error.hpp"
#include "ettag/toy_model.hpp"

using namespace ettag;

namespace {

ToyModelParams random_params(std::mt19937_64& rng, const ModelShape& shape, double range = 0.5) {
  auto p = ToyModelParams::zeros(shape);
  std::uniform_real_distribution<double> u(-range, range);
  Eigen::VectorXd flat(p.parameter_count());
  for (auto& x : flat) x = u(rng);
  p.assign(flat);
  return p;
}

TokenSeq random_tokens(std::mt19937_64& rng, std::size_t n, std::size_t vocab, bool end_eos) {
  TokenSeq out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<TokenId>(testing::pick(rng, vocab)));
  if (end_eos) out.push_back(reserved::kEos);
  return out;
}

// Straight-line softmax with no shared code with the model.
std::vector<double> scalar_logprobs(const ToyModelParams& p, std::span<const TokenId> input,
                                    std::span<const TokenId> prefix) {
  const std::size_t d = p.dim, k = p.context;
  std::vector<double> feat(d * (1 + k), 0.0);
  for (TokenId t : input)
    for (std::size_t j = 0; j < d; ++j) feat[j] += p.input_embedding(t, j) / input.size();
  for (std::size_t slot = 0; slot < k; ++slot) {
    const long pos = static_cast<long>(prefix.size()) - static_cast<long>(k) + static_cast<long>(slot);
    const TokenId t = pos < 0 ? reserved::kBos : prefix[pos];
    for (std::size_t j = 0; j < d; ++j) feat[d + slot * d + j] = p.output_embedding(t, j);
  }
  std::vector<double> logits(p.output_vocab());
  for (std::size_t v = 0; v < logits.size(); ++v) {
    double z = p.bias(v);
    for (std::size_t j = 0; j < feat.size(); ++j) z += feat[j] * p.projection(j, v);
    logits[v] = z;
  }
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z);
  for (double& z : logits) z -= std::log(sum);
  return logits;
}

}  // namespace

TEST_SUITE("toy_model") {
  TEST_CASE("encoder averages input embeddings") {
    ModelShape shape{6, 5, 2, 1};
    auto p = ToyModelParams::zeros(shape);
    CHECK(encode_input(p, TokenSeq{4}).isZero());
    p.input_embedding.row(4) << 1.0, -2.0;
    p.input_embedding.row(5) << 3.0, 4.0;
    const auto one = encode_input(p, TokenSeq{4});
    CHECK(one(0) == 1.0);
    CHECK(one(1) == -2.0);
    const auto two = encode_input(p, TokenSeq{4, 5});
    CHECK(two(0) == doctest::Approx(2.0));
    CHECK(two(1) == doctest::Approx(1.0));
    CHECK(encode_input(p, TokenSeq{}).isZero());
  }

  TEST_CASE("zero parameters give the uniform distribution") {
    const auto p = ToyModelParams::zeros({10, 7, 4, 3});
    const auto lp = next_logprobs(p, encode_input(p, TokenSeq{5, 6}), TokenSeq{4});
    for (int v = 0; v < lp.size(); ++v) CHECK(lp(v) == doctest::Approx(-std::log(7.0)));
    const TokenSeq target = {4, 2, 5, 1};
    CHECK(nll_loss(p, TokenSeq{5}, target) == doctest::Approx(4 * std::log(7.0)));
  }

  TEST_CASE("next_logprobs matches a scalar re-implementation and is normalized") {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 50; ++i) {
      const ModelShape shape{9, 6 + testing::pick(rng, 5), 1 + testing::pick(rng, 4), 1 + testing::pick(rng, 3)};
      const auto p = random_params(rng, shape, 1.0);
      const auto input = random_tokens(rng, 1 + testing::pick(rng, 5), shape.input_vocab, false);
      const auto prefix = random_tokens(rng, testing::pick(rng, 5), shape.output_vocab, false);
      const auto got = next_logprobs(p, encode_input(p, input), prefix);
      const auto want = scalar_logprobs(p, input, prefix);
      for (std::size_t v = 0; v < want.size(); ++v) CHECK(got(v) == doctest::Approx(want[v]).epsilon(1e-12));
      std::vector<double> as_vec(got.data(), got.data() + got.size());
      CHECK(std::abs(log_sum_exp(as_vec)) < 1e-6);
    }
  }

  TEST_CASE("backward matches central finite differences") {
    std::mt19937_64 rng(42);
    const double eps = 1e-5;
    for (int instance = 0; instance < 20; ++instance) {
      const ModelShape shape{7, 6, 2 + testing::pick(rng, 2), 1 + testing::pick(rng, 3)};
      auto p = random_params(rng, shape);
      const auto input = random_tokens(rng, 1 + testing::pick(rng, 4), shape.input_vocab, false);
      const auto target = random_tokens(rng, 1 + testing::pick(rng, 4), shape.output_vocab, true);
      auto grad = ToyModelParams::zeros(shape);
      backward(p, input, target, grad);
      const Eigen::VectorXd analytic = grad.flatten();
      const Eigen::VectorXd base = p.flatten();
      double worst = 0.0;
      for (Eigen::Index i = 0; i < base.size(); ++i) {
        Eigen::VectorXd x = base;
        x(i) += eps;
        p.assign(x);
        const double up = nll_loss(p, input, target);
        x(i) -= 2 * eps;
        p.assign(x);
        const double down = nll_loss(p, input, target);
        const double numeric = (up - down) / (2 * eps);
        const double denom = std::max({std::abs(numeric), std::abs(analytic(i)), 1e-6});
        worst = std::max(worst, std::abs(numeric - analytic(i)) / denom);
      }
      p.assign(base);
      CAPTURE(instance);
      CHECK(worst < 1e-4);
    }
  }

  TEST_CASE("projection gradient is the softmax-weighted feature at d=2, V_out=3") {
    // Hand-checkable: zero W and b give p = 1/3 for each token, so
    // dL/dW[:, v] = (p_v - [v == target]) * feature.
    ModelShape shape{5, 3, 2, 1};
    auto p = ToyModelParams::zeros(shape);
    p.input_embedding.row(4) << 0.5, -1.0;
    p.output_embedding.row(reserved::kBos) << 2.0, 3.0;
    const TokenSeq input = {4}, target = {reserved::kEos};
    auto grad = ToyModelParams::zeros(shape);
    const double loss = backward(p, input, target, grad);
    CHECK(loss == doctest::Approx(std::log(3.0)));
    const double feature[4] = {0.5, -1.0, 2.0, 3.0};
    for (int v = 0; v < 3; ++v) {
      const double coef = 1.0 / 3.0 - (v == static_cast<int>(reserved::kEos) ? 1.0 : 0.0);
      for (int j = 0; j < 4; ++j) CHECK(grad.projection(j, v) == doctest::Approx(coef * feature[j]));
      CHECK(grad.bias(v) == doctest::Approx(coef));
    }
  }

  TEST_CASE("input rows of absent tokens get zero gradient") {
    std::mt19937_64 rng(6);
    const ModelShape shape{12, 6, 3, 2};
    const auto p = random_params(rng, shape);
    const TokenSeq input = {4, 7, 4};
    auto grad = ToyModelParams::zeros(shape);
    backward(p, input, TokenSeq{4, 2, 5, 1}, grad);
    for (int row = 0; row < 12; ++row) {
      if (row == 4 || row == 7) {
        CHECK_FALSE(grad.input_embedding.row(row).isZero());
      } else {
        CHECK(grad.input_embedding.row(row).isZero());
      }
    }
  }

  TEST_CASE("build_target joins names with SEP and ends with EOS") {
    const testing::Fixture f({"Earth", "Parsec", "Solar System"});
    const std::vector<EntityId> gold = {0, 1};
    const std::vector<std::size_t> identity = {0, 1}, swapped = {1, 0};
    const TokenId earth = *f.vocab.find("Earth"), parsec = *f.vocab.find("Parsec");
    CHECK(build_target(gold, identity, f.catalog, f.vocab) == TokenSeq{earth, reserved::kSep, parsec, reserved::kEos});
    CHECK(build_target(gold, swapped, f.catalog, f.vocab) == TokenSeq{parsec, reserved::kSep, earth, reserved::kEos});
    const std::vector<EntityId> single = {0};
    CHECK(build_target(single, f.catalog, f.vocab) == TokenSeq{earth, reserved::kEos});

    std::mt19937_64 rng(1);
    for (int i = 0; i < 200; ++i) {
      auto set = testing::random_set(rng, 3, 3);
      if (set.empty()) continue;
      const auto perm = sample_permutation(rng, set.size());
      const auto t = build_target(set, perm, f.catalog, f.vocab);
      CHECK(std::count(t.begin(), t.end(), reserved::kSep) == static_cast<long>(set.size() - 1));
      CHECK(std::count(t.begin(), t.end(), reserved::kEos) == 1);
      CHECK(t.back() == reserved::kEos);
    }
    const std::vector<EntityId> bad = {7};
    CHECK_THROWS_AS(build_target(bad, f.catalog, f.vocab), Error);
  }

  TEST_CASE("permutations are uniform over 60k draws of m=3") {
    std::mt19937_64 rng(123);
    std::map<std::vector<std::size_t>, int> counts;
    const int draws = 60000;
    for (int i = 0; i < draws; ++i) ++counts[sample_permutation(rng, 3)];
    REQUIRE(counts.size() == 6);
    const double expected = draws / 6.0;
    double chi2 = 0.0;
    for (const auto& [perm, n] : counts) chi2 += (n - expected) * (n - expected) / expected;
    // 99.9% quantile of chi-square with 5 degrees of freedom.
    CHECK(chi2 < 20.515);
    CHECK(sample_permutation(rng, 1) == std::vector<std::size_t>{0});
    CHECK_THROWS_AS(sample_permutation(rng, 0), Error);
  }

  TEST_CASE("a fixed seed gives the same permutation stream") {
    std::mt19937_64 a(77), b(77);
    for (int i = 0; i < 100; ++i) CHECK(sample_permutation(a, 5) == sample_permutation(b, 5));
    std::mt19937_64 c(5);
    for (int i = 0; i < 1000; ++i) CHECK(uniform_index(c, 7) < 7);
  }

  TEST_CASE("initial loss is close to L log V_out") {
    const testing::Fixture f({"Earth", "Parsec", "Solar System", "Black hole"});
    const ETExample ex{"d", TokenSeq{4, 5}, {0, 2}, std::nullopt};
    const auto target = fixed_order_target(ex, OrderStrategy::Lexicographic, f.catalog, f.vocab);
    const double uniform = target.size() * std::log(static_cast<double>(f.vocab.size()));
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(seed);
      const auto p = init_params({6, f.vocab.size(), 32, 3}, 0.01, rng);
      CHECK(std::abs(nll_loss(p, ex.input, target) - uniform) < 0.01 * uniform);
    }
  }

  TEST_CASE("training is bitwise deterministic for a fixed seed") {
    const testing::Fixture f({"Earth", "Parsec", "Solar System"});
    const auto in_vocab = build_input_vocabulary(std::vector<std::string>{"x y z"});
    std::vector<ETExample> corpus = {{"a", TokenSeq{4, 5}, {0, 1}, std::vector<EntityId>{1, 0}},
                                     {"b", TokenSeq{6}, {1, 2}, std::vector<EntityId>{2, 1}},
                                     {"c", TokenSeq{4, 6}, {0, 1, 2}, std::vector<EntityId>{0, 2, 1}}};
    TrainConfig c;
    c.epochs = 5;
    c.dim = 6;
    c.batch_size = 2;
    for (auto strategy : {OrderStrategy::Shuffle, OrderStrategy::MentionOrder}) {
      c.order_strategy = strategy;
      const auto a = train(corpus, c, f.catalog, in_vocab, f.vocab);
      const auto b = train(corpus, c, f.catalog, in_vocab, f.vocab);
      CHECK(a.params.flatten() == b.params.flatten());
      CHECK(a.epoch_loss == b.epoch_loss);
    }
    c.seed = 1;
    c.order_strategy = OrderStrategy::Shuffle;
    const auto other = train(corpus, c, f.catalog, in_vocab, f.vocab);
    c.seed = 0;
    CHECK(other.params.flatten() != train(corpus, c, f.catalog, in_vocab, f.vocab).params.flatten());
  }

  TEST_CASE("training reports misuse") {
    const testing::Fixture f({"Earth", "Parsec"});
    const auto in_vocab = build_input_vocabulary(std::vector<std::string>{"x"});
    TrainConfig c;
    c.order_strategy = OrderStrategy::MentionOrder;
    std::vector<ETExample> corpus = {{"a", TokenSeq{4}, {0, 1}, std::nullopt}};
    try {
      train(corpus, c, f.catalog, in_vocab, f.vocab);
      FAIL("expected MissingMentionOrder");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::MissingMentionOrder);
    }
    try {
      train(std::span<const ETExample>{}, TrainConfig{}, f.catalog, in_vocab, f.vocab);
      FAIL("expected EmptyDataset");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::EmptyDataset);
    }
    TrainConfig bad;
    bad.lr = -1.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    CHECK(parse_order_strategy("mention_order") == OrderStrategy::MentionOrder);
    CHECK(to_string(OrderStrategy::Shuffle) == "shuffle");
    CHECK_THROWS_AS(parse_order_strategy("random"), Error);
  }

  TEST_CASE("loss curves stay finite on random corpora") {
    std::mt19937_64 rng(31);
    const testing::Fixture f({"Earth", "Parsec", "Solar System", "Black hole", "Light-year"});
    const auto in_vocab = build_input_vocabulary(std::vector<std::string>{"a b c d e f g h"});
    for (int round = 0; round < 100; ++round) {
      std::vector<ETExample> corpus;
      const std::size_t n = 1 + testing::pick(rng, 6);
      for (std::size_t i = 0; i < n; ++i) {
        auto gold = testing::random_set(rng, 4, 5);
        if (gold.empty()) gold = {0};
        corpus.push_back({"d" + std::to_string(i),
                          random_tokens(rng, 1 + testing::pick(rng, 6), in_vocab.size(), false), gold,
                          std::nullopt});
      }
      TrainConfig c;
      c.epochs = 3;
      c.dim = 4;
      c.seed = rng();
      c.optimizer = round % 2 ? OptimizerKind::Sgd : OptimizerKind::Adam;
      c.lr = round % 2 ? 0.5 : 0.05;
      const auto r = train(corpus, c, f.catalog, in_vocab, f.vocab);
      for (double l : r.epoch_loss) CHECK(std::isfinite(l));
      CHECK(r.params.all_finite());
    }
  }

  TEST_CASE("a single example is memorized") {
    const testing::Fixture f({"Earth", "Parsec", "Solar System", "Black hole", "Astronomy"});
    const auto in_vocab = build_input_vocabulary(std::vector<std::string>{"the sun and the earth"});
    const ETExample ex{"memo", tokenize("the sun and the earth", in_vocab, TokenizeMode::Input),
                       {0, 2, 3}, std::nullopt};
    TrainConfig c;
    c.epochs = 500;
    c.order_strategy = OrderStrategy::Lexicographic;
    const auto r = train(std::span<const ETExample>(&ex, 1), c, f.catalog, in_vocab, f.vocab);
    const auto target = fixed_order_target(ex, OrderStrategy::Lexicographic, f.catalog, f.vocab);
    CHECK(nll_loss(r.params, ex.input, target) < 0.01);
    for (std::size_t i = 1; i < r.epoch_loss.size(); ++i) CHECK(r.epoch_loss[i] >= 0.0);

    const ToyScorer scorer(r.params);
    DecodeConfig dc;
    dc.beam_size = 1;
    const auto out = decode(scorer, f.trie, ex.input, dc);
    CHECK(parse_output(out.tokens, f.trie).entities == ex.gold);
  }

  TEST_CASE("checkpoints round-trip and reject corruption") {
    std::mt19937_64 rng(2);
    const auto p = random_params(rng, {9, 8, 3, 2});
    const auto path = std::filesystem::temp_directory_path() / "ettag_ckpt.bin";
    save_checkpoint(path, p, 1234);
    const auto ck = load_checkpoint(path);
    CHECK(ck.vocab_hash == 1234u);
    CHECK(ck.params.flatten() == p.flatten());
    CHECK(ck.params.context == 2);
    {
      std::ofstream(path, std::ios::binary | std::ios::app) << 'x';
    }
    CHECK_THROWS_AS(load_checkpoint(path), Error);
  }
}
