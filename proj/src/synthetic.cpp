#include "ettag/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <unordered_set>

#include "ettag/error.hpp"
#include "ettag/toy_model.hpp"

namespace ettag {
namespace {

constexpr std::array<std::string_view, 24> kSyllables = {
    "ka", "lo", "mi", "ren", "sa", "tor", "vel", "an", "bri", "co", "dun", "el",
    "fa", "gar", "hol", "is", "jun", "mar", "nor", "os", "pel", "quin", "ru", "ta"};

constexpr std::array<std::string_view, 12> kHeads = {
    "Port", "Mount", "Lake", "Saint", "North", "New", "Royal", "Grand", "Fort", "Cape", "East", "Upper"};

constexpr std::array<std::string_view, 10> kTails = {
    "Harbour", "Station", "University", "Council", "River", "Airport", "Party", "Club", "Bridge", "Museum"};

constexpr std::array<std::string_view, 24> kNoise = {
    "the", "said", "on", "report", "after", "with", "officials", "from", "week", "while",
    "a", "in", "near", "during", "that", "new", "its", "by", "was", "today",
    "also", "before", "team", "plans"};

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::string pseudo_word(std::mt19937_64& rng, std::size_t syllables, bool capital) {
  std::string w;
  for (std::size_t i = 0; i < syllables; ++i) w += kSyllables[uniform_index(rng, kSyllables.size())];
  if (capital) w[0] = static_cast<char>(w[0] - 'a' + 'A');
  return w;
}

// Distinct pseudo-words not already in `taken`; inserts them into it.
std::vector<std::string> fresh_words(std::mt19937_64& rng, std::size_t n, bool capital,
                                     std::unordered_set<std::string>& taken) {
  std::vector<std::string> out;
  while (out.size() < n) {
    auto w = pseudo_word(rng, 2 + uniform_index(rng, 2), capital);
    if (taken.insert(w).second) out.push_back(std::move(w));
  }
  return out;
}

std::vector<std::string> benchmark_names(std::mt19937_64& rng, std::size_t count,
                                         std::unordered_set<std::string>& taken) {
  std::vector<std::string> names;
  std::unordered_set<std::string> seen;
  auto add = [&](std::string n) {
    if (names.size() < count && seen.insert(n).second) names.push_back(std::move(n));
  };
  while (names.size() < count) {
    const auto core = fresh_words(rng, 1, true, taken).front();
    const std::string stem = std::string(kHeads[uniform_index(rng, kHeads.size())]) + " " + core;
    switch (uniform_index(rng, 4)) {
      case 0:
        // A name that is a strict token prefix of another.
        add(stem);
        add(stem + " " + std::string(kTails[uniform_index(rng, kTails.size())]));
        break;
      case 1:
        // Two names diverging after a shared prefix.
        add(stem + " " + std::string(kTails[uniform_index(rng, 5)]));
        add(stem + " " + std::string(kTails[5 + uniform_index(rng, 5)]));
        break;
      case 2:
        add(core + " (" + fresh_words(rng, 1, false, taken).front() + ")");
        break;
      default:
        add(core);
        break;
    }
  }
  return names;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (entities == 0) throw Error(ErrorKind::InvalidArgument, "entities must be >= 1");
  if (docs == 0) throw Error(ErrorKind::InvalidArgument, "docs must be >= 1");
  if (min_gold == 0 || min_gold > max_gold || max_gold > entities) {
    throw Error(ErrorKind::InvalidArgument, "need 1 <= min_gold <= max_gold <= entities");
  }
  if (!(eval_fraction >= 0.0 && eval_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "eval_fraction must be in [0, 1)");
  }
  if (!(name_mention_rate >= 0.0 && name_mention_rate <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "name_mention_rate must be in [0, 1]");
  }
}

SyntheticBenchmark make_synthetic_benchmark(const SyntheticConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::unordered_set<std::string> taken;
  for (auto w : kNoise) taken.emplace(w);

  SyntheticBenchmark out;
  out.names = benchmark_names(rng, config.entities, taken);
  std::vector<std::array<std::string, 2>> cues(config.entities);
  for (auto& c : cues) {
    auto w = fresh_words(rng, 2, false, taken);
    c = {w[0], w[1]};
  }

  const auto n_eval =
      static_cast<std::size_t>(std::llround(config.eval_fraction * static_cast<double>(config.docs)));
  std::vector<std::size_t> pool(config.entities);
  for (std::size_t d = 0; d < config.docs; ++d) {
    const std::size_t k = config.min_gold + uniform_index(rng, config.max_gold - config.min_gold + 1);
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    // The first k slots of a partial Fisher-Yates shuffle are a uniform
    // ordered sample, which doubles as the mention order.
    for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);

    ETRecord r;
    r.doc_id = "syn-" + std::to_string(d);
    std::vector<std::string> order;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t e = pool[i];
      const std::size_t filler = uniform_index(rng, config.noise_words + 1);
      for (std::size_t f = 0; f < filler; ++f) {
        if (!r.text.empty()) r.text += ' ';
        r.text += kNoise[uniform_index(rng, kNoise.size())];
      }
      if (!r.text.empty()) r.text += ' ';
      r.text += uniform01(rng) < config.name_mention_rate ? out.names[e] : cues[e][uniform_index(rng, 2)];
      order.push_back(out.names[e]);
    }
    r.text += " .";
    std::vector<std::size_t> ids(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(ids.begin(), ids.end());
    for (std::size_t id : ids) r.gold.push_back(out.names[id]);
    r.gold_order = std::move(order);
    (d + n_eval < config.docs ? out.train : out.eval).push_back(std::move(r));
  }
  return out;
}

std::vector<std::string> synthetic_names(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  // Enough distinct words that a few hundred thousand names stay distinct
  // while frequent words still produce deep shared prefixes.
  const std::size_t vocab = std::max<std::size_t>(64, count / 8);
  std::unordered_set<std::string> taken;
  std::vector<std::string> words;
  words.reserve(vocab);
  while (words.size() < vocab) {
    auto w = pseudo_word(rng, 2 + uniform_index(rng, 3), true);
    if (taken.insert(w).second) words.push_back(std::move(w));
  }
  std::vector<double> cdf(vocab);
  double total = 0.0;
  for (std::size_t r = 0; r < vocab; ++r) cdf[r] = total += 1.0 / static_cast<double>(r + 1);
  auto draw = [&] {
    const double u = uniform01(rng) * total;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), vocab - 1);
  };

  std::unordered_set<std::string> seen;
  seen.reserve(count * 2);
  std::vector<std::string> names;
  names.reserve(count);
  constexpr std::array<double, 4> kLengthCdf = {0.25, 0.65, 0.9, 1.0};
  while (names.size() < count) {
    const double u = uniform01(rng);
    const std::size_t len =
        1 + static_cast<std::size_t>(std::lower_bound(kLengthCdf.begin(), kLengthCdf.end(), u) -
                                     kLengthCdf.begin());
    std::string name = words[draw()];
    for (std::size_t i = 1; i < len; ++i) {
      name += ' ';
      name += words[draw()];
    }
    if (seen.insert(name).second) names.push_back(std::move(name));
  }
  return names;
}

}  // namespace ettag
