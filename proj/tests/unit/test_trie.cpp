#include <doctest.h>

#include <filesystem>
#include <random>

#include "../support.hpp"
#include "ettag/error.hpp"
#include "ettag/trie.hpp"

using namespace ettag;
using testing::Fixture;

namespace {

TokenId tok(const Vocabulary& v, std::string_view piece) {
  const auto id = v.find(piece);
  REQUIRE(id.has_value());
  return *id;
}

DecodeConfig small_config(std::size_t max_entities, std::size_t max_tokens = 256) {
  DecodeConfig c;
  c.max_entities = max_entities;
  c.max_tokens = max_tokens;
  return c;
}

}  // namespace

TEST_SUITE("trie") {
  TEST_CASE("prefix-overlapping names share a path") {
    const Fixture f({"Paris", "Paris Métro"});
    const auto paris = f.trie.child(0, tok(f.vocab, "Paris"));
    REQUIRE(paris.has_value());
    CHECK(f.trie.terminal(*paris) == 0u);
    const auto metro = f.trie.child(*paris, tok(f.vocab, "Métro"));
    REQUIRE(metro.has_value());
    CHECK(f.trie.terminal(*metro) == 1u);
    CHECK(f.trie.stats().node_count == 3);
    CHECK(f.trie.stats().max_depth == 2);
    CHECK(f.trie.stats().entity_count == 2);
  }

  TEST_CASE("empty catalog is rejected") {
    const EntityCatalog empty;
    Vocabulary v;
    try {
      TokenTrie::build(empty, v);
      FAIL("expected EmptyCatalog");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::EmptyCatalog);
    }
  }

  TEST_CASE("root allows every first token and nothing else") {
    const Fixture f({"Earth", "Parsec"});
    const auto allowed = allowed_tokens(f.trie, TrieCursor::root(), {}, DecodeConfig{});
    CHECK(allowed == std::vector<TokenId>{tok(f.vocab, "Earth"), tok(f.vocab, "Parsec")});
  }

  TEST_CASE("a terminal with children offers the child, SEP and EOS") {
    const Fixture f({"Paris", "Paris Métro"});
    const ConstraintState s = step(f.trie, {}, tok(f.vocab, "Paris"));
    const auto allowed = allowed_tokens(f.trie, s.cursor, s.emitted, DecodeConfig{});
    CHECK(allowed == std::vector<TokenId>{reserved::kEos, reserved::kSep, tok(f.vocab, "Métro")});
  }

  TEST_CASE("no_repeat blocks the terminal of an emitted entity") {
    const Fixture f({"Earth", "Parsec", "Earth Science"});
    const TokenId earth = tok(f.vocab, "Earth");
    ConstraintState s;
    s = step(f.trie, s, earth);
    s = step(f.trie, s, reserved::kSep);
    s = step(f.trie, s, earth);
    const auto allowed = allowed_tokens(f.trie, s.cursor, s.emitted, DecodeConfig{});
    const auto language = testing::brute_force_language(f.name_tokens, small_config(3, 64));
    const TokenSeq prefix = {earth, reserved::kSep, earth};
    const auto expected = testing::next_tokens(language, prefix);
    CHECK(std::set<TokenId>(allowed.begin(), allowed.end()) == expected);
    CHECK(allowed == std::vector<TokenId>{tok(f.vocab, "Science")});
  }

  TEST_CASE("a fully emitted subtree is pruned at the root") {
    const Fixture f({"Earth", "Parsec"});
    ConstraintState s;
    s = step(f.trie, s, tok(f.vocab, "Earth"));
    s = step(f.trie, s, reserved::kSep);
    const auto allowed = allowed_tokens(f.trie, s.cursor, s.emitted, DecodeConfig{});
    CHECK(allowed == std::vector<TokenId>{tok(f.vocab, "Parsec")});
  }

  TEST_CASE("EOS at the root needs allow_empty and an empty output") {
    const Fixture f({"Earth"});
    DecodeConfig c;
    auto root = allowed_tokens(f.trie, TrieCursor::root(), {}, c);
    CHECK(std::find(root.begin(), root.end(), reserved::kEos) == root.end());
    c.allow_empty = true;
    root = allowed_tokens(f.trie, TrieCursor::root(), {}, c);
    CHECK(root.front() == reserved::kEos);
    const auto end = step(f.trie, {}, reserved::kEos);
    CHECK(end.cursor.finished());
    CHECK(allowed_tokens(f.trie, end.cursor, end.emitted, c).empty());
  }

  TEST_CASE("step_checked rejects tokens outside the allowed set") {
    const Fixture f({"Earth", "Parsec"});
    try {
      step_checked(f.trie, {}, reserved::kSep, DecodeConfig{});
      FAIL("expected DisallowedToken");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::DisallowedToken);
    }
    CHECK_THROWS_AS(advance(f.trie, TrieCursor::root(), reserved::kSep), Error);
  }

  TEST_CASE("max_entities forces EOS once the limit is reached") {
    const Fixture f({"Earth", "Parsec", "Sun"});
    ConstraintState s;
    s = step(f.trie, s, tok(f.vocab, "Earth"));
    s = step(f.trie, s, reserved::kSep);
    s = step(f.trie, s, tok(f.vocab, "Sun"));
    const auto allowed = allowed_tokens(f.trie, s.cursor, s.emitted, small_config(2));
    CHECK(allowed == std::vector<TokenId>{reserved::kEos});
  }

  TEST_CASE("lookup finds exact names only") {
    const Fixture f({"Paris", "Paris Métro"});
    for (EntityId id = 0; id < f.catalog.size(); ++id) {
      CHECK(f.trie.lookup(f.name_tokens[id]) == id);
      CHECK(f.trie.name_length(id) == f.name_tokens[id].size());
    }
    CHECK_FALSE(f.trie.lookup(TokenSeq{tok(f.vocab, "Métro")}).has_value());
    CHECK_FALSE(f.trie.lookup(TokenSeq{}).has_value());
  }

  TEST_CASE("reachable language equals brute force enumeration") {
    std::mt19937_64 rng(20);
    for (int round = 0; round < 12; ++round) {
      const Fixture f(testing::random_names(rng, 4 + testing::pick(rng, 10), 3));
      for (std::size_t budget : {std::size_t{4}, std::size_t{7}, std::size_t{12}, std::size_t{40}}) {
        DecodeConfig c = small_config(1 + testing::pick(rng, 3), budget);
        c.allow_empty = testing::pick(rng, 2) == 0;
        c.no_repeat = testing::pick(rng, 4) != 0;
        CAPTURE(round);
        CAPTURE(budget);
        const auto expected = testing::brute_force_language(f.name_tokens, c);
        CHECK(testing::reachable_language(f.trie, c) == expected);
      }
    }
  }

  TEST_CASE("every reachable state can still finish") {
    std::mt19937_64 rng(5);
    for (int round = 0; round < 10; ++round) {
      const Fixture f(testing::random_names(rng, 15, 4));
      DecodeConfig c = small_config(3, 3 + testing::pick(rng, 12));
      // Random walks: every non-finished state must offer at least one token
      // and every walk must reach EOS within the budget.
      for (int walk = 0; walk < 300; ++walk) {
        ConstraintState s;
        std::size_t steps = 0;
        bool stuck = false;
        while (!s.cursor.finished()) {
          const auto allowed = allowed_tokens(f.trie, s.cursor, s.emitted, c, c.max_tokens - s.length);
          if (allowed.empty()) {
            stuck = true;
            break;
          }
          s = step(f.trie, s, allowed[testing::pick(rng, allowed.size())]);
          ++steps;
        }
        CHECK_FALSE(stuck);
        CHECK(steps <= c.max_tokens);
      }
    }
  }

  TEST_CASE("build is deterministic") {
    std::mt19937_64 rng(9);
    const auto names = testing::random_names(rng, 80, 10);
    const Fixture a(names), b(names);
    CHECK(a.trie.stats().node_count == b.trie.stats().node_count);
    CHECK(a.trie.stats().max_depth == b.trie.stats().max_depth);
    CHECK(a.trie.cache_key() == b.trie.cache_key());
    const DecodeConfig c;
    for (int i = 0; i < 1000; ++i) {
      const auto node = static_cast<NodeIndex>(testing::pick(rng, a.trie.node_count()));
      EmittedSet emitted;
      if (testing::pick(rng, 2)) emitted.add(static_cast<EntityId>(testing::pick(rng, names.size())));
      CHECK(allowed_tokens(a.trie, TrieCursor::at(node), emitted, c) ==
            allowed_tokens(b.trie, TrieCursor::at(node), emitted, c));
    }
  }

  TEST_CASE("cache round-trips and rejects a stale key") {
    const Fixture f({"Paris", "Paris Métro", "Earth"});
    const auto path = std::filesystem::temp_directory_path() / "ettag_trie_cache.bin";
    f.trie.save(path);
    const auto loaded = TokenTrie::load(path, f.trie.cache_key(), f.catalog.size(), f.vocab.size());
    CHECK(loaded.node_count() == f.trie.node_count());
    const auto lang = testing::reachable_language(f.trie, small_config(2, 20));
    CHECK(testing::reachable_language(loaded, small_config(2, 20)) == lang);

    const Fixture other({"Paris", "Earth"});
    CHECK(trie_cache_key(other.catalog, other.vocab) != f.trie.cache_key());
    try {
      TokenTrie::load(path, trie_cache_key(other.catalog, other.vocab), other.catalog.size(),
                      other.vocab.size());
      FAIL("expected CacheMismatch");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::CacheMismatch);
    }
  }
}
