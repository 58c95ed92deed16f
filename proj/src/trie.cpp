#include "ettag/trie.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <deque>
#include <fstream>
#include <numeric>

#include "ettag/error.hpp"
#include "ettag/unicode.hpp"

namespace ettag {
namespace {

constexpr char kTrieMagic[6] = {'E', 'T', 'R', 'I', 'E', '1'};
constexpr std::uint32_t kNoDist = std::numeric_limits<std::uint32_t>::max();

static_assert(std::endian::native == std::endian::little,
              "binary cache I/O assumes a little-endian host");

// Tokenized names in one flat buffer.
struct FlatNames {
  std::vector<TokenId> tokens;
  std::vector<std::size_t> offset{0};

  std::span<const TokenId> operator[](std::size_t i) const {
    return {tokens.data() + offset[i], offset[i + 1] - offset[i]};
  }
};

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error(ErrorKind::Io, "truncated trie cache");
  return v;
}

}  // namespace

void DecodeConfig::validate() const {
  if (beam_size < 1) throw Error(ErrorKind::InvalidArgument, "beam_size must be >= 1");
  if (max_entities < 1) throw Error(ErrorKind::InvalidArgument, "max_entities must be >= 1");
  if (max_tokens < 1) throw Error(ErrorKind::InvalidArgument, "max_tokens must be >= 1");
}

void EmittedSet::add(EntityId id) {
  auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it == ids_.end() || *it != id) ids_.insert(it, id);
  ++slots_;
}

bool EmittedSet::contains(EntityId id) const {
  return std::binary_search(ids_.begin(), ids_.end(), id);
}

std::uint64_t trie_cache_key(const EntityCatalog& catalog, const Vocabulary& output_vocab) {
  ContentHash h;
  h.update("ETRIE1");
  h.update_u64(catalog.content_hash());
  h.update_u64(output_vocab.content_hash());
  return h.value();
}

TokenTrie TokenTrie::build(const EntityCatalog& catalog, const Vocabulary& output_vocab,
                           const Tokenizer& tokenizer) {
  if (catalog.empty()) {
    throw Error(ErrorKind::EmptyCatalog, "cannot build a trie over an empty catalog");
  }
  FlatNames names;
  names.offset.reserve(catalog.size() + 1);
  for (const auto& name : catalog.names()) {
    const TokenSeq seq = tokenize(name.view(), output_vocab, TokenizeMode::Output, tokenizer);
    if (seq.empty()) {
      throw Error(ErrorKind::InvalidName, "entity name tokenizes to nothing: " + name.str());
    }
    names.tokens.insert(names.tokens.end(), seq.begin(), seq.end());
    names.offset.push_back(names.tokens.size());
  }

  std::vector<EntityId> order(catalog.size());
  std::iota(order.begin(), order.end(), EntityId{0});
  std::sort(order.begin(), order.end(), [&](EntityId a, EntityId b) {
    const auto x = names[a];
    const auto y = names[b];
    return std::lexicographical_compare(x.begin(), x.end(), y.begin(), y.end());
  });
  for (std::size_t i = 1; i < order.size(); ++i) {
    const auto x = names[order[i - 1]];
    const auto y = names[order[i]];
    if (std::equal(x.begin(), x.end(), y.begin(), y.end())) {
      throw Error(ErrorKind::DuplicateName,
                  "two entity names share a tokenization: " + catalog.name(order[i]).str());
    }
  }

  TokenTrie trie;
  trie.vocab_size_ = output_vocab.size();
  trie.cache_key_ = trie_cache_key(catalog, output_vocab);
  trie.terminal_.reserve(names.tokens.size() + 1);

  // Preorder DFS over the sorted name range [lo, hi) sharing a prefix of
  // length `depth`. A node's child block is appended before any descendant is
  // visited, which keeps child_offset_ monotone.
  struct Builder {
    TokenTrie& t;
    const FlatNames& names;
    const std::vector<EntityId>& order;

    void visit(std::size_t lo, std::size_t hi, std::size_t depth) {
      const auto node = static_cast<NodeIndex>(t.terminal_.size());
      t.terminal_.push_back(-1);
      t.child_offset_.push_back(static_cast<std::uint32_t>(t.child_token_.size()));
      if (names[order[lo]].size() == depth) {
        t.terminal_[node] = static_cast<std::int32_t>(order[lo]);
        ++lo;
      }
      std::vector<std::pair<std::size_t, std::size_t>> groups;
      for (std::size_t i = lo; i < hi;) {
        const TokenId tok = names[order[i]][depth];
        std::size_t j = i + 1;
        while (j < hi && names[order[j]][depth] == tok) ++j;
        groups.emplace_back(i, j);
        t.child_token_.push_back(tok);
        t.child_node_.push_back(0);
        i = j;
      }
      const std::size_t first_edge = t.child_token_.size() - groups.size();
      for (std::size_t g = 0; g < groups.size(); ++g) {
        t.child_node_[first_edge + g] = static_cast<NodeIndex>(t.terminal_.size());
        visit(groups[g].first, groups[g].second, depth + 1);
      }
    }
  };
  Builder{trie, names, order}.visit(0, order.size(), 0);
  trie.child_offset_.push_back(static_cast<std::uint32_t>(trie.child_token_.size()));
  trie.finalize();
  return trie;
}

void TokenTrie::finalize() {
  const std::size_t n = terminal_.size();
  subtree_end_.assign(n, 0);
  terminal_count_.assign(n, 0);
  min_terminal_dist_.assign(n, kNoDist);
  depth_.assign(n, 0);

  std::size_t entities = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (terminal_[i] >= 0) ++entities;
    for (auto c : child_nodes(static_cast<NodeIndex>(i))) depth_[c] = depth_[i] + 1;
  }
  max_depth_ = n == 0 ? 0 : *std::max_element(depth_.begin(), depth_.end());

  for (std::size_t r = n; r-- > 0;) {
    const auto node = static_cast<NodeIndex>(r);
    const auto kids = child_nodes(node);
    subtree_end_[r] = kids.empty() ? node + 1 : subtree_end_[kids.back()];
    std::uint32_t count = terminal_[r] >= 0 ? 1 : 0;
    std::uint32_t dist = terminal_[r] >= 0 ? 0 : kNoDist;
    for (auto c : kids) {
      count += terminal_count_[c];
      if (min_terminal_dist_[c] != kNoDist) dist = std::min(dist, min_terminal_dist_[c] + 1);
    }
    terminal_count_[r] = count;
    min_terminal_dist_[r] = dist;
  }

  entity_terminal_.assign(entities, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (terminal_[i] >= 0) entity_terminal_[static_cast<std::size_t>(terminal_[i])] = static_cast<NodeIndex>(i);
  }
  by_length_.resize(entities);
  std::iota(by_length_.begin(), by_length_.end(), EntityId{0});
  std::stable_sort(by_length_.begin(), by_length_.end(), [&](EntityId a, EntityId b) {
    return depth_[entity_terminal_[a]] < depth_[entity_terminal_[b]];
  });
}

TrieStats TokenTrie::stats() const {
  return {node_count(), max_depth_, entity_count()};
}

std::span<const TokenId> TokenTrie::child_tokens(NodeIndex node) const {
  const auto b = child_offset_[node];
  return {child_token_.data() + b, child_offset_[node + 1] - b};
}

std::span<const NodeIndex> TokenTrie::child_nodes(NodeIndex node) const {
  const auto b = child_offset_[node];
  return {child_node_.data() + b, child_offset_[node + 1] - b};
}

std::optional<NodeIndex> TokenTrie::child(NodeIndex node, TokenId token) const {
  const auto toks = child_tokens(node);
  auto it = std::lower_bound(toks.begin(), toks.end(), token);
  if (it == toks.end() || *it != token) return std::nullopt;
  return child_nodes(node)[static_cast<std::size_t>(it - toks.begin())];
}

std::optional<EntityId> TokenTrie::terminal(NodeIndex node) const {
  const auto t = terminal_.at(node);
  if (t < 0) return std::nullopt;
  return static_cast<EntityId>(t);
}

std::optional<EntityId> TokenTrie::lookup(std::span<const TokenId> tokens) const {
  NodeIndex node = 0;
  for (TokenId t : tokens) {
    auto next = child(node, t);
    if (!next) return std::nullopt;
    node = *next;
  }
  return terminal(node);
}

std::size_t TokenTrie::min_unblocked_name_length(std::span<const NodeIndex> blocked_nodes,
                                                 EntityId also_blocked, bool use_blocking) const {
  for (EntityId e : by_length_) {
    if (use_blocking) {
      if (e == also_blocked) continue;
      if (std::binary_search(blocked_nodes.begin(), blocked_nodes.end(), entity_terminal_[e])) {
        continue;
      }
    }
    return depth_[entity_terminal_[e]];
  }
  return kUnboundedTokens;
}

std::size_t TokenTrie::min_unblocked_depth(NodeIndex node, std::span<const NodeIndex> blocked_nodes,
                                           std::size_t limit) const {
  // Level-order search for the nearest terminal that is not blocked.
  std::vector<NodeIndex> level{node};
  std::vector<NodeIndex> next;
  for (std::size_t dist = 0; !level.empty() && dist <= limit; ++dist) {
    for (NodeIndex v : level) {
      if (terminal_[v] >= 0 &&
          !std::binary_search(blocked_nodes.begin(), blocked_nodes.end(), v)) {
        return dist;
      }
    }
    next.clear();
    for (NodeIndex v : level) {
      const auto kids = child_nodes(v);
      next.insert(next.end(), kids.begin(), kids.end());
    }
    level.swap(next);
  }
  return kUnboundedTokens;
}

void allowed_tokens(const TokenTrie& trie, const TrieCursor& cursor, const EmittedSet& emitted,
                    const DecodeConfig& config, std::vector<TokenId>& out,
                    std::size_t remaining) {
  out.clear();
  if (cursor.finished() || remaining == 0) return;
  const NodeIndex node = cursor.node();
  const bool blocking = config.no_repeat && !emitted.ids().empty();
  const bool budgeted = remaining != kUnboundedTokens;

  // Terminal nodes of emitted entities, sorted; they are what blocking prunes.
  std::vector<NodeIndex> blocked;
  if (blocking) {
    blocked.reserve(emitted.ids().size());
    for (EntityId e : emitted.ids()) blocked.push_back(trie.entity_terminal_[e]);
    std::sort(blocked.begin(), blocked.end());
  }

  if (node == 0) {
    if (emitted.empty() && config.allow_empty) out.push_back(reserved::kEos);
  } else if (const auto e = trie.terminal_[node]; e >= 0) {
    const auto entity = static_cast<EntityId>(e);
    if (!(config.no_repeat && emitted.contains(entity))) {
      out.push_back(reserved::kEos);
      if (emitted.slots() + 1 < config.max_entities) {
        const std::size_t next_len =
            trie.min_unblocked_name_length(blocked, entity, config.no_repeat);
        // SEP + shortest remaining name + EOS
        if (next_len != kUnboundedTokens && (!budgeted || next_len + 2 <= remaining)) {
          out.push_back(reserved::kSep);
        }
      }
    }
  }

  const auto toks = trie.child_tokens(node);
  const auto kids = trie.child_nodes(node);
  if (!blocking && !budgeted) {
    out.insert(out.end(), toks.begin(), toks.end());
    return;
  }
  // Children are in preorder, so their subtree ranges are disjoint and
  // increasing; walk the sorted blocked terminals alongside them.
  auto b = blocked.begin();
  for (std::size_t i = 0; i < kids.size(); ++i) {
    const NodeIndex c = kids[i];
    const NodeIndex end = trie.subtree_end_[c];
    while (b != blocked.end() && *b < c) ++b;
    std::uint32_t inside = 0;
    auto first_inside = b;
    while (b != blocked.end() && *b < end) {
      ++inside;
      ++b;
    }
    if (inside >= trie.terminal_count_[c]) continue;
    if (budgeted) {
      // child token + path to a terminal + EOS
      std::size_t dist = trie.min_terminal_dist_[c];
      if (inside > 0 && dist + 2 <= remaining) {
        dist = trie.min_unblocked_depth(c, std::span<const NodeIndex>(first_inside, b),
                                        remaining - 2);
      }
      if (dist == kUnboundedTokens || dist + 2 > remaining) continue;
    }
    out.push_back(toks[i]);
  }
}

std::vector<TokenId> allowed_tokens(const TokenTrie& trie, const TrieCursor& cursor,
                                    const EmittedSet& emitted, const DecodeConfig& config,
                                    std::size_t remaining_tokens) {
  std::vector<TokenId> out;
  allowed_tokens(trie, cursor, emitted, config, out, remaining_tokens);
  return out;
}

TrieCursor advance(const TokenTrie& trie, const TrieCursor& cursor, TokenId token) {
  if (cursor.finished()) {
    throw Error(ErrorKind::DisallowedToken, "cannot advance past EOS");
  }
  const NodeIndex node = cursor.node();
  if (token == reserved::kEos) {
    if (node == 0 || trie.terminal(node)) return TrieCursor::end();
  } else if (token == reserved::kSep) {
    if (node != 0 && trie.terminal(node)) return TrieCursor::root();
  } else if (!is_reserved(token)) {
    if (auto c = trie.child(node, token)) return TrieCursor::at(*c);
  }
  throw Error(ErrorKind::DisallowedToken,
              "token " + std::to_string(token) + " is not legal at node " + std::to_string(node));
}

ConstraintState step(const TokenTrie& trie, const ConstraintState& state, TokenId token) {
  ConstraintState next = state;
  if ((token == reserved::kSep || token == reserved::kEos) && !state.cursor.finished()) {
    if (auto e = trie.terminal(state.cursor.node()); e && state.cursor.node() != 0) {
      next.emitted.add(*e);
    }
  }
  next.cursor = advance(trie, state.cursor, token);
  ++next.length;
  return next;
}

ConstraintState step_checked(const TokenTrie& trie, const ConstraintState& state, TokenId token,
                             const DecodeConfig& config) {
  const std::size_t remaining =
      config.max_tokens > state.length ? config.max_tokens - state.length : 0;
  const auto allowed = allowed_tokens(trie, state.cursor, state.emitted, config, remaining);
  if (!std::binary_search(allowed.begin(), allowed.end(), token)) {
    throw Error(ErrorKind::DisallowedToken,
                "token " + std::to_string(token) + " is not in the allowed set");
  }
  return step(trie, state, token);
}

void TokenTrie::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write trie cache: " + path.string());
  out.write(kTrieMagic, sizeof(kTrieMagic));
  write_pod<std::uint64_t>(out, cache_key_);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(node_count()));
  for (std::size_t i = 0; i < node_count(); ++i) {
    const auto node = static_cast<NodeIndex>(i);
    write_pod<std::int32_t>(out, terminal_[i]);
    const auto toks = child_tokens(node);
    const auto kids = child_nodes(node);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(toks.size()));
    for (std::size_t k = 0; k < toks.size(); ++k) {
      write_pod<std::uint32_t>(out, toks[k]);
      write_pod<std::uint32_t>(out, kids[k]);
    }
  }
  if (!out) throw Error(ErrorKind::Io, "failed writing trie cache: " + path.string());
}

TokenTrie TokenTrie::load(const std::filesystem::path& path, std::uint64_t expected_key,
                          std::size_t expected_entities, std::size_t vocab_size) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open trie cache: " + path.string());
  char magic[sizeof(kTrieMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kTrieMagic, sizeof(magic)) != 0) {
    throw Error(ErrorKind::CacheMismatch, "not a trie cache file: " + path.string());
  }
  const auto key = read_pod<std::uint64_t>(in);
  if (key != expected_key) {
    throw Error(ErrorKind::CacheMismatch, "trie cache is stale for this catalog/vocabulary");
  }
  const auto n = read_pod<std::uint32_t>(in);
  if (n == 0) throw Error(ErrorKind::CacheMismatch, "trie cache has no nodes");

  TokenTrie t;
  t.vocab_size_ = vocab_size;
  t.cache_key_ = key;
  t.terminal_.reserve(n);
  t.child_offset_.reserve(std::size_t{n} + 1);
  std::vector<bool> seen_entity(expected_entities, false);
  auto corrupt = [&](const std::string& why) {
    return Error(ErrorKind::CacheMismatch, "corrupt trie cache (" + why + "): " + path.string());
  };
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto term = read_pod<std::int32_t>(in);
    if (term >= 0) {
      if (static_cast<std::size_t>(term) >= expected_entities || seen_entity[term]) {
        throw corrupt("bad terminal");
      }
      seen_entity[term] = true;
    } else if (term != -1) {
      throw corrupt("bad terminal");
    }
    t.terminal_.push_back(term);
    t.child_offset_.push_back(static_cast<std::uint32_t>(t.child_token_.size()));
    const auto count = read_pod<std::uint32_t>(in);
    if (count > n) throw corrupt("bad child count");
    TokenId prev = 0;
    for (std::uint32_t k = 0; k < count; ++k) {
      const auto tok = read_pod<std::uint32_t>(in);
      const auto child = read_pod<std::uint32_t>(in);
      if (is_reserved(tok) || tok >= vocab_size || (k > 0 && tok <= prev)) {
        throw corrupt("bad child token");
      }
      if (child <= i || child >= n) throw corrupt("bad child index");
      t.child_token_.push_back(tok);
      t.child_node_.push_back(child);
      prev = tok;
    }
  }
  t.child_offset_.push_back(static_cast<std::uint32_t>(t.child_token_.size()));
  if (std::find(seen_entity.begin(), seen_entity.end(), false) != seen_entity.end()) {
    throw corrupt("missing entities");
  }
  // Preorder layout: first child is i+1, each later child starts where the
  // previous sibling's subtree ends, and the root spans everything.
  t.finalize();
  for (std::uint32_t i = 0; i < n; ++i) {
    NodeIndex expect = i + 1;
    for (auto c : t.child_nodes(i)) {
      if (c != expect) throw corrupt("not in preorder");
      expect = t.subtree_end_[c];
    }
    if (t.subtree_end_[i] != expect) throw corrupt("not in preorder");
    if (t.terminal_count_[i] == 0) throw corrupt("dead-end node");
  }
  if (t.subtree_end_[0] != n) throw corrupt("unreachable nodes");
  return t;
}

}  // namespace ettag
