#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "ettag/catalog.hpp"
#include "ettag/decode_config.hpp"
#include "ettag/vocab.hpp"

namespace ettag {

using NodeIndex = std::uint32_t;

/// Position of a partial decode inside the constraint automaton. Node 0 is
/// the root, where the next token starts a new entity name.
class TrieCursor {
 public:
  static constexpr TrieCursor root() { return TrieCursor(0, false); }
  static constexpr TrieCursor at(NodeIndex node) { return TrieCursor(node, false); }
  static constexpr TrieCursor end() { return TrieCursor(0, true); }

  constexpr NodeIndex node() const { return node_; }
  constexpr bool finished() const { return finished_; }
  constexpr bool at_boundary() const { return !finished_ && node_ == 0; }

  friend constexpr bool operator==(TrieCursor, TrieCursor) = default;

 private:
  constexpr TrieCursor(NodeIndex node, bool finished) : node_(node), finished_(finished) {}

  NodeIndex node_;
  bool finished_;
};

/// Entities emitted so far by one hypothesis. `ids` is a sorted set; `slots`
/// also counts repeats (only possible with no_repeat off).
class EmittedSet {
 public:
  void add(EntityId id);
  bool contains(EntityId id) const;
  std::span<const EntityId> ids() const { return ids_; }
  std::size_t slots() const { return slots_; }
  bool empty() const { return slots_ == 0; }

  friend bool operator==(const EmittedSet&, const EmittedSet&) = default;

 private:
  std::vector<EntityId> ids_;
  std::size_t slots_ = 0;
};

struct TrieStats {
  std::size_t node_count = 0;
  std::size_t max_depth = 0;
  std::size_t entity_count = 0;
};

inline constexpr std::size_t kUnboundedTokens = std::numeric_limits<std::size_t>::max();

// Prefix tree over tokenized entity names, stored as a flat arena in DFS
// preorder. Children of a node are a contiguous, token-sorted slice of the
// child arrays, and every subtree is the node range [n, subtree_end(n)).
class TokenTrie {
 public:
  static TokenTrie build(const EntityCatalog& catalog, const Vocabulary& output_vocab,
                         const Tokenizer& tokenizer = default_tokenizer());

  TrieStats stats() const;
  std::size_t node_count() const { return terminal_.size(); }
  std::size_t entity_count() const { return entity_terminal_.size(); }
  std::size_t output_vocab_size() const { return vocab_size_; }
  std::uint64_t cache_key() const { return cache_key_; }

  std::span<const TokenId> child_tokens(NodeIndex node) const;
  std::span<const NodeIndex> child_nodes(NodeIndex node) const;
  std::optional<NodeIndex> child(NodeIndex node, TokenId token) const;
  std::optional<EntityId> terminal(NodeIndex node) const;

  NodeIndex terminal_node(EntityId id) const { return entity_terminal_.at(id); }
  /// Token length of an entity name.
  std::size_t name_length(EntityId id) const { return depth_[entity_terminal_.at(id)]; }

  /// Entity spelled exactly by `tokens`, if any.
  std::optional<EntityId> lookup(std::span<const TokenId> tokens) const;

  /// Binary cache: "ETRIE1", u64 cache key, u32 node count, then per node
  /// i32 terminal (-1 for none), u32 child count, (u32 token, u32 node) pairs.
  void save(const std::filesystem::path& path) const;
  /// Throws CacheMismatch when the stored key differs from `expected_key`.
  static TokenTrie load(const std::filesystem::path& path, std::uint64_t expected_key,
                        std::size_t expected_entities, std::size_t vocab_size);

  friend void allowed_tokens(const TokenTrie& trie, const TrieCursor& cursor,
                             const EmittedSet& emitted, const DecodeConfig& config,
                             std::vector<TokenId>& out, std::size_t remaining_tokens);

 private:
  void finalize();
  std::size_t min_unblocked_name_length(std::span<const NodeIndex> blocked_nodes,
                                        EntityId also_blocked, bool use_blocking) const;
  std::size_t min_unblocked_depth(NodeIndex node, std::span<const NodeIndex> blocked_nodes,
                                  std::size_t limit) const;

  // per node
  std::vector<std::int32_t> terminal_;
  std::vector<std::uint32_t> child_offset_;  // CSR, size node_count + 1
  std::vector<NodeIndex> subtree_end_;
  std::vector<std::uint32_t> terminal_count_;
  std::vector<std::uint32_t> min_terminal_dist_;
  std::vector<std::uint32_t> depth_;
  // per child edge
  std::vector<TokenId> child_token_;
  std::vector<NodeIndex> child_node_;
  // per entity
  std::vector<NodeIndex> entity_terminal_;
  std::vector<EntityId> by_length_;

  std::size_t vocab_size_ = 0;
  std::size_t max_depth_ = 0;
  std::uint64_t cache_key_ = 0;
};

/// Content hash of (catalog, output vocabulary) stored in trie cache files.
std::uint64_t trie_cache_key(const EntityCatalog& catalog, const Vocabulary& output_vocab);

inline TokenTrie build_trie(const EntityCatalog& catalog, const Vocabulary& output_vocab) {
  return TokenTrie::build(catalog, output_vocab);
}

inline TrieStats trie_stats(const TokenTrie& trie) { return trie.stats(); }

/// Writes the legal next tokens, ascending, into `out`. EOS and SEP are legal
/// only at a terminal whose entity is not blocked; a child is legal only if
/// its subtree still holds an unblocked name. With a finite token budget a
/// token is kept only if some legal completion fits in `remaining_tokens`
/// (EOS included). Empty only for a finished cursor.
void allowed_tokens(const TokenTrie& trie, const TrieCursor& cursor, const EmittedSet& emitted,
                    const DecodeConfig& config, std::vector<TokenId>& out,
                    std::size_t remaining_tokens = kUnboundedTokens);

std::vector<TokenId> allowed_tokens(const TokenTrie& trie, const TrieCursor& cursor,
                                    const EmittedSet& emitted, const DecodeConfig& config,
                                    std::size_t remaining_tokens = kUnboundedTokens);

/// Structural transition: content token -> child, SEP at a terminal -> root,
/// EOS at a terminal (or the root) -> end. Throws DisallowedToken otherwise.
TrieCursor advance(const TokenTrie& trie, const TrieCursor& cursor, TokenId token);

/// Cursor plus emitted entities; the full state the constraint depends on.
struct ConstraintState {
  TrieCursor cursor = TrieCursor::root();
  EmittedSet emitted;
  std::size_t length = 0;

  friend bool operator==(const ConstraintState&, const ConstraintState&) = default;
};

/// Applies `token` without checking it against allowed_tokens.
ConstraintState step(const TokenTrie& trie, const ConstraintState& state, TokenId token);

/// Applies `token` after verifying it is allowed; throws DisallowedToken.
ConstraintState step_checked(const TokenTrie& trie, const ConstraintState& state, TokenId token,
                             const DecodeConfig& config);

}  // namespace ettag
