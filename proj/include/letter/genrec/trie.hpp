#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "letter/genrec/vocabulary.hpp"
#include "letter/tokenizer/identifiers.hpp"

namespace letter {

/// Prefix tree over the catalog's identifier token sequences; each leaf holds
/// an item. No end token is needed: identifiers have length L, or L+1 for
/// every member of a colliding group, so no identifier is a prefix of another.
class IdentifierTrie {
 public:
  using NodeId = std::uint32_t;
  static constexpr NodeId kRoot = 0;

  IdentifierTrie() : nodes_(1) {}

  /// DataError on duplicate identifiers or when one identifier is a prefix of
  /// another.
  static IdentifierTrie build(const TokenVocabulary& vocab, const IdentifierSet& ids);

  /// Node reached by the prefix, or nullopt if no identifier starts with it.
  std::optional<NodeId> find(std::span<const std::uint32_t> prefix) const;
  std::optional<NodeId> child(NodeId node, std::uint32_t token) const;

  /// Tokens that extend `prefix` towards some catalog identifier, ascending.
  std::vector<std::uint32_t> valid_successors(std::span<const std::uint32_t> prefix) const;
  /// (token, child) pairs, ascending by token.
  const std::vector<std::pair<std::uint32_t, NodeId>>& children(NodeId node) const { return nodes_[node].children; }

  std::optional<ItemId> item(NodeId node) const { return nodes_[node].item; }
  std::optional<ItemId> lookup(std::span<const std::uint32_t> tokens) const;

  std::size_t leaf_count() const noexcept { return leaves_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    std::vector<std::pair<std::uint32_t, NodeId>> children;
    std::optional<ItemId> item;
  };

  void insert(std::span<const std::uint32_t> tokens, ItemId item);

  std::vector<Node> nodes_;
  std::size_t leaves_ = 0;
};

}  // namespace letter
