#include "letter/genrec/trie.hpp"

#include <algorithm>

#include "letter/core/error.hpp"

namespace letter {

IdentifierTrie IdentifierTrie::build(const TokenVocabulary& vocab, const IdentifierSet& ids) {
  IdentifierTrie trie;
  for (const Identifier& id : ids.all()) trie.insert(vocab.tokens(id), id.item);
  return trie;
}

void IdentifierTrie::insert(std::span<const std::uint32_t> tokens, ItemId item) {
  if (tokens.empty()) throw DataError("empty identifier for item " + std::to_string(item));
  NodeId node = kRoot;
  for (std::uint32_t tok : tokens) {
    if (nodes_[node].item)
      throw DataError("identifier of item " + std::to_string(item) + " extends the identifier of item " +
                      std::to_string(*nodes_[node].item));
    auto& ch = nodes_[node].children;
    auto it = std::lower_bound(ch.begin(), ch.end(), tok,
                               [](const std::pair<std::uint32_t, NodeId>& c, std::uint32_t t) { return c.first < t; });
    if (it != ch.end() && it->first == tok) {
      node = it->second;
      continue;
    }
    const auto next = static_cast<NodeId>(nodes_.size());
    ch.insert(it, {tok, next});
    nodes_.emplace_back();
    node = next;
  }
  if (nodes_[node].item)
    throw DataError("items " + std::to_string(*nodes_[node].item) + " and " + std::to_string(item) +
                    " have the same identifier");
  if (!nodes_[node].children.empty())
    throw DataError("identifier of item " + std::to_string(item) + " is a prefix of another identifier");
  nodes_[node].item = item;
  ++leaves_;
}

std::optional<IdentifierTrie::NodeId> IdentifierTrie::child(NodeId node, std::uint32_t token) const {
  const auto& ch = nodes_[node].children;
  auto it = std::lower_bound(ch.begin(), ch.end(), token,
                             [](const std::pair<std::uint32_t, NodeId>& c, std::uint32_t t) { return c.first < t; });
  if (it == ch.end() || it->first != token) return std::nullopt;
  return it->second;
}

std::optional<IdentifierTrie::NodeId> IdentifierTrie::find(std::span<const std::uint32_t> prefix) const {
  NodeId node = kRoot;
  for (std::uint32_t tok : prefix) {
    auto next = child(node, tok);
    if (!next) return std::nullopt;
    node = *next;
  }
  return node;
}

std::vector<std::uint32_t> IdentifierTrie::valid_successors(std::span<const std::uint32_t> prefix) const {
  std::vector<std::uint32_t> out;
  if (auto node = find(prefix))
    for (const auto& [tok, next] : nodes_[*node].children) out.push_back(tok);
  return out;
}

std::optional<ItemId> IdentifierTrie::lookup(std::span<const std::uint32_t> tokens) const {
  auto node = find(tokens);
  if (!node) return std::nullopt;
  return nodes_[*node].item;
}

}  // namespace letter
