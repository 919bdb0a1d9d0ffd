#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "letter/core/embedding_table.hpp"
#include "letter/core/types.hpp"
#include "letter/tokenizer/rqvae.hpp"

namespace letter {

struct Identifier {
  ItemId item = 0;
  std::vector<std::uint32_t> codes;            // c_1..c_L
  std::optional<std::uint32_t> disambiguator;  // set only for items whose codes collide

  friend bool operator==(const Identifier&, const Identifier&) = default;
};

/// Identifiers for a catalog, in ascending item-id order.
class IdentifierSet {
 public:
  IdentifierSet() = default;
  IdentifierSet(std::size_t levels, std::size_t codebook_size, std::vector<Identifier> ids);

  std::size_t levels() const noexcept { return levels_; }
  std::size_t codebook_size() const noexcept { return codebook_size_; }
  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<Identifier>& all() const noexcept { return ids_; }

  bool contains(ItemId item) const { return index_.contains(item); }
  /// DataError if the item has no identifier.
  const Identifier& at(ItemId item) const;

  /// Largest disambiguator + 1 (0 when nothing collides).
  std::uint32_t disambiguator_count() const noexcept { return disambiguator_count_; }
  /// Fraction of items whose L-code sequence is shared with another item.
  double collision_rate() const noexcept { return collision_rate_; }
  std::size_t distinct_code_sequences() const noexcept { return distinct_; }

 private:
  std::size_t levels_ = 0, codebook_size_ = 0;
  std::vector<Identifier> ids_;
  std::unordered_map<ItemId, std::size_t> index_;
  std::uint32_t disambiguator_count_ = 0;
  double collision_rate_ = 0.0;
  std::size_t distinct_ = 0;
};

/// codes is [items.size() x levels] row-major. Items sharing all codes get
/// suffixes 0, 1, 2, ... in ascending item-id order; unique ones get none.
IdentifierSet assign_identifiers(std::span<const ItemId> items, std::span<const std::uint32_t> codes,
                                 std::size_t levels, std::size_t codebook_size);

/// Quantizes every item of the table with the model.
IdentifierSet assign_identifiers(const EmbeddingTable& semantic, const RqVae& model);

/// TSV: `item_id<TAB>c1,...,cL<TAB>disambiguator` with `-` for none, preceded
/// by a header `levels=<L> codebook_size=<N>`.
void write_identifiers(const std::filesystem::path& path, const IdentifierSet& ids);
IdentifierSet read_identifiers(const std::filesystem::path& path);

}  // namespace letter
