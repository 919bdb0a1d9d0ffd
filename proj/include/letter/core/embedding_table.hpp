#pragma once

#include <filesystem>
#include <span>
#include <unordered_map>
#include <vector>

#include "letter/core/tensor.hpp"
#include "letter/core/types.hpp"

namespace letter {

/// Item id -> dense vector, stored as one [count x dim] matrix whose rows are
/// in ascending item-id order. Used for both semantic embeddings s and CF
/// embeddings h.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  /// Rows of `vectors` correspond to `ids`; ids need not be sorted.
  EmbeddingTable(std::vector<ItemId> ids, const Tensor& vectors);

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<ItemId>& ids() const noexcept { return ids_; }
  const Tensor& matrix() const noexcept { return matrix_; }

  bool contains(ItemId id) const { return index_.contains(id); }
  /// Row position of `id`; DataError if absent.
  std::size_t index_of(ItemId id) const;
  std::span<const double> vector(ItemId id) const { return matrix_.row(index_of(id)); }

  /// Rows for `ids` in the given order, as a [ids.size() x dim] matrix.
  Tensor gather(std::span<const ItemId> ids) const;

 private:
  std::vector<ItemId> ids_;
  Tensor matrix_;
  std::size_t dim_ = 0;
  std::unordered_map<ItemId, std::size_t> index_;
};

/// Text format: header `dim=<d> count=<n>`, then `item_id<TAB>v1,v2,...`.
/// Malformed lines raise ParseError carrying the line number; a row whose
/// width differs from the header, a row count that differs from `count`, or a
/// repeated id raise FormatError.
EmbeddingTable read_embedding_table(const std::filesystem::path& path);
void write_embedding_table(const std::filesystem::path& path, const EmbeddingTable& table);

}  // namespace letter
