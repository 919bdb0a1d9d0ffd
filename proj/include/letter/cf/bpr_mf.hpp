#pragma once

#include <cstdint>
#include <vector>

#include "letter/cf/interactions.hpp"
#include "letter/core/embedding_table.hpp"
#include "letter/core/rng.hpp"

namespace letter {

struct BprConfig {
  std::size_t dim = 32;
  std::size_t epochs = 30;
  double lr = 0.05;
  double reg = 1e-4;  // L2 on the factors touched by each update
  double init_stddev = 0.1;
  std::uint64_t seed = 42;
};

/// Matrix factorization scored by <p_u, q_i>.
struct BprMfModel {
  std::vector<UserId> user_ids;  // ascending, matches rows of `users`
  Tensor users;                  // [U x dim]
  EmbeddingTable items;          // q_i per catalog item
  std::vector<double> epoch_loss;  // mean -log sigmoid(x_uij) per epoch

  /// Row of `users` for a user id; DataError if unknown.
  std::size_t user_index(UserId user) const;
  bool has_user(UserId user) const;
};

/// Pairwise-ranking MF: SGD on -log sigmoid(<p_u, q_i - q_j>) for training
/// pairs (u, i) with j drawn uniformly from items u never interacted with.
/// Only the training part of each sequence is used. ParameterError for
/// dim == 0 or lr <= 0; DataError for an empty dataset.
BprMfModel train_cf(const InteractionDataset& data, const BprConfig& config);

/// Same table loaded from the embedding text format.
EmbeddingTable load_cf_embeddings(const std::filesystem::path& path);

/// For each item, the other item with the largest similarity (inner product,
/// or cosine when `cosine`), ties to the lower item id. DataError for fewer
/// than two items.
std::vector<std::pair<ItemId, ItemId>> nearest_cf_pairs(const EmbeddingTable& table, bool cosine = false);

}  // namespace letter
