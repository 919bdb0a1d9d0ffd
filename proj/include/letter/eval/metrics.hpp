#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "letter/core/types.hpp"

namespace letter {

/// Where one user's held-out item landed in the returned list.
struct RankedOutcome {
  UserId user = 0;
  std::optional<std::size_t> rank;  // 1-based; empty when the item is absent
  std::size_t list_length = 0;
};

using RankingResult = std::vector<RankedOutcome>;

/// 1-based position of `target` in `list`, if present.
std::optional<std::size_t> rank_of(std::span<const ItemId> list, ItemId target);

/// Mean of I(rank <= K). DataError on empty results, ParameterError for K = 0.
double recall_at_k(std::span<const RankedOutcome> results, std::size_t k);
/// Mean of I(rank <= K) / log2(rank + 1): single-positive NDCG, ideal DCG 1.
double ndcg_at_k(std::span<const RankedOutcome> results, std::size_t k);

/// Normalized partial ROC area up to false-positive rate K/(|V|-1) for a
/// single positive at 1-based rank r among |V| items: (K - r + 1)/K when
/// r <= K, else 0. ParameterError unless 1 < K < vocab_size.
double opauc_single_positive(std::size_t rank, std::size_t k, std::size_t vocab_size);

}  // namespace letter
