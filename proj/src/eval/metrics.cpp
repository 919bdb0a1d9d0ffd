#include "letter/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "letter/core/error.hpp"

namespace letter {

std::optional<std::size_t> rank_of(std::span<const ItemId> list, ItemId target) {
  auto it = std::find(list.begin(), list.end(), target);
  if (it == list.end()) return std::nullopt;
  return static_cast<std::size_t>(it - list.begin()) + 1;
}

namespace {

void check(std::span<const RankedOutcome> results, std::size_t k) {
  if (results.empty()) throw DataError("no ranking results to evaluate");
  if (k == 0) throw ParameterError("K must be >= 1");
  for (const auto& r : results)
    if (r.rank && *r.rank == 0) throw DataError("rank of user " + std::to_string(r.user) + " is 0; ranks are 1-based");
}

}  // namespace

double recall_at_k(std::span<const RankedOutcome> results, std::size_t k) {
  check(results, k);
  double hits = 0.0;
  for (const auto& r : results)
    if (r.rank && *r.rank <= k) hits += 1.0;
  return hits / static_cast<double>(results.size());
}

double ndcg_at_k(std::span<const RankedOutcome> results, std::size_t k) {
  check(results, k);
  double sum = 0.0;
  for (const auto& r : results)
    if (r.rank && *r.rank <= k) sum += 1.0 / std::log2(static_cast<double>(*r.rank) + 1.0);
  return sum / static_cast<double>(results.size());
}

double opauc_single_positive(std::size_t rank, std::size_t k, std::size_t vocab_size) {
  if (k <= 1) throw ParameterError("OPAUC needs K > 1");
  if (k >= vocab_size) throw ParameterError("OPAUC needs K < |V|");
  if (rank == 0 || rank > vocab_size) throw ParameterError("rank must lie in [1, |V|]");
  if (rank > k) return 0.0;
  return static_cast<double>(k - rank + 1) / static_cast<double>(k);
}

}  // namespace letter
