#pragma once

#include <cstdint>
#include <vector>

#include "letter/core/rng.hpp"
#include "letter/core/tensor.hpp"

namespace letter {

struct ClusterAssignment {
  std::vector<std::uint32_t> cluster;  // per code
  std::vector<std::size_t> sizes;      // per cluster
  Tensor centers;                      // [K x d]
  double objective = 0.0;              // within-cluster sum of squares
  std::vector<double> history;         // objective after each accepted alternation
  std::size_t iterations = 0;

  /// Members of cluster k in ascending code order.
  std::vector<std::vector<std::uint32_t>> members() const;
};

struct ConstrainedKMeansOptions {
  std::size_t max_iterations = 100;
  bool swap_refinement = true;
  std::size_t restarts = 5;  // independent seedings; the lowest objective wins
};

/// Balanced K-means: every cluster holds floor(N/K) or ceil(N/K) points.
/// Seeding is k-means++. The assignment step walks all (point, center) pairs
/// by ascending distance and places each unassigned point in the first
/// center with spare capacity; an optional pass then swaps pairs of points
/// between clusters whenever that lowers the cost. A new assignment is kept
/// only if it does not raise the objective, so the recorded history is
/// non-increasing. Of several restarts the lowest final objective is kept
/// (earlier restart on ties). ParameterError unless 1 <= K <= N.
ClusterAssignment constrained_kmeans(const Tensor& points, std::size_t k, SeededRng& rng,
                                     const ConstrainedKMeansOptions& options = {});

}  // namespace letter
