#pragma once

#include <cstdint>
#include <vector>

#include "letter/core/rng.hpp"
#include "letter/core/tensor.hpp"
#include "letter/tokenizer/rqvae.hpp"

namespace letter {

struct KMeansOptions {
  std::size_t max_iterations = 50;
  std::size_t restarts = 1;  // best objective wins; ties keep the earlier restart
};

struct KMeansResult {
  Tensor centers;                       // [K x d]
  std::vector<std::uint32_t> assignment;  // per point
  double objective = 0.0;               // within-cluster sum of squares
  std::vector<double> history;          // objective after every Lloyd iteration
};

/// k-means++ seeding: first center uniform, then proportional to squared
/// distance from the nearest chosen center.
Tensor kmeans_plus_plus(const Tensor& points, std::size_t k, SeededRng& rng);

/// Lloyd's algorithm with k-means++ seeding. An emptied cluster is re-seeded
/// at the point currently farthest from its center. ParameterError if K is 0
/// or exceeds the number of points.
KMeansResult kmeans(const Tensor& points, std::size_t k, SeededRng& rng, const KMeansOptions& options = {});

double kmeans_objective(const Tensor& points, const Tensor& centers, const std::vector<std::uint32_t>& assignment);

/// Level 1 codes <- K-means centroids of the latents; level l codes <-
/// centroids of the level-(l-1) residuals. With fewer latents than codes the
/// codebooks keep a seeded Gaussian initialisation and a warning is logged.
/// Returns false in that fallback case.
bool kmeans_init_codebooks(const Tensor& latents, CodebookSet& cb, SeededRng& rng,
                           const KMeansOptions& options = {});

}  // namespace letter
