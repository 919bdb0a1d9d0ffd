#include "letter/tokenizer/kmeans.hpp"

#include <algorithm>
#include <limits>

#include "letter/core/error.hpp"
#include "letter/core/kernels.hpp"
#include "letter/core/log.hpp"

namespace letter {

Tensor kmeans_plus_plus(const Tensor& points, std::size_t k, SeededRng& rng) {
  const std::size_t n = points.rows(), d = points.cols();
  Tensor centers({k, d});
  std::size_t first = static_cast<std::size_t>(rng.below(n));
  std::ranges::copy(points.row(first), centers.row(0).begin());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = kernels::squared_distance(points.row(i).data(), centers.data(), d);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    // All points coincide with some center: fall back to uniform choice.
    const std::size_t pick = total > 0.0 ? rng.categorical(d2) : static_cast<std::size_t>(rng.below(n));
    std::ranges::copy(points.row(pick), centers.row(c).begin());
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], kernels::squared_distance(points.row(i).data(), centers.row(c).data(), d));
  }
  return centers;
}

namespace {

KMeansResult lloyd(const Tensor& points, std::size_t k, SeededRng& rng, std::size_t max_iterations) {
  const std::size_t n = points.rows(), d = points.cols();
  KMeansResult res;
  res.centers = kmeans_plus_plus(points, k, rng);
  res.assignment.assign(n, 0);
  std::vector<double> dist(n);
  kernels::nearest_center(n, k, d, points.data(), res.centers.data(), res.assignment.data(), dist.data());
  for (std::size_t it = 0; it < max_iterations; ++it) {
    Tensor sums({k, d});
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = res.assignment[i];
      ++counts[c];
      auto row = points.row(i);
      for (std::size_t j = 0; j < d; ++j) sums.at(c, j) += row[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        const auto far = static_cast<std::size_t>(std::ranges::max_element(dist) - dist.begin());
        std::ranges::copy(points.row(far), res.centers.row(c).begin());
        dist[far] = 0.0;
        continue;
      }
      for (std::size_t j = 0; j < d; ++j) res.centers.at(c, j) = sums.at(c, j) / static_cast<double>(counts[c]);
    }
    std::vector<std::uint32_t> next(n);
    kernels::nearest_center(n, k, d, points.data(), res.centers.data(), next.data(), dist.data());
    double objective = 0.0;
    for (double v : dist) objective += v;
    res.history.push_back(objective);
    const bool stable = next == res.assignment;
    res.assignment = std::move(next);
    if (stable) break;
  }
  res.objective = kmeans_objective(points, res.centers, res.assignment);
  return res;
}

}  // namespace

double kmeans_objective(const Tensor& points, const Tensor& centers, const std::vector<std::uint32_t>& assignment) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i)
    total += kernels::squared_distance(points.row(i).data(), centers.row(assignment[i]).data(), points.cols());
  return total;
}

KMeansResult kmeans(const Tensor& points, std::size_t k, SeededRng& rng, const KMeansOptions& options) {
  if (points.rank() != 2) throw DimensionError("kmeans expects an [n x d] matrix, got " + points.shape_string());
  if (k == 0 || k > points.rows())
    throw ParameterError("kmeans: K=" + std::to_string(k) + " must be in [1, " + std::to_string(points.rows()) +
                         "]");
  KMeansResult best;
  double best_obj = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(1, options.restarts); ++r) {
    KMeansResult res = lloyd(points, k, rng, options.max_iterations);
    if (res.objective < best_obj) {
      best_obj = res.objective;
      best = std::move(res);
    }
  }
  return best;
}

bool kmeans_init_codebooks(const Tensor& latents, CodebookSet& cb, SeededRng& rng, const KMeansOptions& options) {
  if (latents.rank() != 2 || latents.cols() != cb.dim())
    throw DimensionError("kmeans_init_codebooks: latents must be [n x " + std::to_string(cb.dim()) + "], got " +
                         latents.shape_string());
  if (latents.rows() < cb.size()) {
    log::warn("only " + std::to_string(latents.rows()) + " latents for " + std::to_string(cb.size()) +
              " codes per level; keeping Gaussian codebook initialisation");
    return false;
  }
  Tensor residual = latents;
  for (std::size_t l = 0; l < cb.levels(); ++l) {
    KMeansResult km = kmeans(residual, cb.size(), rng, options);
    cb.level(l).value = km.centers;
    for (std::size_t i = 0; i < residual.rows(); ++i) {
      auto row = residual.row(i);
      auto c = km.centers.row(km.assignment[i]);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] -= c[j];
    }
  }
  return true;
}

}  // namespace letter
