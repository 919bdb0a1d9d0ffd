#include "letter/regularizers/constrained_kmeans.hpp"

#include <algorithm>
#include <tuple>

#include "letter/core/error.hpp"
#include "letter/core/kernels.hpp"
#include "letter/tokenizer/kmeans.hpp"

namespace letter {

std::vector<std::vector<std::uint32_t>> ClusterAssignment::members() const {
  std::vector<std::vector<std::uint32_t>> out(sizes.size());
  for (std::uint32_t i = 0; i < cluster.size(); ++i) out[cluster[i]].push_back(i);
  return out;
}

namespace {

struct Problem {
  const Tensor& points;
  std::size_t n, k, d;
  std::size_t floor_size, extra;  // `extra` clusters may hold floor_size + 1
};

Tensor distances(const Problem& p, const Tensor& centers) {
  Tensor dist({p.n, p.k});
  for (std::size_t i = 0; i < p.n; ++i)
    for (std::size_t c = 0; c < p.k; ++c)
      dist.at(i, c) = kernels::squared_distance(p.points.row(i).data(), centers.row(c).data(), p.d);
  return dist;
}

std::vector<std::uint32_t> greedy_assign(const Problem& p, const Tensor& dist) {
  std::vector<std::tuple<double, std::uint32_t, std::uint32_t>> pairs;
  pairs.reserve(p.n * p.k);
  for (std::uint32_t i = 0; i < p.n; ++i)
    for (std::uint32_t c = 0; c < p.k; ++c) pairs.emplace_back(dist.at(i, c), i, c);
  std::ranges::sort(pairs);
  std::vector<std::uint32_t> out(p.n, 0);
  std::vector<bool> done(p.n, false);
  std::vector<std::size_t> counts(p.k, 0);
  std::size_t big = 0, placed = 0;
  for (const auto& [dd, i, c] : pairs) {
    if (done[i]) continue;
    if (counts[c] < p.floor_size || (counts[c] == p.floor_size && big < p.extra)) {
      if (++counts[c] == p.floor_size + 1) ++big;
      out[i] = c;
      done[i] = true;
      if (++placed == p.n) break;
    }
  }
  return out;
}

void swap_refine(const Problem& p, const Tensor& dist, std::vector<std::uint32_t>& a) {
  for (int pass = 0; pass < 10; ++pass) {
    bool changed = false;
    for (std::size_t i = 0; i < p.n; ++i)
      for (std::size_t j = i + 1; j < p.n; ++j) {
        if (a[i] == a[j]) continue;
        const double gain = dist.at(i, a[i]) + dist.at(j, a[j]) - dist.at(i, a[j]) - dist.at(j, a[i]);
        if (gain > 1e-12) {
          std::swap(a[i], a[j]);
          changed = true;
        }
      }
    if (!changed) return;
  }
}

Tensor cluster_means(const Problem& p, const std::vector<std::uint32_t>& a) {
  Tensor centers({p.k, p.d});
  std::vector<std::size_t> counts(p.k, 0);
  for (std::size_t i = 0; i < p.n; ++i) {
    ++counts[a[i]];
    auto row = p.points.row(i);
    for (std::size_t j = 0; j < p.d; ++j) centers.at(a[i], j) += row[j];
  }
  for (std::size_t c = 0; c < p.k; ++c)
    for (std::size_t j = 0; j < p.d; ++j) centers.at(c, j) /= static_cast<double>(counts[c]);
  return centers;
}

double cost(const Problem& p, const Tensor& dist, const std::vector<std::uint32_t>& a) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.n; ++i) total += dist.at(i, a[i]);
  return total;
}

}  // namespace

ClusterAssignment constrained_kmeans(const Tensor& points, std::size_t k, SeededRng& rng,
                                     const ConstrainedKMeansOptions& options) {
  if (points.rank() != 2) throw DimensionError("constrained_kmeans expects [N x d], got " + points.shape_string());
  const std::size_t n = points.rows();
  if (k == 0 || k > n)
    throw ParameterError("constrained_kmeans: K=" + std::to_string(k) + " must be in [1, N=" + std::to_string(n) +
                         "]");
  const Problem p{points, n, k, points.cols(), n / k, n % k};

  auto assign = [&](const Tensor& centers) {
    const Tensor dist = distances(p, centers);
    auto a = greedy_assign(p, dist);
    if (options.swap_refinement) swap_refine(p, dist, a);
    return a;
  };

  auto run = [&]() {
    ClusterAssignment res;
    res.cluster = assign(kmeans_plus_plus(points, k, rng));
    res.centers = cluster_means(p, res.cluster);
    res.objective = cost(p, distances(p, res.centers), res.cluster);
    res.history.push_back(res.objective);
    for (std::size_t it = 0; it < options.max_iterations; ++it) {
      auto next = assign(res.centers);
      if (next == res.cluster) break;
      Tensor centers = cluster_means(p, next);
      const double objective = cost(p, distances(p, centers), next);
      if (objective > res.objective) break;
      res.cluster = std::move(next);
      res.centers = std::move(centers);
      res.objective = objective;
      res.history.push_back(objective);
      res.iterations = it + 1;
    }
    return res;
  };

  ClusterAssignment res = run();
  for (std::size_t r = 1; r < options.restarts; ++r) {
    ClusterAssignment other = run();
    if (other.objective < res.objective) res = std::move(other);
  }
  res.sizes.assign(k, 0);
  for (auto c : res.cluster) ++res.sizes[c];
  return res;
}

}  // namespace letter
