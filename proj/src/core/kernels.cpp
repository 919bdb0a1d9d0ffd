#include "letter/core/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace letter::kernels {

namespace {

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = 1u << 15;

inline bool worth_parallel(std::size_t work) { return work >= kParallelWork; }

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

double dot(const double* a, const double* b, std::size_t n) {
  // Four independent partial sums, combined in a fixed order.
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

double squared_distance(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (worth_parallel(m * n * k))
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    double* crow = c + static_cast<std::size_t>(i) * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    const double* arow = a + static_cast<std::size_t>(i) * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (worth_parallel(m * n * k))
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    double* crow = c + static_cast<std::size_t>(i) * n;
    const double* arow = a + static_cast<std::size_t>(i) * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = dot(arow, b + j * k, k);
      crow[j] = accumulate ? crow[j] + v : v;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (worth_parallel(m * n * k))
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    double* crow = c + static_cast<std::size_t>(i) * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p * m + static_cast<std::size_t>(i)];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void nearest_center(std::size_t count, std::size_t num_centers, std::size_t dim, const double* points,
                    const double* centers, std::uint32_t* best_index, double* best_distance) {
  const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(static) if (worth_parallel(count * num_centers * dim))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double* x = points + static_cast<std::size_t>(i) * dim;
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t arg = 0;
    for (std::size_t c = 0; c < num_centers; ++c) {
      const double d = squared_distance(x, centers + c * dim, dim);
      if (d < best) {
        best = d;
        arg = static_cast<std::uint32_t>(c);
      }
    }
    best_index[i] = arg;
    if (best_distance) best_distance[i] = best;
  }
}

void max_inner_product_neighbor(std::size_t n, std::size_t dim, const double* table,
                                std::uint32_t* best_index, double* best_score) {
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (worth_parallel(n * n * dim))
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto self = static_cast<std::size_t>(i);
    const double* x = table + self * dim;
    double best = -std::numeric_limits<double>::infinity();
    std::uint32_t arg = self == 0 ? 1u : 0u;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == self) continue;
      // Sequential accumulation, same order as the reference scan.
      const double* y = table + j * dim;
      double s = 0.0;
      for (std::size_t t = 0; t < dim; ++t) s += x[t] * y[t];
      if (s > best) {
        best = s;
        arg = static_cast<std::uint32_t>(j);
      }
    }
    best_index[i] = arg;
    if (best_score) best_score[i] = best;
  }
}

namespace reference {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * n + j] = s;
    }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
      c[i * n + j] = s;
    }
}

void nearest_center(std::size_t count, std::size_t num_centers, std::size_t dim, const double* points,
                    const double* centers, std::uint32_t* best_index, double* best_distance) {
  for (std::size_t i = 0; i < count; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t arg = 0;
    for (std::size_t c = 0; c < num_centers; ++c) {
      double d = 0.0;
      for (std::size_t t = 0; t < dim; ++t) {
        const double diff = points[i * dim + t] - centers[c * dim + t];
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        arg = static_cast<std::uint32_t>(c);
      }
    }
    best_index[i] = arg;
    if (best_distance) best_distance[i] = best;
  }
}

void max_inner_product_neighbor(std::size_t n, std::size_t dim, const double* table,
                                std::uint32_t* best_index, double* best_score) {
  for (std::size_t i = 0; i < n; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    std::uint32_t arg = 0;
    bool found = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double s = 0.0;
      for (std::size_t t = 0; t < dim; ++t) s += table[i * dim + t] * table[j * dim + t];
      if (!found || s > best) {
        best = s;
        arg = static_cast<std::uint32_t>(j);
        found = true;
      }
    }
    best_index[i] = arg;
    if (best_score) best_score[i] = best;
  }
}

}  // namespace reference

}  // namespace letter::kernels
