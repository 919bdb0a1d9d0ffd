#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

// Dense f64 kernels used by the autodiff engine and the quantizer.
//
// The kernels in `letter::kernels` are the production versions: OpenMP
// parallel over output rows, with a fixed per-row accumulation order so the
// result is bit-identical for any thread count. `letter::kernels::reference`
// holds straightforward serial loops kept as test oracles and as the baseline
// in bench/.

namespace letter::kernels {

/// C[m x n] (+)= A[m x k] * B[k x n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate);

/// C[m x n] (+)= A[m x k] * B[n x k]^T
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate);

/// C[m x n] (+)= A[k x m]^T * B[k x n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate);

double dot(const double* a, const double* b, std::size_t n);

double squared_distance(const double* a, const double* b, std::size_t n);

/// For each of `count` points (row-major, `dim` wide) find the nearest of the
/// `num_centers` centers by squared Euclidean distance. Ties go to the lower
/// center index.
void nearest_center(std::size_t count, std::size_t num_centers, std::size_t dim, const double* points,
                    const double* centers, std::uint32_t* best_index, double* best_distance);

/// For each row i of table[n x dim] the row j != i maximising <t_i, t_j>; ties
/// go to the lower j. Requires n >= 2.
void max_inner_product_neighbor(std::size_t n, std::size_t dim, const double* table,
                                std::uint32_t* best_index, double* best_score);

int max_threads();

namespace reference {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c);
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c);
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c);
void nearest_center(std::size_t count, std::size_t num_centers, std::size_t dim, const double* points,
                    const double* centers, std::uint32_t* best_index, double* best_distance);
void max_inner_product_neighbor(std::size_t n, std::size_t dim, const double* table,
                                std::uint32_t* best_index, double* best_score);

}  // namespace reference

}  // namespace letter::kernels
