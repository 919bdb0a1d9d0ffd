#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "letter/core/autodiff.hpp"
#include "letter/core/checkpoint.hpp"
#include "letter/core/rng.hpp"

namespace letter {

/// L levels of N learnable code embeddings of width d. Level indices are
/// 0-based in code (level 0 is the coarsest).
class CodebookSet {
 public:
  CodebookSet() = default;
  /// Codes drawn i.i.d. N(0, init_stddev^2).
  CodebookSet(std::size_t levels, std::size_t size, std::size_t dim, double init_stddev, SeededRng& rng);

  std::size_t levels() const noexcept { return codes_.size(); }
  std::size_t size() const noexcept { return size_; }
  std::size_t dim() const noexcept { return dim_; }

  ad::Parameter& level(std::size_t l) { return codes_.at(l); }
  const ad::Parameter& level(std::size_t l) const { return codes_.at(l); }
  std::span<const double> code(std::size_t l, std::size_t i) const { return codes_.at(l).value.row(i); }

  void collect(std::vector<ad::Parameter*>& out);
  void save(Checkpoint& ck) const;
  static CodebookSet load(const Checkpoint& ck);

 private:
  std::size_t size_ = 0, dim_ = 0;
  std::vector<ad::Parameter> codes_;  // each [N x d]
};

struct QuantizationResult {
  std::vector<std::uint32_t> codes;          // c_1..c_L
  std::vector<double> quantized;             // zhat = sum_l e_{c_l}
  std::vector<std::vector<double>> residuals;  // r_0 = z, ..., r_L
};

/// Greedy residual quantization: c_l = argmin_i ||r_{l-1} - e_i||^2 with ties
/// to the lowest index, r_l = r_{l-1} - e_{c_l}. StateError on an empty
/// codebook, DimensionError if dim(z) != d.
QuantizationResult residual_quantize(std::span<const double> z, const CodebookSet& cb);

/// Row-wise residual quantization of a batch Z [B x d].
struct BatchQuantization {
  std::size_t count = 0, levels = 0;
  std::vector<std::uint32_t> codes;  // [B x L] row-major
  Tensor quantized;                  // [B x d]
  std::vector<Tensor> residuals;     // L+1 tensors [B x d]; residuals[0] = Z

  std::uint32_t code(std::size_t row, std::size_t level) const { return codes[row * levels + level]; }
  std::vector<std::uint32_t> level_codes(std::size_t level) const;
};

BatchQuantization quantize_batch(const Tensor& z, const CodebookSet& cb);

}  // namespace letter
