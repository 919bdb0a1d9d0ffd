#pragma once

#include <cstdint>
#include <span>

#include "letter/core/autodiff.hpp"

namespace letter {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// AdamW with decoupled weight decay:
///   p <- p - lr * wd * p
///   m <- b1 m + (1-b1) g ;  v <- b2 v + (1-b2) g^2
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
class AdamW {
 public:
  explicit AdamW(AdamWConfig config);

  void step(std::span<ad::Parameter* const> params);
  void zero_grad(std::span<ad::Parameter* const> params) const;

  std::uint64_t steps_taken() const noexcept { return steps_; }
  const AdamWConfig& config() const noexcept { return config_; }

 private:
  AdamWConfig config_;
  std::uint64_t steps_ = 0;
};

}  // namespace letter
