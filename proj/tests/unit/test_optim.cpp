#include <cmath>

#include "doctest.h"
#include "letter/core/error.hpp"
#include "letter/core/optim.hpp"
#include "letter/core/rng.hpp"

using namespace letter;

TEST_CASE("adamw: zero gradient and zero decay leaves parameters unchanged") {
  SeededRng rng(1);
  ad::Parameter p("p", Tensor::uniform({3, 3}, -1, 1, rng));
  const Tensor before = p.value;
  AdamW opt({.lr = 1e-3, .weight_decay = 0.0});
  std::vector<ad::Parameter*> params = {&p};
  for (int i = 0; i < 5; ++i) {
    opt.zero_grad(params);
    opt.step(params);
  }
  CHECK(max_abs_diff(before, p.value) == 0.0);
}

TEST_CASE("adamw: single scalar step matches hand calculation") {
  ad::Parameter p("w", Tensor::vector({1.0}));
  p.grad[0] = 0.5;
  AdamW opt({.lr = 0.1, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .weight_decay = 0.01});
  std::vector<ad::Parameter*> params = {&p};
  opt.step(params);
  // decay: 1 - 0.1*0.01 = 0.999 ; m = 0.05, v = 2.5e-4 ; m_hat = 0.5, v_hat = 0.25
  const double expected = 0.999 - 0.1 * 0.5 / (0.5 + 1e-8);
  CHECK(std::abs(p.value[0] - expected) < 1e-15);
  CHECK(std::abs(p.first_moment[0] - 0.05) < 1e-15);
  CHECK(std::abs(p.second_moment[0] - 2.5e-4) < 1e-18);

  // Second step with the same gradient: m = 0.095, v = 4.9975e-4.
  opt.step(params);
  const double m_hat = 0.095 / (1 - 0.81);
  const double v_hat = 4.9975e-4 / (1 - 0.998001);
  const double expected2 = expected * (1 - 0.1 * 0.01) - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8);
  CHECK(std::abs(p.value[0] - expected2) < 1e-14);
}

TEST_CASE("adamw: defaults and parameter validation") {
  CHECK(AdamWConfig{}.lr == 1e-3);
  CHECK_THROWS_AS(AdamW({.lr = 0.0}), ParameterError);
  CHECK_THROWS_AS(AdamW({.lr = -1e-3}), ParameterError);
}
