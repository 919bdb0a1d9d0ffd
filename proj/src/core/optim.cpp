#include "letter/core/optim.hpp"

#include <cmath>

#include "letter/core/error.hpp"

namespace letter {

AdamW::AdamW(AdamWConfig config) : config_(config) {
  if (!(config_.lr > 0.0)) throw ParameterError("AdamW: learning rate must be positive");
  if (config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 || config_.beta2 >= 1.0)
    throw ParameterError("AdamW: betas must lie in [0, 1)");
  if (!(config_.eps > 0.0)) throw ParameterError("AdamW: eps must be positive");
  if (config_.weight_decay < 0.0) throw ParameterError("AdamW: weight decay must be nonnegative");
}

void AdamW::step(std::span<ad::Parameter* const> params) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);
  for (ad::Parameter* p : params) {
    if (!p->first_moment.same_shape(p->value)) p->first_moment = Tensor(p->value.shape());
    if (!p->second_moment.same_shape(p->value)) p->second_moment = Tensor(p->value.shape());
    if (!p->grad.same_shape(p->value)) p->grad = Tensor(p->value.shape());
    double* w = p->value.data();
    const double* g = p->grad.data();
    double* m = p->first_moment.data();
    double* v = p->second_moment.data();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      w[i] -= config_.lr * config_.weight_decay * w[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
    if (!p->value.all_finite()) throw NumericError("AdamW produced a non-finite value in " + p->name);
  }
}

void AdamW::zero_grad(std::span<ad::Parameter* const> params) const {
  for (ad::Parameter* p : params) {
    if (!p->grad.same_shape(p->value)) p->grad = Tensor(p->value.shape());
    p->zero_grad();
  }
}

}  // namespace letter
