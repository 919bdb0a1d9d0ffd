#include "letter/genrec/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "letter/core/error.hpp"

namespace letter {

ad::Var ranking_generation_loss(ad::Var logits, std::span<const std::uint32_t> targets, double tau) {
  if (!(tau > 0.0)) throw ParameterError("temperature must be positive");
  return ad::cross_entropy_rows(logits, targets, tau);
}

double ranking_generation_loss(const RecommenderModel& model, const TokenSequence& seq, double tau) {
  ad::Tape tape;
  auto out = const_cast<RecommenderModel&>(model).forward_targets(tape, std::span<const TokenSequence>(&seq, 1));
  return ranking_generation_loss(out.logits, out.targets, tau).value().item();
}

std::vector<double> hard_negative_weight(std::span<const double> logits, std::size_t target, double tau) {
  if (!(tau > 0.0)) throw ParameterError("temperature must be positive");
  if (target >= logits.size()) throw DataError("target index outside the logits");
  if (logits.size() < 2) throw DimensionError("hard_negative_weight needs at least one negative");
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v < logits.size(); ++v)
    if (v != target) mx = std::max(mx, logits[v]);
  std::vector<double> w(logits.size(), 0.0);
  double z = 0.0;
  for (std::size_t v = 0; v < logits.size(); ++v) {
    if (v == target) continue;
    w[v] = std::exp((logits[v] - mx) / tau);
    z += w[v];
  }
  for (double& x : w) x /= z;
  return w;
}

}  // namespace letter
