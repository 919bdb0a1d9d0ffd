#include "letter/core/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "letter/core/rng.hpp"

namespace letter {

namespace {

double evaluate(const std::function<ad::Var(ad::Tape&)>& loss) {
  ad::Tape tape;
  return loss(tape).value().item();
}

}  // namespace

GradCheckReport check_gradients(const std::function<ad::Var(ad::Tape&)>& loss,
                                std::span<ad::Parameter* const> params, const GradCheckOptions& options) {
  for (ad::Parameter* p : params) {
    p->grad = Tensor(p->value.shape());
  }
  {
    ad::Tape tape;
    ad::Var out = loss(tape);
    tape.backward(out);
  }

  GradCheckReport report;
  SeededRng rng(options.seed);
  for (ad::Parameter* p : params) {
    std::vector<std::size_t> entries(p->value.size());
    std::iota(entries.begin(), entries.end(), 0);
    if (options.max_entries_per_param && entries.size() > options.max_entries_per_param) {
      rng.shuffle(entries);
      entries.resize(options.max_entries_per_param);
      std::sort(entries.begin(), entries.end());
    }
    for (std::size_t e : entries) {
      const double saved = p->value[e];
      p->value[e] = saved + options.step;
      const double up = evaluate(loss);
      p->value[e] = saved - options.step;
      const double down = evaluate(loss);
      p->value[e] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double analytic = p->grad[e];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), options.magnitude_floor});
      const double rel = std::abs(numeric - analytic) / denom;
      ++report.entries_checked;
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_entry = p->name + "[" + std::to_string(e) + "] analytic=" + std::to_string(analytic) +
                             " numeric=" + std::to_string(numeric);
      }
    }
  }
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace letter
