#pragma once

#include <functional>
#include <span>
#include <string>

#include "letter/core/autodiff.hpp"

namespace letter {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Entries with both gradients below this magnitude are compared on an
  /// absolute scale (relative error is meaningless near zero).
  double magnitude_floor = 1e-4;
  /// 0 checks every entry; otherwise a seeded subset of this size per parameter.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 7;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t entries_checked = 0;
  std::string worst_entry;
  bool passed = true;
};

/// Compares tape gradients with central finite differences
///   (f(w + h) - f(w - h)) / 2h
/// for every (sampled) entry of every parameter. `loss` must build a fresh
/// scalar on the tape it receives and be a pure function of the parameters.
GradCheckReport check_gradients(const std::function<ad::Var(ad::Tape&)>& loss,
                                std::span<ad::Parameter* const> params,
                                const GradCheckOptions& options = {});

}  // namespace letter
