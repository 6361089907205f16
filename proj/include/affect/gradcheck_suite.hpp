#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "affect/gradcheck.hpp"

namespace affect {

inline constexpr double kGradCheckTolerance = 1e-3;
/// Absolute bound for tensors whose exact gradient is zero.
inline constexpr double kZeroGradTolerance = 1e-9;

struct GradCheckCase {
  std::string name;
  GradCheckResult result;
  double seconds = 0.0;
  /// When positive, the case passes on |analytic - numeric| at the worst coordinate instead.
  double abs_tolerance = 0.0;

  double abs_error() const noexcept { return std::abs(result.analytic - result.numeric); }
  bool passed() const noexcept {
    return abs_tolerance > 0.0 ? abs_error() <= abs_tolerance : result.max_rel_error <= kGradCheckTolerance;
  }
};

/// Finite-difference checks of every task loss and of the tiny encoder
/// (2 layers, 2 heads, d_model 32) end to end for each task head, in double.
/// Key-projection biases are checked separately against kZeroGradTolerance.
std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed, double h = 1e-4);

}  // namespace affect
