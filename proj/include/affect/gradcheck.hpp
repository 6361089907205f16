#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "affect/tape.hpp"

namespace affect {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Location of the worst coordinate.
  std::size_t tensor_index = 0;
  std::size_t element = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Records a scalar loss on the tape, reading any tensors under test through
/// tape.parameter().
using LossBuilder = std::function<Var(Tape<double>&)>;

/// Compares tape gradients of `build` w.r.t. every element of `wrt` with
/// central differences (f(x+h) - f(x-h)) / 2h. Relative error per coordinate
/// is |analytic - numeric| / (|analytic| + 1e-8); returns the maximum.
/// `build` must be deterministic.
GradCheckResult finite_difference_check(const LossBuilder& build, std::span<BasicTensor<double>* const> wrt,
                                        double h);

/// Single-input form: `f` maps an input node to a scalar loss node.
GradCheckResult finite_difference_check(const std::function<Var(Tape<double>&, Var)>& f,
                                        const BasicTensor<double>& x, double h);

}  // namespace affect
