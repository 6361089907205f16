#pragma once

#include <span>
#include <vector>

#include "affect/tape.hpp"

namespace affect {

/// Weighted mean of per-frame cross-entropy:
///   sum_i w[y_i] * -log softmax(z_i)[y_i] / sum_i w[y_i].
/// `logits` holds only valid frames, one row each.
template <typename Scalar>
Var weighted_cross_entropy(Tape<Scalar>& tape, Var logits, std::span<const int> targets,
                           std::span<const double> class_weights);

/// Mean over frames and labels of pos_w*y*softplus(-z) + (1-y)*softplus(z).
/// `targets` is row-major [n, labels] with entries 0 or 1; empty
/// `pos_weights` means all ones.
template <typename Scalar>
Var binary_cross_entropy(Tape<Scalar>& tape, Var logits, std::span<const float> targets,
                         std::span<const double> pos_weights = {});

/// 1 - mean over columns of the concordance correlation coefficient between
/// `pred` and `target` ([n, k], n >= 2). Degenerate columns score CCC = 0.
template <typename Scalar>
Var ccc_loss(Tape<Scalar>& tape, Var pred, std::span<const float> target);

/// Mean squared error over all entries.
template <typename Scalar>
Var mse_loss(Tape<Scalar>& tape, Var pred, std::span<const float> target);

extern template Var weighted_cross_entropy<float>(Tape<float>&, Var, std::span<const int>, std::span<const double>);
extern template Var weighted_cross_entropy<double>(Tape<double>&, Var, std::span<const int>, std::span<const double>);
extern template Var binary_cross_entropy<float>(Tape<float>&, Var, std::span<const float>, std::span<const double>);
extern template Var binary_cross_entropy<double>(Tape<double>&, Var, std::span<const float>, std::span<const double>);
extern template Var ccc_loss<float>(Tape<float>&, Var, std::span<const float>);
extern template Var ccc_loss<double>(Tape<double>&, Var, std::span<const float>);
extern template Var mse_loss<float>(Tape<float>&, Var, std::span<const float>);
extern template Var mse_loss<double>(Tape<double>&, Var, std::span<const float>);

}  // namespace affect
