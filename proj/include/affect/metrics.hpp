#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <span>

#include "affect/errors.hpp"

namespace affect {

/// Rows are ground truth, columns are predictions.
using ConfusionMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> truths, std::size_t n_classes);

/// Per-class F1 = 2TP / (2TP + FP + FN); classes with no support and no
/// predictions score 0.
Eigen::VectorXd per_class_f1(const ConfusionMatrix& cm);

double macro_f1(const ConfusionMatrix& cm);
double macro_f1(std::span<const int> preds, std::span<const int> truths, std::size_t n_classes);

/// Binary F1 of the positive class for every column of 0/1 matrices.
Eigen::VectorXd per_label_f1(const Eigen::Ref<const Eigen::MatrixXi>& preds,
                             const Eigen::Ref<const Eigen::MatrixXi>& truths);

/// Mean of per_label_f1 over columns.
double multilabel_f1(const Eigen::Ref<const Eigen::MatrixXi>& preds, const Eigen::Ref<const Eigen::MatrixXi>& truths);

/// Concordance correlation coefficient with population moments:
///   2 cov(x, y) / (var x + var y + (mean x - mean y)^2).
/// Returns 0 when the denominator vanishes (both inputs constant and equal).
template <typename DerivedX, typename DerivedY>
double concordance(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y) {
  if (x.size() != y.size()) throw DimensionError("concordance: length mismatch");
  if (x.size() < 2) throw RangeError("concordance: needs at least 2 samples");
  const auto xd = x.template cast<double>().eval();
  const auto yd = y.template cast<double>().eval();
  const double n = static_cast<double>(xd.size());
  const double mx = xd.sum() / n;
  const double my = yd.sum() / n;
  const auto cx = (xd.array() - mx).eval();
  const auto cy = (yd.array() - my).eval();
  const double vx = cx.square().sum() / n;
  const double vy = cy.square().sum() / n;
  const double cov = (cx * cy).sum() / n;
  const double den = vx + vy + (mx - my) * (mx - my);
  return den > 0.0 ? 2.0 * cov / den : 0.0;
}

/// CCC per column of [n, k] matrices.
Eigen::VectorXd per_dim_ccc(const Eigen::Ref<const Eigen::MatrixXd>& preds, const Eigen::Ref<const Eigen::MatrixXd>& truths);

double mean_ccc(const Eigen::Ref<const Eigen::MatrixXd>& preds, const Eigen::Ref<const Eigen::MatrixXd>& truths);

}  // namespace affect
