#include "affect/metrics.hpp"

#include <string>

namespace affect {

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> truths, std::size_t n_classes) {
  if (preds.size() != truths.size()) {
    throw DimensionError("confusion: " + std::to_string(preds.size()) + " predictions for " +
                         std::to_string(truths.size()) + " labels");
  }
  const auto n = static_cast<Eigen::Index>(n_classes);
  ConfusionMatrix cm = ConfusionMatrix::Zero(n, n);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int p = preds[i], t = truths[i];
    if (p < 0 || p >= n || t < 0 || t >= n) {
      throw RangeError("confusion: class id out of range at index " + std::to_string(i));
    }
    ++cm(t, p);
  }
  return cm;
}

Eigen::VectorXd per_class_f1(const ConfusionMatrix& cm) {
  const Eigen::Index n = cm.rows();
  Eigen::VectorXd f1(n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const double tp = static_cast<double>(cm(c, c));
    const double fp = static_cast<double>(cm.col(c).sum()) - tp;
    const double fn = static_cast<double>(cm.row(c).sum()) - tp;
    const double den = 2.0 * tp + fp + fn;
    f1(c) = den > 0.0 ? 2.0 * tp / den : 0.0;
  }
  return f1;
}

double macro_f1(const ConfusionMatrix& cm) {
  if (cm.sum() == 0) throw RangeError("macro_f1: no scored frames");
  return per_class_f1(cm).mean();
}

double macro_f1(std::span<const int> preds, std::span<const int> truths, std::size_t n_classes) {
  if (truths.empty()) throw RangeError("macro_f1: empty input");
  return macro_f1(confusion(preds, truths, n_classes));
}

Eigen::VectorXd per_label_f1(const Eigen::Ref<const Eigen::MatrixXi>& preds,
                             const Eigen::Ref<const Eigen::MatrixXi>& truths) {
  if (preds.rows() != truths.rows() || preds.cols() != truths.cols()) {
    throw DimensionError("per_label_f1: prediction and truth shapes differ");
  }
  if (preds.rows() == 0) throw RangeError("per_label_f1: empty input");
  Eigen::VectorXd f1(preds.cols());
  for (Eigen::Index k = 0; k < preds.cols(); ++k) {
    const auto p = (preds.col(k).array() != 0);
    const auto t = (truths.col(k).array() != 0);
    const double tp = static_cast<double>((p && t).count());
    const double fp = static_cast<double>((p && !t).count());
    const double fn = static_cast<double>((!p && t).count());
    const double den = 2.0 * tp + fp + fn;
    f1(k) = den > 0.0 ? 2.0 * tp / den : 0.0;
  }
  return f1;
}

double multilabel_f1(const Eigen::Ref<const Eigen::MatrixXi>& preds, const Eigen::Ref<const Eigen::MatrixXi>& truths) {
  return per_label_f1(preds, truths).mean();
}

Eigen::VectorXd per_dim_ccc(const Eigen::Ref<const Eigen::MatrixXd>& preds, const Eigen::Ref<const Eigen::MatrixXd>& truths) {
  if (preds.rows() != truths.rows() || preds.cols() != truths.cols()) {
    throw DimensionError("mean_ccc: prediction and truth shapes differ");
  }
  Eigen::VectorXd out(preds.cols());
  for (Eigen::Index k = 0; k < preds.cols(); ++k) out(k) = concordance(preds.col(k), truths.col(k));
  return out;
}

double mean_ccc(const Eigen::Ref<const Eigen::MatrixXd>& preds, const Eigen::Ref<const Eigen::MatrixXd>& truths) {
  return per_dim_ccc(preds, truths).mean();
}

}  // namespace affect
