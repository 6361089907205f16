#include "affect/losses.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace affect {

namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

template <typename Scalar>
BasicTensor<Scalar> scalar(double v) {
  return BasicTensor<Scalar>(Shape{1}, static_cast<Scalar>(v));
}

void check_target_size(const char* op, std::size_t got, std::size_t want) {
  if (got != want) {
    throw DimensionError(std::string(op) + ": target length " + std::to_string(got) + " does not match " +
                         std::to_string(want) + " prediction entries");
  }
}

}  // namespace

template <typename Scalar>
Var weighted_cross_entropy(Tape<Scalar>& tape, Var logits, std::span<const int> targets,
                           std::span<const double> class_weights) {
  const auto& Z = tape.value(logits);
  const std::size_t n = Z.rows(), c = Z.cols();
  if (n == 0 || targets.empty()) throw RangeError("weighted_cross_entropy: empty batch");
  if (targets.size() != n) check_target_size("weighted_cross_entropy", targets.size(), n);
  if (!class_weights.empty() && class_weights.size() != c) {
    throw DimensionError("weighted_cross_entropy: " + std::to_string(class_weights.size()) +
                         " class weights for " + std::to_string(c) + " classes");
  }
  auto probs = std::make_shared<std::vector<double>>(n * c);
  auto weights = std::make_shared<std::vector<double>>(n);
  auto target_copy = std::make_shared<std::vector<int>>(targets.begin(), targets.end());
  double total = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = targets[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw RangeError("weighted_cross_entropy: target " + std::to_string(y) + " outside [0, " +
                       std::to_string(c) + ")");
    }
    const auto row = Z.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t k = 0; k < c; ++k) z += ((*probs)[i * c + k] = std::exp(row[k] - mx));
    for (std::size_t k = 0; k < c; ++k) (*probs)[i * c + k] /= z;
    const double log_p = (row[static_cast<std::size_t>(y)] - mx) - std::log(z);
    const double w = class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(y)];
    (*weights)[i] = w;
    total += -w * log_p;
    norm += w;
  }
  if (!(norm > 0.0)) throw RangeError("weighted_cross_entropy: weights sum to zero");
  return tape.record(OpKind::Loss, {logits.id}, scalar<Scalar>(total / norm),
                     [probs, weights, target_copy, n, c, norm](Tape<Scalar>& t, std::size_t self) {
                       const double g = t.grad_of(self)[0];
                       auto& dz = t.grad_buffer(t.inputs_of(self)[0]);
                       for (std::size_t i = 0; i < n; ++i) {
                         const double s = g * (*weights)[i] / norm;
                         for (std::size_t k = 0; k < c; ++k) {
                           const double onehot = static_cast<int>(k) == (*target_copy)[i] ? 1.0 : 0.0;
                           dz[i * c + k] += static_cast<Scalar>(s * ((*probs)[i * c + k] - onehot));
                         }
                       }
                     });
}

template <typename Scalar>
Var binary_cross_entropy(Tape<Scalar>& tape, Var logits, std::span<const float> targets,
                         std::span<const double> pos_weights) {
  const auto& Z = tape.value(logits);
  const std::size_t n = Z.rows(), c = Z.cols();
  check_target_size("binary_cross_entropy", targets.size(), Z.size());
  if (!pos_weights.empty() && pos_weights.size() != c) {
    throw DimensionError("binary_cross_entropy: " + std::to_string(pos_weights.size()) +
                         " positive weights for " + std::to_string(c) + " labels");
  }
  auto coef = std::make_shared<std::vector<double>>(Z.size());
  double total = 0.0;
  const double count = static_cast<double>(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      const double y = targets[i * c + k];
      if (y != 0.0 && y != 1.0) {
        throw RangeError("binary_cross_entropy: target " + std::to_string(y) + " is not 0 or 1");
      }
      const double z = Z(i, k);
      const double pw = pos_weights.empty() ? 1.0 : pos_weights[k];
      total += pw * y * softplus(-z) + (1.0 - y) * softplus(z);
      (*coef)[i * c + k] = (-pw * y * sigmoid(-z) + (1.0 - y) * sigmoid(z)) / count;
    }
  }
  return tape.record(OpKind::Loss, {logits.id}, scalar<Scalar>(total / count),
                     [coef](Tape<Scalar>& t, std::size_t self) {
                       const double g = t.grad_of(self)[0];
                       auto& dz = t.grad_buffer(t.inputs_of(self)[0]);
                       for (std::size_t i = 0; i < dz.size(); ++i) dz[i] += static_cast<Scalar>(g * (*coef)[i]);
                     });
}

template <typename Scalar>
Var ccc_loss(Tape<Scalar>& tape, Var pred, std::span<const float> target) {
  const auto& P = tape.value(pred);
  const std::size_t n = P.rows(), c = P.cols();
  check_target_size("ccc_loss", target.size(), P.size());
  if (n < 2) throw RangeError("ccc_loss: needs at least 2 frames, got " + std::to_string(n));
  auto dpred = std::make_shared<std::vector<double>>(P.size());
  double ccc_sum = 0.0;
  const double nn = static_cast<double>(n);
  for (std::size_t k = 0; k < c; ++k) {
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) mx += P(i, k), my += target[i * c + k];
    mx /= nn, my /= nn;
    double vx = 0.0, vy = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = P(i, k) - mx, dy = target[i * c + k] - my;
      vx += dx * dx, vy += dy * dy, cov += dx * dy;
    }
    vx /= nn, vy /= nn, cov /= nn;
    const double num = 2.0 * cov;
    const double den = vx + vy + (mx - my) * (mx - my);
    if (den <= 0.0) continue;  // both constant and equal: CCC := 0, zero gradient
    ccc_sum += num / den;
    for (std::size_t i = 0; i < n; ++i) {
      const double dnum = 2.0 * (target[i * c + k] - my) / nn;
      const double dden = 2.0 * (P(i, k) - mx) / nn + 2.0 * (mx - my) / nn;
      (*dpred)[i * c + k] = -((dnum * den - num * dden) / (den * den)) / static_cast<double>(c);
    }
  }
  return tape.record(OpKind::Loss, {pred.id}, scalar<Scalar>(1.0 - ccc_sum / static_cast<double>(c)),
                     [dpred](Tape<Scalar>& t, std::size_t self) {
                       const double g = t.grad_of(self)[0];
                       auto& dz = t.grad_buffer(t.inputs_of(self)[0]);
                       for (std::size_t i = 0; i < dz.size(); ++i) dz[i] += static_cast<Scalar>(g * (*dpred)[i]);
                     });
}

template <typename Scalar>
Var mse_loss(Tape<Scalar>& tape, Var pred, std::span<const float> target) {
  const auto& P = tape.value(pred);
  check_target_size("mse_loss", target.size(), P.size());
  auto diff = std::make_shared<std::vector<double>>(P.size());
  double total = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    (*diff)[i] = static_cast<double>(P[i]) - target[i];
    total += (*diff)[i] * (*diff)[i];
  }
  const double count = static_cast<double>(P.size());
  return tape.record(OpKind::Loss, {pred.id}, scalar<Scalar>(total / count),
                     [diff, count](Tape<Scalar>& t, std::size_t self) {
                       const double g = t.grad_of(self)[0];
                       auto& dz = t.grad_buffer(t.inputs_of(self)[0]);
                       for (std::size_t i = 0; i < dz.size(); ++i)
                         dz[i] += static_cast<Scalar>(g * 2.0 * (*diff)[i] / count);
                     });
}

template Var weighted_cross_entropy<float>(Tape<float>&, Var, std::span<const int>, std::span<const double>);
template Var weighted_cross_entropy<double>(Tape<double>&, Var, std::span<const int>, std::span<const double>);
template Var binary_cross_entropy<float>(Tape<float>&, Var, std::span<const float>, std::span<const double>);
template Var binary_cross_entropy<double>(Tape<double>&, Var, std::span<const float>, std::span<const double>);
template Var ccc_loss<float>(Tape<float>&, Var, std::span<const float>);
template Var ccc_loss<double>(Tape<double>&, Var, std::span<const float>);
template Var mse_loss<float>(Tape<float>&, Var, std::span<const float>);
template Var mse_loss<double>(Tape<double>&, Var, std::span<const float>);

}  // namespace affect
