#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "affect/metrics.hpp"
#include "affect/rng.hpp"
#include "support.hpp"

using namespace affect;
using doctest::Approx;

namespace {

Eigen::MatrixXi column(std::vector<int> v) {
  Eigen::MatrixXi m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
  return m;
}

}  // namespace

TEST_CASE("macro F1 examples") {
  const std::vector<int> truths = {0, 0, 1, 1}, preds = {0, 1, 1, 1};
  CHECK(macro_f1(preds, truths, 2) == Approx((2.0 / 3 + 4.0 / 5) / 2).epsilon(1e-15));
  CHECK(macro_f1(preds, truths, 2) == Approx(0.7333).epsilon(1e-4));
  CHECK(macro_f1(std::vector<int>{0, 0, 0, 0}, truths, 2) == Approx(1.0 / 3).epsilon(1e-15));

  std::vector<int> all(8);
  std::iota(all.begin(), all.end(), 0);
  CHECK(macro_f1(all, all, 8) == 1.0);

  CHECK(macro_f1(std::vector<int>{0, 1}, std::vector<int>{0, 1}, 3) == Approx(2.0 / 3));
  CHECK_THROWS(macro_f1(std::vector<int>{}, std::vector<int>{}, 2));
  CHECK_THROWS_AS(macro_f1(std::vector<int>{0}, std::vector<int>{0, 1}, 2), DimensionError);
}

TEST_CASE("confusion matrix") {
  const std::vector<int> truths = {0, 0, 1, 1}, preds = {0, 1, 1, 1};
  const auto cm = confusion(preds, truths, 2);
  CHECK(cm(0, 0) == 1);
  CHECK(cm(0, 1) == 1);
  CHECK(cm(1, 0) == 0);
  CHECK(cm(1, 1) == 2);
  CHECK(confusion(truths, truths, 2) == (ConfusionMatrix(2, 2) << 2, 0, 0, 2).finished());
  CHECK_THROWS_AS(confusion(std::vector<int>{2}, std::vector<int>{0}, 2), RangeError);
  CHECK_THROWS_AS(confusion(std::vector<int>{0}, std::vector<int>{-1}, 2), RangeError);

  Rng rng(2);
  std::vector<int> p(300), t(300);
  for (auto& v : p) v = static_cast<int>(rng.below(8));
  for (auto& v : t) v = static_cast<int>(rng.below(8));
  const auto big = confusion(p, t, 8);
  CHECK(big.sum() == 300);
  CHECK(big.minCoeff() >= 0);
  for (int c = 0; c < 8; ++c) CHECK(big.row(c).sum() == std::count(t.begin(), t.end(), c));
  CHECK(macro_f1(big) == macro_f1(p, t, 8));
}

TEST_CASE("AU F1 examples") {
  CHECK(multilabel_f1(column({1, 0, 0}), column({1, 1, 0})) == Approx(2.0 / 3).epsilon(1e-15));
  Eigen::MatrixXi truths = Eigen::MatrixXi::Identity(12, 12);
  CHECK(multilabel_f1(truths, truths) == 1.0);
  CHECK(multilabel_f1(Eigen::MatrixXi::Zero(12, 12), truths) == 0.0);
  CHECK_THROWS_AS(multilabel_f1(Eigen::MatrixXi::Zero(3, 12), Eigen::MatrixXi::Zero(3, 11)), DimensionError);
}

TEST_CASE("CCC examples") {
  Eigen::MatrixXd t(4, 2);
  t << -1, 0.5, 0, -0.5, 1, 0.25, 0, -0.25;
  CHECK(mean_ccc(t, t) == Approx(1.0).epsilon(1e-15));
  Eigen::MatrixXd centred = t.rowwise() - t.colwise().mean();
  CHECK(mean_ccc(-centred, centred) == Approx(-1.0).epsilon(1e-15));
  CHECK(mean_ccc(Eigen::MatrixXd::Constant(4, 2, 0.3), t) == 0.0);
  CHECK(mean_ccc(Eigen::MatrixXd::Constant(4, 2, 0.3), Eigen::MatrixXd::Constant(4, 2, 0.3)) == 0.0);
  CHECK_THROWS_AS(mean_ccc(t.topRows(1), t.topRows(1)), RangeError);
}

TEST_CASE("metrics agree with brute-force tallies") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(120);
    std::vector<int> p(n), t(n);
    for (auto& v : p) v = static_cast<int>(rng.below(8));
    for (auto& v : t) v = static_cast<int>(rng.below(8));
    CHECK(std::abs(macro_f1(p, t, 8) - oracle::macro_f1(p, t, 8)) <= 1e-9);

    Eigen::MatrixXi ap(static_cast<Eigen::Index>(n), 12), at(static_cast<Eigen::Index>(n), 12);
    std::vector<int> fp, ft;
    for (std::size_t i = 0; i < n; ++i)
      for (Eigen::Index k = 0; k < 12; ++k) {
        ap(static_cast<Eigen::Index>(i), k) = static_cast<int>(rng.below(2));
        at(static_cast<Eigen::Index>(i), k) = static_cast<int>(rng.below(2));
        fp.push_back(ap(static_cast<Eigen::Index>(i), k));
        ft.push_back(at(static_cast<Eigen::Index>(i), k));
      }
    CHECK(std::abs(multilabel_f1(ap, at) - oracle::multilabel_f1(fp, ft, 12)) <= 1e-9);

    if (n < 2) continue;
    Eigen::MatrixXd vp(static_cast<Eigen::Index>(n), 2), vt(static_cast<Eigen::Index>(n), 2);
    std::vector<double> p0, p1, t0, t1;
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      vp(r, 0) = rng.uniform(-1, 1);
      vp(r, 1) = rng.uniform(-1, 1);
      vt(r, 0) = rng.uniform(-1, 1);
      vt(r, 1) = rng.uniform(-1, 1);
      p0.push_back(vp(r, 0));
      p1.push_back(vp(r, 1));
      t0.push_back(vt(r, 0));
      t1.push_back(vt(r, 1));
    }
    CHECK(std::abs(mean_ccc(vp, vt) - (oracle::ccc(p0, t0) + oracle::ccc(p1, t1)) / 2) <= 1e-9);
  }
}

TEST_CASE("metrics are invariant under consistent permutations") {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng.below(60);
    std::vector<int> p(n), t(n);
    Eigen::MatrixXd vp(static_cast<Eigen::Index>(n), 2), vt(static_cast<Eigen::Index>(n), 2);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<int>(rng.below(8));
      t[i] = static_cast<int>(rng.below(8));
      for (Eigen::Index k = 0; k < 2; ++k) {
        vp(static_cast<Eigen::Index>(i), k) = rng.normal();
        vt(static_cast<Eigen::Index>(i), k) = rng.normal();
      }
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(std::span(perm));
    std::vector<int> pp(n), tp(n);
    Eigen::MatrixXd vpp(vp.rows(), 2), vtp(vt.rows(), 2);
    for (std::size_t i = 0; i < n; ++i) {
      pp[i] = p[perm[i]];
      tp[i] = t[perm[i]];
      vpp.row(static_cast<Eigen::Index>(i)) = vp.row(static_cast<Eigen::Index>(perm[i]));
      vtp.row(static_cast<Eigen::Index>(i)) = vt.row(static_cast<Eigen::Index>(perm[i]));
    }
    CHECK(macro_f1(pp, tp, 8) == Approx(macro_f1(p, t, 8)).epsilon(1e-14));
    CHECK(mean_ccc(vpp, vtp) == Approx(mean_ccc(vp, vt)).epsilon(1e-12));
    CHECK(mean_ccc(vt, vp) == Approx(mean_ccc(vp, vt)).epsilon(1e-12));
    const double m = macro_f1(p, t, 8);
    CHECK(m >= 0.0);
    CHECK(m <= 1.0);
  }
}
