#include <doctest.h>

#include <cmath>
#include <vector>

#include "affect/gradcheck.hpp"
#include "affect/losses.hpp"
#include "affect/model.hpp"
#include "affect/rng.hpp"
#include "affect/tape.hpp"
#include "support.hpp"

using namespace affect;
using doctest::Approx;

namespace {

Tensor t2(std::size_t r, std::size_t c, std::vector<float> v) { return Tensor(Shape{r, c}, std::move(v)); }


}  // namespace

TEST_CASE("tensor shape invariants") {
  Tensor t(Shape{2, 3}, 1.5f);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_FALSE(t.has_grad());
  t.ensure_grad();
  CHECK(t.grad().size() == t.size());
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<float>{1, 2, 3}), DimensionError);
  Tensor bad(Shape{2}, std::vector<float>{1.0f, std::nanf("")});
  CHECK_THROWS_AS(bad.check_finite("test"), NumericError);
}

TEST_CASE("matmul values and shape errors") {
  Tape<float> tape;
  const Var id = tape.constant(t2(2, 2, {1, 0, 0, 1}));
  const Var m = tape.constant(t2(2, 2, {1, 2, 3, 4}));
  CHECK(tape.value(tape.matmul(id, m)) == t2(2, 2, {1, 2, 3, 4}));
  const Var a = tape.constant(t2(1, 2, {1, 2}));
  const Var b = tape.constant(t2(2, 1, {3, 4}));
  CHECK(tape.value(tape.matmul(a, b))[0] == 11.0f);
  try {
    tape.matmul(a, a);
    FAIL("expected a dimension error");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[1,2]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient of sum(A*B) matches central differences") {
  const std::vector<double> b = {2, 3, 4, 5};
  auto f = [&](const std::vector<double>& a) {
    double s = 0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) s += a[i * 2 + k] * b[k * 2 + j];
    return s;
  };
  const std::vector<double> a0 = {1, 0, 0, 1};
  std::vector<double> expected;
  for (std::size_t i = 0; i < 4; ++i) expected.push_back(oracle::central_difference(f, a0, i, 1e-3));

  Tensor A = t2(2, 2, {1, 0, 0, 1});
  Tape<float> tape;
  const Var va = tape.parameter(A);
  tape.backward(tape.sum(tape.matmul(va, tape.constant(t2(2, 2, {2, 3, 4, 5})))));
  for (std::size_t i = 0; i < 4; ++i) CHECK(A.grad()[i] == Approx(expected[i]).epsilon(1e-6));
  CHECK(A.grad() == std::vector<float>{5, 9, 5, 9});
}

TEST_CASE("softmax values") {
  Tape<float> tape;
  const auto& even = tape.value(tape.softmax(tape.constant(t2(1, 3, {0, 0, 0}))));
  for (float v : even.data()) CHECK(v == Approx(1.0 / 3.0).epsilon(1e-6));

  const auto ref = oracle::softmax({1, 2, 3});
  const Tensor got = tape.value(tape.softmax(tape.constant(t2(1, 3, {1, 2, 3}))));
  for (std::size_t i = 0; i < 3; ++i) CHECK(got[i] == Approx(ref[i]).epsilon(1e-6));
  CHECK(got[0] == Approx(0.09003).epsilon(1e-4));
  CHECK(got[1] == Approx(0.24473).epsilon(1e-4));
  CHECK(got[2] == Approx(0.66524).epsilon(1e-4));

  const Tensor big = tape.value(tape.softmax(tape.constant(t2(1, 3, {1000, 0, 0}))));
  CHECK(big[0] == Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(big[1]) < 1e-6);
}

TEST_CASE("softmax rows sum to one for arbitrary finite inputs") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    const double scale = trial % 2 ? 1e3 : 5.0;
    Tensor x(Shape{3, n});
    for (auto& v : x.data()) v = static_cast<float>(scale * rng.uniform(-1, 1));
    Tape<float> tape;
    const Tensor y = tape.value(tape.softmax(tape.constant(x)));
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0;
      for (float v : y.row(r)) {
        CHECK(v >= 0.0f);
        s += v;
      }
      CHECK(s == Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("layer norm values") {
  Tape<float> tape;
  const Var g = tape.constant(Tensor(Shape{4}, 1.0f));
  const Var b = tape.constant(Tensor(Shape{4}, 0.0f));
  const Tensor flat = tape.value(tape.layer_norm(tape.constant(t2(1, 4, {5, 5, 5, 5})), g, b));
  for (float v : flat.data()) CHECK(v == 0.0f);

  const auto ref = oracle::layer_norm({1, 2, 3, 4}, 1e-5);
  const Tensor y = tape.value(tape.layer_norm(tape.constant(t2(1, 4, {1, 2, 3, 4})), g, b));
  for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == Approx(ref[i]).epsilon(1e-5));
  CHECK(y[0] == Approx(-1.3416).epsilon(1e-4));
  CHECK(y[1] == Approx(-0.4472).epsilon(1e-4));

  const Var zero_gamma = tape.constant(Tensor(Shape{4}, 0.0f));
  const Var beta = tape.constant(Tensor(Shape{4}, std::vector<float>{0.5f, -1, 2, 3}));
  const Tensor shifted = tape.value(tape.layer_norm(tape.constant(t2(1, 4, {1, 7, 3, 4})), zero_gamma, beta));
  CHECK(shifted == Tensor(Shape{1, 4}, std::vector<float>{0.5f, -1, 2, 3}));
}

TEST_CASE("layer norm output is standardised per row") {
  Rng rng(11);
  Tensor x(Shape{50, 16});
  for (auto& v : x.data()) v = static_cast<float>(3.0 + 4.0 * rng.normal());
  Tape<double> tape;
  const Var y = tape.layer_norm(tape.constant(x.cast<double>()), tape.constant(BasicTensor<double>(Shape{16}, 1.0)),
                                tape.constant(BasicTensor<double>(Shape{16}, 0.0)));
  const auto& out = tape.value(y);
  for (std::size_t r = 0; r < 50; ++r) {
    double mean = 0, var = 0;
    for (double v : out.row(r)) mean += v;
    mean /= 16;
    for (double v : out.row(r)) var += (v - mean) * (v - mean);
    var /= 16;
    CHECK(std::abs(mean) <= 1e-4);
    CHECK(std::abs(var - 1.0) <= 1e-3);
  }
}

TEST_CASE("dropout modes") {
  Tensor ones(Shape{10000}, 1.0f);
  Tape<float> tape;
  Rng rng(1);
  const Var x = tape.constant(ones);
  CHECK(tape.value(tape.dropout(x, 0.0, rng, true)) == ones);
  CHECK(tape.value(tape.dropout(x, 0.1, rng, false)) == ones);

  Rng seeded(1);
  const Tensor y = tape.value(tape.dropout(x, 0.1, seeded, true));
  double mean = 0;
  std::size_t zeros = 0;
  for (float v : y.data()) {
    mean += v;
    if (v == 0.0f) ++zeros;
    else CHECK(v == Approx(1.0 / 0.9));
  }
  mean /= 10000.0;
  CHECK(mean == Approx(1.0).epsilon(0.02));
  CHECK(zeros > 800);
  CHECK(zeros < 1200);

  CHECK_THROWS_AS(tape.dropout(x, 1.0, rng, true), RangeError);
  CHECK_THROWS_AS(tape.dropout(x, -0.1, rng, true), RangeError);
}

TEST_CASE("backward of simple losses") {
  Tensor w(Shape{3}, std::vector<float>{1, -2, 3});
  {
    Tape<float> tape;
    tape.backward(tape.sum(tape.parameter(w)));
    CHECK(w.grad() == std::vector<float>{1, 1, 1});
  }
  w.zero_grad();
  {
    Tape<float> tape;
    const Var v = tape.parameter(w);
    tape.backward(tape.sum(tape.mul(v, v)));
    CHECK(w.grad() == std::vector<float>{2, -4, 6});
  }
}

TEST_CASE("a second backward without a new forward is a state error") {
  Tensor w(Shape{3}, 1.0f);
  Tape<float> tape;
  const Var loss = tape.sum(tape.parameter(w));
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), StateError);
  tape.clear();
  tape.backward(tape.sum(tape.parameter(w)));
  CHECK(w.grad() == std::vector<float>{2, 2, 2});
}

TEST_CASE("unreachable parameters receive zero gradient") {
  Tensor used(Shape{2}, 1.0f), unused(Shape{2}, 1.0f);
  Tape<float> tape;
  const Var a = tape.parameter(used);
  tape.parameter(unused);
  tape.backward(tape.sum(a));
  CHECK(unused.grad() == std::vector<float>{0, 0});
}

TEST_CASE("gradients add over consumers and over summed losses") {
  Rng rng(5);
  BasicTensor<double> w(Shape{3, 4}), x(Shape{2, 3});
  for (auto& v : w.data()) v = rng.normal();
  for (auto& v : x.data()) v = rng.normal();
  const BasicTensor<double> proj1(Shape{2, 4}, 0.3), proj2(Shape{2, 4}, -0.7);

  auto loss_a = [&](Tape<double>& t, Var pw) { return t.dot_const(t.tanh(t.matmul(t.constant(x), pw)), proj1); };
  auto loss_b = [&](Tape<double>& t, Var pw) { return t.dot_const(t.relu(t.matmul(t.constant(x), pw)), proj2); };

  std::vector<double> ga, gb;
  {
    w.zero_grad();
    Tape<double> t;
    t.backward(loss_a(t, t.parameter(w)));
    ga = w.grad();
  }
  {
    w.zero_grad();
    Tape<double> t;
    t.backward(loss_b(t, t.parameter(w)));
    gb = w.grad();
  }
  w.zero_grad();
  Tape<double> t;
  const Var pw = t.parameter(w);
  t.backward(t.add(loss_a(t, pw), loss_b(t, pw)));
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(w.grad()[i] == Approx(ga[i] + gb[i]).epsilon(1e-12));
}

TEST_CASE("non-finite results are errors") {
  Tape<float> tape;
  const Var x = tape.constant(t2(1, 2, {3e38f, 3e38f}));
  CHECK_THROWS_AS(tape.add(x, x), NumericError);
  CHECK_THROWS_AS(tape.constant(t2(1, 1, {std::numeric_limits<float>::infinity()})), NumericError);
}

TEST_CASE("finite-difference checker") {
  Rng rng(3);
  BasicTensor<double> x(Shape{2, 3});
  for (auto& v : x.data()) v = rng.normal();

  SUBCASE("identity sum has no error") {
    const auto r = finite_difference_check([](Tape<double>& t, Var v) { return t.sum(v); }, x, 1e-4);
    CHECK(r.max_rel_error < 1e-8);
    CHECK(r.checked == 6);
  }
  SUBCASE("softmax cross-entropy on 4 logits") {
    BasicTensor<double> logits(Shape{1, 4}, std::vector<double>{0.3, -1.2, 2.0, 0.1});
    const std::vector<int> target = {2};
    const auto r = finite_difference_check(
        [&](Tape<double>& t, Var z) { return weighted_cross_entropy(t, z, target, {}); }, logits, 1e-4);
    CHECK(r.max_rel_error <= 1e-3);
  }
  SUBCASE("every elementwise and structural op") {
    BasicTensor<double> w(Shape{3, 3});
    for (auto& v : w.data()) v = rng.normal();
    BasicTensor<double> proj(Shape{2, 3});
    for (auto& v : proj.data()) v = rng.normal();
    BasicTensor<double> proj6(Shape{2, 6});
    for (auto& v : proj6.data()) v = rng.normal();
    BasicTensor<double> proj4(Shape{4, 3});
    for (auto& v : proj4.data()) v = rng.normal();

    auto check = [&](auto&& f) {
      const auto r = finite_difference_check(f, x, 1e-4);
      CHECK(r.max_rel_error <= 1e-3);
    };
    check([&](Tape<double>& t, Var v) { return t.dot_const(t.matmul(v, t.constant(w)), proj); });
    check([&](Tape<double>& t, Var v) { return t.dot_const(t.matmul_nt(v, v), BasicTensor<double>(Shape{2, 2}, 0.5)); });
    check([&](Tape<double>& t, Var v) { return t.dot_const(t.mul(v, t.tanh(v)), proj); });
    check([&](Tape<double>& t, Var v) { return t.dot_const(t.softmax(t.scale(v, 1.7)), proj); });
    check([&](Tape<double>& t, Var v) {
      return t.dot_const(t.layer_norm(v, t.constant(BasicTensor<double>(Shape{3}, std::vector<double>{1.0, 0.5, 2.0})),
                                      t.constant(BasicTensor<double>(Shape{3}, 0.1))),
                         proj);
    });
    check([&](Tape<double>& t, Var v) {
      const Var parts[] = {t.slice_cols(v, 1, 2), v, t.slice_cols(v, 0, 1)};
      return t.dot_const(t.concat_cols(parts), proj6);
    });
    check([&](Tape<double>& t, Var v) {
      const std::size_t rows[] = {1, 0};
      const Var parts[] = {v, t.gather_rows(v, rows)};
      return t.dot_const(t.concat_rows(parts), proj4);
    });
    check([&](Tape<double>& t, Var v) {
      return t.dot_const(t.add_row(v, t.slice_cols(t.gather_rows(v, std::vector<std::size_t>{0}), 0, 3)), proj);
    });
  }
  SUBCASE("one encoder layer on a 4x8 input") {
    ModelConfig c;
    c.feat_dim = 8;
    c.d_model = 8;
    c.d_ff = 8;
    c.n_layers = 1;
    c.n_heads = 2;
    c.head_hidden = 4;
    c.seg_len = 4;
    c.dropout = 0.0;
    auto params = init_params<double>(c, 4);
    for (auto& v : params.layers[0].b1.data()) v = 0.5;  // keep ReLU inputs away from the kink
    BasicTensor<double> input(Shape{4, 8});
    for (auto& v : input.data()) v = rng.normal();
    BasicTensor<double> proj(Shape{4, 8});
    for (auto& v : proj.data()) v = rng.normal();
    const Mask mask(4, 1);
    const auto r = finite_difference_check(
        [&](Tape<double>& t, Var v) {
          const ParamVars vars = bind_constants(t, params);
          return t.dot_const(encoder_layer(t, v, mask, vars.layers[0], c.n_heads, ForwardContext{}, 0), proj);
        },
        input, 1e-4);
    CHECK(r.max_rel_error <= 1e-3);
  }
}

TEST_CASE("forward results are bit-identical across runs") {
  Rng rng(9);
  Tensor a(Shape{5, 7}), b(Shape{7, 3});
  for (auto& v : a.data()) v = static_cast<float>(rng.normal());
  for (auto& v : b.data()) v = static_cast<float>(rng.normal());
  auto run = [&] {
    Tape<float> t;
    Rng drop(42);
    const Var y = t.dropout(t.softmax(t.matmul(t.constant(a), t.constant(b))), 0.3, drop, true);
    return t.value(y);
  };
  CHECK(run() == run());
}

TEST_CASE("rng streams are reproducible and distinct") {
  Rng a = Rng::derive(1, {2, 3}), b = Rng::derive(1, {2, 3}), c = Rng::derive(1, {3, 2});
  const auto x = a.next();
  CHECK(x == b.next());
  CHECK(x != c.next());
  Rng u(0);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
}
