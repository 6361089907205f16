#include <doctest.h>

#include <cmath>
#include <numeric>

#include "affect/model.hpp"
#include "affect/rng.hpp"
#include "support.hpp"

using namespace affect;
using doctest::Approx;

namespace {

ModelConfig small_config(Task task = Task::Expr) {
  ModelConfig c;
  c.task = task;
  c.feat_dim = 8;
  c.d_model = 16;
  c.d_ff = 16;
  c.n_layers = 2;
  c.n_heads = 4;
  c.head_hidden = 8;
  c.seg_len = 6;
  c.dropout = 0.0;
  return c;
}

Tensor random_features(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(Shape{rows, cols});
  for (auto& v : t.data()) v = static_cast<float>(rng.normal());
  return t;
}

Tensor run_forward(const ModelParams<float>& params, const ModelConfig& c, const Tensor& x, const Mask& mask) {
  Tape<float> tape;
  const ParamVars vars = bind_constants(tape, params);
  return tape.value(forward(tape, vars, params, c, tape.constant(x), mask, ForwardContext{}));
}

}  // namespace

TEST_CASE("parameter count matches a layer-by-layer tally") {
  ModelConfig c;
  c.n_layers = 4;
  c.n_heads = 4;
  c.feat_dim = 8;
  c.d_model = 16;
  c.d_ff = 16;
  c.head_hidden = 8;
  c.task = Task::Expr;

  const std::size_t projection = 8 * 16 + 16;
  const std::size_t attention = 4 * (16 * 16 + 16);
  const std::size_t ffn = (16 * 16 + 16) + (16 * 16 + 16);
  const std::size_t norms = 2 * (16 + 16);
  const std::size_t head = (16 * 8 + 8) + (8 * 8 + 8);
  const std::size_t expected = projection + 4 * (attention + ffn + norms) + head;
  CHECK(expected == 7136);
  CHECK(parameter_count(c) == expected);
  CHECK(init_params<float>(c, 1).parameter_count() == expected);

  for (auto task : {Task::Au, Task::Va}) {
    c.task = task;
    CHECK(init_params<float>(c, 1).parameter_count() == parameter_count(c));
  }
}

TEST_CASE("config validation") {
  ModelConfig c = small_config();
  CHECK_NOTHROW(c.validate());
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.n_layers = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(small_config(Task::Expr).n_outputs() == 8);
  CHECK(small_config(Task::Au).n_outputs() == 12);
  CHECK(small_config(Task::Va).n_outputs() == 2);
}

TEST_CASE("ensemble configurations are legal at full width") {
  for (auto [layers, heads] : kEnsembleConfigs) {
    ModelConfig c;
    c.n_layers = layers;
    c.n_heads = heads;
    CHECK_NOTHROW(c.validate());
  }
}

TEST_CASE("init is deterministic with zero biases and identity norms") {
  const auto c = small_config();
  const auto a = init_params<float>(c, 5), b = init_params<float>(c, 5), other = init_params<float>(c, 6);
  CHECK(a.proj_w == b.proj_w);
  CHECK(a.layers[1].w2 == b.layers[1].w2);
  CHECK_FALSE(a.proj_w == other.proj_w);
  a.for_each([](const std::string& name, const Tensor& t, ParamRole role) {
    if (role == ParamRole::Bias || name.ends_with("beta"))
      for (float v : t.data()) CHECK(v == 0.0f);
    if (name.ends_with("gamma"))
      for (float v : t.data()) CHECK(v == 1.0f);
  });
}

TEST_CASE("glorot init variance") {
  ModelConfig c = small_config();
  c.d_model = 512;
  c.d_ff = 512;
  c.n_heads = 4;
  c.n_layers = 1;
  const auto p = init_params<float>(c, 11);
  const auto& w = p.layers[0].wq;
  REQUIRE(w.shape() == Shape{512, 512});
  const double s = std::sqrt(6.0 / 1024.0);
  double mean = 0;
  for (float v : w.data()) {
    CHECK(std::abs(v) <= s);
    mean += v;
  }
  mean /= static_cast<double>(w.size());
  double var = 0;
  for (float v : w.data()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(w.size() - 1);
  CHECK(var == Approx(s * s / 3).epsilon(0.10));
}

TEST_CASE("positional encoding") {
  const auto pe = positional_encoding<double>(64, 16);
  for (std::size_t i = 0; i < 16; ++i) CHECK(pe(0, i) == (i % 2 == 0 ? 0.0 : 1.0));
  CHECK(pe(1, 0) == Approx(std::sin(1.0)));
  CHECK(pe(1, 0) == Approx(0.84147).epsilon(1e-5));
  CHECK(pe(3, 5) == Approx(std::cos(3.0 / std::pow(10000.0, 4.0 / 16.0))));
  for (double v : pe.data()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("attention examples") {
  auto c = small_config();
  auto params = init_params<float>(c, 2);

  SUBCASE("a single frame attends to itself") {
    Tape<float> tape;
    const ParamVars vars = bind_constants(tape, params);
    std::vector<Var> weights;
    multi_head_attention(tape, tape.constant(random_features(1, 16, 1)), Mask{1}, vars.layers[0], c.n_heads, &weights);
    REQUIRE(weights.size() == c.n_heads);
    for (Var w : weights) CHECK(tape.value(w) == Tensor(Shape{1, 1}, 1.0f));
  }
  SUBCASE("identical rows give identical outputs") {
    Tensor x(Shape{5, 16});
    const Tensor row = random_features(1, 16, 3);
    for (std::size_t r = 0; r < 5; ++r) std::copy(row.data().begin(), row.data().end(), x.row(r).begin());
    Tape<float> tape;
    const ParamVars vars = bind_constants(tape, params);
    const Tensor y = tape.value(multi_head_attention(tape, tape.constant(x), Mask(5, 1), vars.layers[0], c.n_heads));
    for (std::size_t r = 1; r < 5; ++r)
      for (std::size_t k = 0; k < 16; ++k) CHECK(y(r, k) == Approx(y(0, k)).epsilon(1e-6));
  }
  SUBCASE("padded keys receive no weight") {
    Tape<float> tape;
    const ParamVars vars = bind_constants(tape, params);
    std::vector<Var> weights;
    const Mask mask = {1, 1, 0};
    multi_head_attention(tape, tape.constant(random_features(3, 16, 4)), mask, vars.layers[0], c.n_heads, &weights);
    for (Var w : weights) {
      const Tensor& p = tape.value(w);
      for (std::size_t q = 0; q < 3; ++q) {
        CHECK(p(q, 2) < 1e-6f);
        CHECK(p(q, 0) + p(q, 1) == Approx(1.0).epsilon(1e-6));
      }
    }
  }
  SUBCASE("an all-padded segment is rejected") {
    Tape<float> tape;
    const ParamVars vars = bind_constants(tape, params);
    CHECK_THROWS_AS(multi_head_attention(tape, tape.constant(random_features(2, 16, 1)), Mask{0, 0}, vars.layers[0],
                                         c.n_heads),
                    RangeError);
    CHECK_THROWS_AS(multi_head_attention(tape, tape.constant(random_features(2, 16, 1)), Mask{1}, vars.layers[0],
                                         c.n_heads),
                    DimensionError);
  }
}

TEST_CASE("encoder layer with zeroed branches reduces to two layer norms") {
  auto c = small_config();
  auto params = init_params<float>(c, 3);
  auto& l = params.layers[0];
  l.wo = Tensor(l.wo.shape());
  l.bo = Tensor(l.bo.shape());
  l.w2 = Tensor(l.w2.shape());
  l.b2 = Tensor(l.b2.shape());
  const Tensor x = random_features(4, 16, 8);

  Tape<float> tape;
  const ParamVars vars = bind_constants(tape, params);
  const Tensor z = tape.value(encoder_layer(tape, tape.constant(x), Mask(4, 1), vars.layers[0], c.n_heads,
                                            ForwardContext{}, 0));
  REQUIRE(z.shape() == Shape{4, 16});
  for (std::size_t r = 0; r < 4; ++r) {
    const std::vector<double> row(x.row(r).begin(), x.row(r).end());
    const auto expected = oracle::layer_norm(oracle::layer_norm(row, 1e-5), 1e-5);
    for (std::size_t k = 0; k < 16; ++k) CHECK(z(r, k) == Approx(expected[k]).epsilon(1e-4));
  }
}

TEST_CASE("forward output contract per task") {
  for (auto task : {Task::Expr, Task::Au, Task::Va}) {
    const auto c = small_config(task);
    const auto params = init_params<float>(c, 1);
    for (std::size_t frames : {1u, 4u, 6u, 9u}) {
      Tensor x = random_features(frames, 8, frames);
      if (task == Task::Va)
        for (auto& v : x.data()) v *= 50.0f;
      const Tensor y = run_forward(params, c, x, Mask(frames, 1));
      CHECK(y.rows() == frames);
      CHECK(y.cols() == output_width(task));
      if (task == Task::Va) {
        for (float v : y.data()) {
          CHECK(v >= -1.0f);
          CHECK(v <= 1.0f);
        }
      }
    }
  }
}

TEST_CASE("forward rejects a feature width mismatch") {
  const auto c = small_config();
  const auto params = init_params<float>(c, 1);
  CHECK_THROWS_AS(run_forward(params, c, random_features(4, 7, 1), Mask(4, 1)), DimensionError);
}

TEST_CASE("forward is a pure function without dropout") {
  const auto c = small_config();
  const auto params = init_params<float>(c, 1);
  const Tensor x = random_features(6, 8, 2);
  CHECK(run_forward(params, c, x, Mask(6, 1)) == run_forward(params, c, x, Mask(6, 1)));
}

TEST_CASE("attention mixes information across frames") {
  const auto c = small_config();
  const auto params = init_params<float>(c, 1);
  Tensor x = random_features(4, 8, 2);
  const Tensor before = run_forward(params, c, x, Mask(4, 1));
  for (float& v : x.row(2)) v += 1.0f;
  const Tensor after = run_forward(params, c, x, Mask(4, 1));
  for (std::size_t r : {0u, 1u, 3u}) {
    bool changed = false;
    for (std::size_t k = 0; k < after.cols(); ++k) changed = changed || after(r, k) != before(r, k);
    CHECK(changed);
  }
}

TEST_CASE("padded frames have no influence on real frames") {
  const auto c = small_config();
  const auto params = init_params<float>(c, 1);
  const Mask mask = {1, 1, 1, 1, 0, 0};
  Tensor x = random_features(6, 8, 5);
  const Tensor before = run_forward(params, c, x, mask);
  for (std::size_t r : {4u, 5u})
    for (float& v : x.row(r)) v = 100.0f;
  const Tensor after = run_forward(params, c, x, mask);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t k = 0; k < after.cols(); ++k) CHECK(after(r, k) == before(r, k));
  for (float v : after.data()) CHECK(std::isfinite(v));
}

TEST_CASE("permuting frames with the positional table permutes outputs") {
  const auto c = small_config();
  auto params = init_params<float>(c, 1);
  const Tensor x = random_features(6, 8, 6);
  const Tensor y = run_forward(params, c, x, Mask(6, 1));

  const std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
  Tensor xp(x.shape());
  Tensor pe(params.positional.shape());
  for (std::size_t i = 0; i < 6; ++i) {
    std::copy(x.row(perm[i]).begin(), x.row(perm[i]).end(), xp.row(i).begin());
    std::copy(params.positional.row(perm[i]).begin(), params.positional.row(perm[i]).end(), pe.row(i).begin());
  }
  params.positional = pe;
  const Tensor yp = run_forward(params, c, xp, Mask(6, 1));
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t k = 0; k < y.cols(); ++k) CHECK(yp(i, k) == Approx(y(perm[i], k)).epsilon(1e-5));
}

TEST_CASE("dropout in training mode replays exactly for the same keys") {
  auto c = small_config();
  c.dropout = 0.3;
  const auto params = init_params<float>(c, 1);
  const Tensor x = random_features(6, 8, 1);
  auto run = [&](std::uint64_t step) {
    Tape<float> tape;
    const ParamVars vars = bind_constants(tape, params);
    ForwardContext ctx{true, c.dropout, 9, step, 0};
    return tape.value(forward(tape, vars, params, c, tape.constant(x), Mask(6, 1), ctx));
  };
  CHECK(run(1) == run(1));
  CHECK_FALSE(run(1) == run(2));
  CHECK_FALSE(run(1) == run_forward(params, c, x, Mask(6, 1)));
}

TEST_CASE("predictor matches a fresh forward") {
  const auto c = small_config(Task::Au);
  const auto params = init_params<float>(c, 4);
  Predictor predict(params, c);
  for (std::uint64_t s = 0; s < 3; ++s) {
    const Tensor x = random_features(6, 8, s);
    const Mask mask = {1, 1, 1, 1, 1, static_cast<std::uint8_t>(s % 2)};
    CHECK(predict(x, mask) == run_forward(params, c, x, mask));
  }
}

TEST_CASE("shape check names the offending tensor") {
  const auto c = small_config();
  auto params = init_params<float>(c, 1);
  params.layers[1].w1 = Tensor(Shape{16, 15});
  try {
    check_shapes(params, c);
    FAIL("expected a dimension error");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("layer1.ffn.w1") != std::string::npos);
  }
}
