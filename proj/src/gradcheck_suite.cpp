#include "affect/gradcheck_suite.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "affect/losses.hpp"
#include "affect/model.hpp"
#include "affect/rng.hpp"
#include "affect/training.hpp"

namespace affect {

namespace {

BasicTensor<double> random_tensor(Shape shape, Rng& rng, double scale) {
  BasicTensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

/// Labels for `rows` frames of `task`, with the first frame marked invalid.
std::vector<float> random_labels(Task task, std::size_t rows, Rng& rng) {
  const std::size_t w = label_width(task);
  std::vector<float> labels(rows * w);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t k = 0; k < w; ++k) {
      float& y = labels[i * w + k];
      switch (task) {
        case Task::Expr: y = static_cast<float>(rng.below(kExprClasses)); break;
        case Task::Au: y = static_cast<float>(rng.below(2)); break;
        case Task::Va: y = static_cast<float>(rng.uniform(-0.9, 0.9)); break;
      }
    }
  }
  for (std::size_t k = 0; k < w; ++k) labels[k] = invalid_label(task);
  return labels;
}

template <typename F>
GradCheckCase timed(std::string name, F&& run) {
  const auto start = std::chrono::steady_clock::now();
  GradCheckCase c{std::move(name), run(), 0.0};
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return c;
}

constexpr double kKinkMargin = 1e-3;

double min_relu_margin(const ModelParams<double>& params, const ModelConfig& config,
                       const BasicTensor<double>& features, const Mask& pad_mask) {
  Tape<double> tape;
  const ParamVars vars = bind_constants(tape, params);
  forward(tape, vars, params, config, tape.constant(features), pad_mask, ForwardContext{});
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t id = 0; id < tape.size(); ++id) {
    if (tape.kind(Var{id}) != OpKind::Relu) continue;
    for (double v : tape.value_of(tape.inputs_of(id)[0]).data()) margin = std::min(margin, std::abs(v));
  }
  return margin;
}

std::vector<GradCheckCase> encoder_case(Task task, std::uint64_t seed, double h) {
  ModelConfig config;
  config.task = task;
  config.feat_dim = 6;
  config.d_model = 32;
  config.d_ff = 32;
  config.n_layers = 2;
  config.n_heads = 2;
  config.head_hidden = 16;
  config.seg_len = 8;
  config.dropout = 0.0;

  // Central differences are meaningless across a ReLU kink, so inputs are
  // redrawn until every ReLU pre-activation is clear of zero.
  Mask pad_mask(config.seg_len, 1);
  pad_mask[config.seg_len - 1] = pad_mask[config.seg_len - 2] = 0;
  ModelParams<double> params;
  BasicTensor<double> features;
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng = Rng::derive(seed, {0x9c, static_cast<std::uint64_t>(task), attempt});
    params = init_params<double>(config, Rng::derive(seed, {attempt}).next());
    // Fresh init has zero biases and unit gammas; perturb them so every path is exercised.
    params.for_each([&](const std::string&, BasicTensor<double>& t, ParamRole role) {
      if (role != ParamRole::Weight)
        for (auto& v : t.data()) v += 0.1 * rng.normal();
    });
    features = random_tensor({config.seg_len, config.feat_dim}, rng, 1.0);
    if (min_relu_margin(params, config, features, pad_mask) > kKinkMargin) break;
  }
  Rng rng = Rng::derive(seed, {0x9c, static_cast<std::uint64_t>(task), 0x1abe1});

  Segment seg;
  seg.task = task;
  seg.pad_mask = pad_mask;
  seg.labels = random_labels(task, config.seg_len, rng);
  seg.valid = label_validity(task, seg.labels);
  for (std::size_t i = 0; i < seg.length(); ++i)
    if (!seg.pad_mask[i]) seg.valid[i] = 0;

  LossSpec spec;
  spec.task = task;
  if (task == Task::Expr) spec.class_weights = {0.5, 1.0, 1.5, 2.0, 0.7, 1.2, 0.9, 3.0};
  if (task == Task::Au) spec.pos_weights = std::vector<double>(kActionUnits, 2.0);

  // Key biases shift every score of a query row equally, so their exact
  // gradient is zero and a relative error would only measure roundoff.
  std::vector<BasicTensor<double>*> wrt, key_biases;
  params.for_each([&](const std::string& name, BasicTensor<double>& t, ParamRole) {
    (name.ends_with("attn.bk") ? key_biases : wrt).push_back(&t);
  });
  wrt.push_back(&features);

  const Segment* segs[] = {&seg};
  auto build = [&](Tape<double>& tape) {
    const ParamVars vars = bind_params(tape, params);
    const Var x = tape.parameter(features);
    const Var out = forward(tape, vars, params, config, x, seg.pad_mask, ForwardContext{});
    const Var outs[] = {out};
    return batch_loss(tape, std::span<const Var>(outs), std::span<const Segment* const>(segs), spec);
  };
  const std::string name = "encoder_" + std::string(task_name(task));
  std::vector<GradCheckCase> out;
  out.push_back(timed(name, [&] { return finite_difference_check(build, std::span(wrt), h); }));
  out.push_back(timed(name + "_key_bias", [&] { return finite_difference_check(build, std::span(key_biases), h); }));
  out.back().abs_tolerance = kZeroGradTolerance;
  return out;
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed, double h) {
  std::vector<GradCheckCase> cases;
  Rng rng = Rng::derive(seed, {0x9c});
  const std::size_t n = 6;

  {
    const auto logits = random_tensor({n, kExprClasses}, rng, 1.5);
    std::vector<int> targets;
    for (std::size_t i = 0; i < n; ++i) targets.push_back(static_cast<int>(rng.below(kExprClasses)));
    const std::vector<double> weights = {0.5, 1.0, 1.5, 2.0, 0.7, 1.2, 0.9, 3.0};
    cases.push_back(timed("weighted_cross_entropy", [&] {
      return finite_difference_check(
          [&](Tape<double>& t, Var z) { return weighted_cross_entropy(t, z, targets, weights); }, logits, h);
    }));
  }
  {
    const auto logits = random_tensor({n, kActionUnits}, rng, 1.5);
    std::vector<float> targets;
    for (std::size_t i = 0; i < logits.size(); ++i) targets.push_back(static_cast<float>(rng.below(2)));
    std::vector<double> pos(kActionUnits);
    for (auto& p : pos) p = rng.uniform(0.5, 4.0);
    cases.push_back(timed("binary_cross_entropy", [&] {
      return finite_difference_check(
          [&](Tape<double>& t, Var z) { return binary_cross_entropy(t, z, targets, pos); }, logits, h);
    }));
  }
  {
    const auto pred = random_tensor({n, kAffectDims}, rng, 0.5);
    std::vector<float> target;
    for (std::size_t i = 0; i < pred.size(); ++i) target.push_back(static_cast<float>(rng.uniform(-1.0, 1.0)));
    cases.push_back(timed("ccc_loss", [&] {
      return finite_difference_check([&](Tape<double>& t, Var p) { return ccc_loss(t, p, target); }, pred, h);
    }));
    cases.push_back(timed("mse_loss", [&] {
      return finite_difference_check([&](Tape<double>& t, Var p) { return mse_loss(t, p, target); }, pred, h);
    }));
  }
  for (Task task : {Task::Expr, Task::Au, Task::Va})
    for (auto& c : encoder_case(task, seed, h)) cases.push_back(std::move(c));
  return cases;
}

}  // namespace affect
