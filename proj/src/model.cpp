#include "affect/model.hpp"

#include <cmath>
#include <string>

#include "affect/rng.hpp"

namespace affect {

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(feat_dim, "feat_dim");
  positive(d_model, "d_model");
  positive(d_ff, "d_ff");
  positive(n_layers, "n_layers");
  positive(n_heads, "n_heads");
  positive(head_hidden, "head_hidden");
  positive(seg_len, "seg_len");
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                      std::to_string(n_heads) + ")");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t d = c.d_model;
  const std::size_t projection = c.feat_dim * d + d;
  const std::size_t attention = 4 * (d * d + d);
  const std::size_t ffn = (d * c.d_ff + c.d_ff) + (c.d_ff * d + d);
  const std::size_t norms = 4 * d;
  const std::size_t head = (d * c.head_hidden + c.head_hidden) + (c.head_hidden * c.n_outputs() + c.n_outputs());
  return projection + c.n_layers * (attention + ffn + norms) + head;
}

template <typename Scalar>
BasicTensor<Scalar> positional_encoding(std::size_t seg_len, std::size_t d_model) {
  BasicTensor<Scalar> pe(Shape{seg_len, d_model});
  for (std::size_t pos = 0; pos < seg_len; ++pos) {
    for (std::size_t i = 0; i < d_model; ++i) {
      const double even = static_cast<double>(i - i % 2);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, even / static_cast<double>(d_model));
      pe(pos, i) = static_cast<Scalar>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

template <typename Scalar>
ModelParams<Scalar> allocate_params(const ModelConfig& c) {
  c.validate();
  using T = BasicTensor<Scalar>;
  const std::size_t d = c.d_model;
  ModelParams<Scalar> p;
  p.proj_w = T(Shape{c.feat_dim, d});
  p.proj_b = T(Shape{d});
  for (std::size_t i = 0; i < c.n_layers; ++i) {
    EncoderLayerParams<Scalar> l;
    l.wq = T(Shape{d, d}), l.bq = T(Shape{d});
    l.wk = T(Shape{d, d}), l.bk = T(Shape{d});
    l.wv = T(Shape{d, d}), l.bv = T(Shape{d});
    l.wo = T(Shape{d, d}), l.bo = T(Shape{d});
    l.w1 = T(Shape{d, c.d_ff}), l.b1 = T(Shape{c.d_ff});
    l.w2 = T(Shape{c.d_ff, d}), l.b2 = T(Shape{d});
    l.ln1_gamma = T(Shape{d}, Scalar(1)), l.ln1_beta = T(Shape{d});
    l.ln2_gamma = T(Shape{d}, Scalar(1)), l.ln2_beta = T(Shape{d});
    p.layers.push_back(std::move(l));
  }
  p.head_w1 = T(Shape{d, c.head_hidden});
  p.head_b1 = T(Shape{c.head_hidden});
  p.head_w2 = T(Shape{c.head_hidden, c.n_outputs()});
  p.head_b2 = T(Shape{c.n_outputs()});
  p.positional = positional_encoding<Scalar>(c.seg_len, d);
  return p;
}

template <typename Scalar>
ModelParams<Scalar> init_params(const ModelConfig& config, std::uint64_t seed) {
  auto params = allocate_params<Scalar>(config);
  std::uint64_t index = 0;
  params.for_each([&](const std::string&, BasicTensor<Scalar>& t, ParamRole role) {
    const std::uint64_t key = index++;
    if (role != ParamRole::Weight) return;
    const double fan_in = static_cast<double>(t.shape()[0]);
    const double fan_out = static_cast<double>(t.shape()[1]);
    const double s = std::sqrt(6.0 / (fan_in + fan_out));
    Rng rng = Rng::derive(seed, {0x1417, key});
    for (auto& v : t.data()) v = static_cast<Scalar>(rng.uniform(-s, s));
  });
  return params;
}

template <typename Scalar>
void check_shapes(const ModelParams<Scalar>& params, const ModelConfig& config) {
  const auto expected = allocate_params<Scalar>(config);
  std::vector<std::pair<std::string, Shape>> want;
  expected.for_each([&](const std::string& name, const BasicTensor<Scalar>& t, ParamRole) {
    want.emplace_back(name, t.shape());
  });
  std::size_t i = 0;
  params.for_each([&](const std::string& name, const BasicTensor<Scalar>& t, ParamRole) {
    if (i >= want.size() || want[i].first != name || want[i].second != t.shape()) {
      throw DimensionError("parameter " + name + " has shape " + to_string(t.shape()) +
                           (i < want.size() ? ", expected " + want[i].first + " " + to_string(want[i].second)
                                            : ", beyond configured layout"));
    }
    ++i;
  });
  if (i != want.size()) throw DimensionError("parameter set is missing " + want[i].first);
  if (params.parameter_count() != parameter_count(config)) {
    throw DimensionError("parameter count " + std::to_string(params.parameter_count()) +
                         " differs from configured " + std::to_string(parameter_count(config)));
  }
}

namespace {

template <typename Params, typename Bind>
ParamVars bind_with(Bind&& bind, Params& p) {
  ParamVars v;
  v.proj_w = bind(p.proj_w);
  v.proj_b = bind(p.proj_b);
  for (auto& l : p.layers) {
    LayerVars lv;
    lv.wq = bind(l.wq), lv.bq = bind(l.bq), lv.wk = bind(l.wk), lv.bk = bind(l.bk);
    lv.wv = bind(l.wv), lv.bv = bind(l.bv), lv.wo = bind(l.wo), lv.bo = bind(l.bo);
    lv.w1 = bind(l.w1), lv.b1 = bind(l.b1), lv.w2 = bind(l.w2), lv.b2 = bind(l.b2);
    lv.ln1_gamma = bind(l.ln1_gamma), lv.ln1_beta = bind(l.ln1_beta);
    lv.ln2_gamma = bind(l.ln2_gamma), lv.ln2_beta = bind(l.ln2_beta);
    v.layers.push_back(lv);
  }
  v.head_w1 = bind(p.head_w1);
  v.head_b1 = bind(p.head_b1);
  v.head_w2 = bind(p.head_w2);
  v.head_b2 = bind(p.head_b2);
  return v;
}

template <typename Scalar>
Var linear(Tape<Scalar>& tape, Var x, Var w, Var b) {
  return tape.add_row(tape.matmul(x, w), b);
}

std::size_t real_count(const Mask& m) {
  std::size_t n = 0;
  for (auto v : m) n += v != 0;
  return n;
}

}  // namespace

template <typename Scalar>
ParamVars bind_params(Tape<Scalar>& tape, ModelParams<Scalar>& params) {
  return bind_with([&](BasicTensor<Scalar>& t) { return tape.parameter(t); }, params);
}

template <typename Scalar>
ParamVars bind_constants(Tape<Scalar>& tape, const ModelParams<Scalar>& params) {
  return bind_with([&](const BasicTensor<Scalar>& t) { return tape.constant(t); }, params);
}

template <typename Scalar>
BasicTensor<Scalar> attention_bias(const Mask& pad_mask) {
  const std::size_t n = pad_mask.size();
  BasicTensor<Scalar> bias(Shape{n, n});
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t k = 0; k < n; ++k)
      if (pad_mask[k] == 0) bias(q, k) = Scalar(-1e9);
  return bias;
}

template <typename Scalar>
Var multi_head_attention(Tape<Scalar>& tape, Var x, const Mask& pad_mask, const LayerVars& layer,
                         std::size_t n_heads, std::vector<Var>* weights) {
  const auto& X = tape.value(x);
  if (X.rows() != pad_mask.size()) {
    throw DimensionError("multi_head_attention: mask length " + std::to_string(pad_mask.size()) +
                         " does not match " + to_string(X.shape()));
  }
  if (real_count(pad_mask) == 0) {
    throw RangeError("multi_head_attention: segment contains no real frame");
  }
  const std::size_t d = X.cols();
  if (n_heads == 0 || d % n_heads != 0) {
    throw DimensionError("multi_head_attention: width " + std::to_string(d) + " not divisible into " +
                         std::to_string(n_heads) + " heads");
  }
  const std::size_t dk = d / n_heads;
  const Var q = linear(tape, x, layer.wq, layer.bq);
  const Var k = linear(tape, x, layer.wk, layer.bk);
  const Var v = linear(tape, x, layer.wv, layer.bv);
  const auto bias = attention_bias<Scalar>(pad_mask);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Var> heads;
  for (std::size_t h = 0; h < n_heads; ++h) {
    const Var qh = tape.slice_cols(q, h * dk, dk);
    const Var kh = tape.slice_cols(k, h * dk, dk);
    const Var vh = tape.slice_cols(v, h * dk, dk);
    const Var scores = tape.add_const(tape.scale(tape.matmul_nt(qh, kh), scale), bias);
    const Var probs = tape.softmax(scores);
    if (weights != nullptr) weights->push_back(probs);
    heads.push_back(tape.matmul(probs, vh));
  }
  return linear(tape, tape.concat_cols(heads), layer.wo, layer.bo);
}

template <typename Scalar>
Var encoder_layer(Tape<Scalar>& tape, Var x, const Mask& pad_mask, const LayerVars& layer,
                  std::size_t n_heads, const ForwardContext& ctx, std::size_t layer_index) {
  Rng attn_rng = Rng::derive(ctx.seed, {ctx.step, ctx.slot, layer_index, 0});
  Rng ffn_rng = Rng::derive(ctx.seed, {ctx.step, ctx.slot, layer_index, 1});

  const Var attn = multi_head_attention(tape, x, pad_mask, layer, n_heads);
  const Var y = tape.layer_norm(tape.add(x, tape.dropout(attn, ctx.dropout, attn_rng, ctx.training)),
                                layer.ln1_gamma, layer.ln1_beta);
  const Var hidden = tape.relu(linear(tape, y, layer.w1, layer.b1));
  const Var ffn = linear(tape, hidden, layer.w2, layer.b2);
  return tape.layer_norm(tape.add(y, tape.dropout(ffn, ctx.dropout, ffn_rng, ctx.training)),
                         layer.ln2_gamma, layer.ln2_beta);
}

template <typename Scalar>
Var forward(Tape<Scalar>& tape, const ParamVars& vars, const ModelParams<Scalar>& params,
            const ModelConfig& config, Var features, const Mask& pad_mask, const ForwardContext& ctx) {
  const auto& F = tape.value(features);
  if (F.rank() != 2 || F.cols() != config.feat_dim) {
    throw DimensionError("forward: features " + to_string(F.shape()) + " do not match feat_dim " +
                         std::to_string(config.feat_dim));
  }
  const std::size_t frames = F.rows();
  BasicTensor<Scalar> pe = frames <= params.positional.rows() && params.positional.cols() == config.d_model
                               ? BasicTensor<Scalar>(Shape{frames, config.d_model},
                                                     std::vector<Scalar>(params.positional.data().begin(),
                                                                         params.positional.data().begin() +
                                                                             frames * config.d_model))
                               : positional_encoding<Scalar>(frames, config.d_model);

  ForwardContext layer_ctx = ctx;
  layer_ctx.dropout = ctx.training ? config.dropout : 0.0;

  Var h = tape.add_const(linear(tape, features, vars.proj_w, vars.proj_b), pe);
  for (std::size_t i = 0; i < vars.layers.size(); ++i) {
    h = encoder_layer(tape, h, pad_mask, vars.layers[i], config.n_heads, layer_ctx, i);
  }
  const Var hidden = tape.relu(linear(tape, h, vars.head_w1, vars.head_b1));
  const Var out = linear(tape, hidden, vars.head_w2, vars.head_b2);
  return config.task == Task::Va ? tape.tanh(out) : out;
}

Predictor::Predictor(const ModelParams<float>& params, const ModelConfig& config)
    : params_(params), config_(config) {
  check_shapes(params, config);
  vars_ = bind_constants(tape_, params_);
  mark_ = tape_.size();
}

Tensor Predictor::operator()(const Tensor& features, const Mask& pad_mask) {
  tape_.rewind(mark_);
  const Var x = tape_.constant(features);
  const Var out = forward(tape_, vars_, params_, config_, x, pad_mask, ForwardContext{});
  return tape_.value(out);
}

#define AFFECT_INSTANTIATE_MODEL(S)                                                                    \
  template BasicTensor<S> positional_encoding<S>(std::size_t, std::size_t);                            \
  template ModelParams<S> allocate_params<S>(const ModelConfig&);                                      \
  template ModelParams<S> init_params<S>(const ModelConfig&, std::uint64_t);                           \
  template void check_shapes<S>(const ModelParams<S>&, const ModelConfig&);                            \
  template ParamVars bind_params<S>(Tape<S>&, ModelParams<S>&);                                        \
  template ParamVars bind_constants<S>(Tape<S>&, const ModelParams<S>&);                               \
  template BasicTensor<S> attention_bias<S>(const Mask&);                                              \
  template Var multi_head_attention<S>(Tape<S>&, Var, const Mask&, const LayerVars&, std::size_t,      \
                                       std::vector<Var>*);                                             \
  template Var encoder_layer<S>(Tape<S>&, Var, const Mask&, const LayerVars&, std::size_t,             \
                                const ForwardContext&, std::size_t);                                   \
  template Var forward<S>(Tape<S>&, const ParamVars&, const ModelParams<S>&, const ModelConfig&, Var, \
                          const Mask&, const ForwardContext&);

AFFECT_INSTANTIATE_MODEL(float)
AFFECT_INSTANTIATE_MODEL(double)

#undef AFFECT_INSTANTIATE_MODEL

}  // namespace affect
