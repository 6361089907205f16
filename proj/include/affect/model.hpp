#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "affect/tape.hpp"
#include "affect/task.hpp"
#include "affect/tensor.hpp"

namespace affect {

/// Per-frame flags; nonzero marks a real frame, zero a padded one.
using Mask = std::vector<std::uint8_t>;

struct ModelConfig {
  std::size_t feat_dim = 1280;
  std::size_t d_model = 512;
  std::size_t d_ff = 512;
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  double dropout = 0.1;
  std::size_t head_hidden = 256;
  std::size_t seg_len = 64;
  Task task = Task::Expr;

  std::size_t n_outputs() const noexcept { return output_width(task); }
  /// Throws ConfigError on zero extents, d_model % n_heads != 0 or dropout outside [0,1).
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Encoder configurations fused in the reference ensemble, as (layers, heads).
inline constexpr std::pair<std::size_t, std::size_t> kEnsembleConfigs[] = {{4, 4}, {4, 8}, {6, 4}};

enum class ParamRole { Weight, Bias, Norm };

template <typename Scalar>
struct EncoderLayerParams {
  BasicTensor<Scalar> wq, bq, wk, bk, wv, bv, wo, bo;
  BasicTensor<Scalar> w1, b1, w2, b2;
  BasicTensor<Scalar> ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
};

/// All trainable tensors plus the fixed positional table.
///
/// Weight matrices are stored [fan_in, fan_out] and applied as x * W + b.
/// for_each() visits trainable tensors in the fixed declaration order that
/// the checkpoint format relies on.
template <typename Scalar>
struct ModelParams {
  BasicTensor<Scalar> proj_w, proj_b;
  std::vector<EncoderLayerParams<Scalar>> layers;
  BasicTensor<Scalar> head_w1, head_b1, head_w2, head_b2;
  BasicTensor<Scalar> positional;

  template <typename F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const BasicTensor<Scalar>& t, ParamRole) { n += t.size(); });
    return n;
  }

  void zero_grad() {
    for_each([](const std::string&, BasicTensor<Scalar>& t, ParamRole) { t.zero_grad(); });
  }

  template <typename Other>
  ModelParams<Other> cast() const {
    ModelParams<Other> out;
    out.proj_w = proj_w.template cast<Other>();
    out.proj_b = proj_b.template cast<Other>();
    for (const auto& l : layers) {
      EncoderLayerParams<Other> o;
      o.wq = l.wq.template cast<Other>(), o.bq = l.bq.template cast<Other>();
      o.wk = l.wk.template cast<Other>(), o.bk = l.bk.template cast<Other>();
      o.wv = l.wv.template cast<Other>(), o.bv = l.bv.template cast<Other>();
      o.wo = l.wo.template cast<Other>(), o.bo = l.bo.template cast<Other>();
      o.w1 = l.w1.template cast<Other>(), o.b1 = l.b1.template cast<Other>();
      o.w2 = l.w2.template cast<Other>(), o.b2 = l.b2.template cast<Other>();
      o.ln1_gamma = l.ln1_gamma.template cast<Other>(), o.ln1_beta = l.ln1_beta.template cast<Other>();
      o.ln2_gamma = l.ln2_gamma.template cast<Other>(), o.ln2_beta = l.ln2_beta.template cast<Other>();
      out.layers.push_back(std::move(o));
    }
    out.head_w1 = head_w1.template cast<Other>();
    out.head_b1 = head_b1.template cast<Other>();
    out.head_w2 = head_w2.template cast<Other>();
    out.head_b2 = head_b2.template cast<Other>();
    out.positional = positional.template cast<Other>();
    return out;
  }

 private:
  template <typename Self, typename F>
  static void visit(Self& self, F& f) {
    f(std::string("proj.w"), self.proj_w, ParamRole::Weight);
    f(std::string("proj.b"), self.proj_b, ParamRole::Bias);
    for (std::size_t i = 0; i < self.layers.size(); ++i) {
      auto& l = self.layers[i];
      const std::string p = "layer" + std::to_string(i) + ".";
      f(p + "attn.wq", l.wq, ParamRole::Weight);
      f(p + "attn.bq", l.bq, ParamRole::Bias);
      f(p + "attn.wk", l.wk, ParamRole::Weight);
      f(p + "attn.bk", l.bk, ParamRole::Bias);
      f(p + "attn.wv", l.wv, ParamRole::Weight);
      f(p + "attn.bv", l.bv, ParamRole::Bias);
      f(p + "attn.wo", l.wo, ParamRole::Weight);
      f(p + "attn.bo", l.bo, ParamRole::Bias);
      f(p + "ffn.w1", l.w1, ParamRole::Weight);
      f(p + "ffn.b1", l.b1, ParamRole::Bias);
      f(p + "ffn.w2", l.w2, ParamRole::Weight);
      f(p + "ffn.b2", l.b2, ParamRole::Bias);
      f(p + "ln1.gamma", l.ln1_gamma, ParamRole::Norm);
      f(p + "ln1.beta", l.ln1_beta, ParamRole::Norm);
      f(p + "ln2.gamma", l.ln2_gamma, ParamRole::Norm);
      f(p + "ln2.beta", l.ln2_beta, ParamRole::Norm);
    }
    f(std::string("head.w1"), self.head_w1, ParamRole::Weight);
    f(std::string("head.b1"), self.head_b1, ParamRole::Bias);
    f(std::string("head.w2"), self.head_w2, ParamRole::Weight);
    f(std::string("head.b2"), self.head_b2, ParamRole::Bias);
  }
};

/// Closed-form trainable parameter count for a configuration.
std::size_t parameter_count(const ModelConfig& config);

/// Sinusoidal table: PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(same).
template <typename Scalar = float>
BasicTensor<Scalar> positional_encoding(std::size_t seg_len, std::size_t d_model);

/// Zero-filled parameters with the shapes implied by `config`.
template <typename Scalar>
ModelParams<Scalar> allocate_params(const ModelConfig& config);

/// Glorot-uniform weights, zero biases, unit gammas, zero betas.
template <typename Scalar = float>
ModelParams<Scalar> init_params(const ModelConfig& config, std::uint64_t seed);

/// Checks every tensor shape against `config`; throws DimensionError naming the first mismatch.
template <typename Scalar>
void check_shapes(const ModelParams<Scalar>& params, const ModelConfig& config);

// Parameter leaves of one tape.
struct LayerVars {
  Var wq, bq, wk, bk, wv, bv, wo, bo, w1, b1, w2, b2, ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
};

struct ParamVars {
  Var proj_w, proj_b;
  std::vector<LayerVars> layers;
  Var head_w1, head_b1, head_w2, head_b2;
};

/// Registers params as trainable leaves so backward() fills their gradients.
template <typename Scalar>
ParamVars bind_params(Tape<Scalar>& tape, ModelParams<Scalar>& params);

/// Registers params as constants (evaluation only).
template <typename Scalar>
ParamVars bind_constants(Tape<Scalar>& tape, const ModelParams<Scalar>& params);

/// Dropout state for one forward pass. Masks are drawn from streams keyed by
/// (seed, step, slot, layer, site), so a replay with the same keys is exact.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::uint64_t slot = 0;
};

/// Additive key mask: 0 for real keys, -1e9 for padded keys, one row per query.
template <typename Scalar>
BasicTensor<Scalar> attention_bias(const Mask& pad_mask);

/// Scaled dot-product attention over `n_heads` heads with padded keys masked out.
/// When `weights` is given it receives one [L, L] probability node per head.
template <typename Scalar>
Var multi_head_attention(Tape<Scalar>& tape, Var x, const Mask& pad_mask, const LayerVars& layer,
                         std::size_t n_heads, std::vector<Var>* weights = nullptr);

/// Post-norm encoder block: y = LN(x + Drop(MHA(x))), z = LN(y + Drop(FFN(y))).
template <typename Scalar>
Var encoder_layer(Tape<Scalar>& tape, Var x, const Mask& pad_mask, const LayerVars& layer,
                  std::size_t n_heads, const ForwardContext& ctx, std::size_t layer_index);

/// Full per-frame pipeline for one segment: projection, positional encoding,
/// encoder stack and task head. Returns [L, n_outputs]; VA outputs are tanh-bounded.
template <typename Scalar>
Var forward(Tape<Scalar>& tape, const ParamVars& vars, const ModelParams<Scalar>& params,
            const ModelConfig& config, Var features, const Mask& pad_mask, const ForwardContext& ctx);

/// Evaluation-mode forward over many segments. Parameters are bound to the
/// internal tape once; each call rewinds the tape to that point.
class Predictor {
 public:
  Predictor(const ModelParams<float>& params, const ModelConfig& config);

  /// [L, n_outputs] outputs for one segment with features [L, feat_dim].
  Tensor operator()(const Tensor& features, const Mask& pad_mask);

 private:
  const ModelParams<float>& params_;
  ModelConfig config_;
  Tape<float> tape_;
  ParamVars vars_;
  std::size_t mark_ = 0;
};

}  // namespace affect
