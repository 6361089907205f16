#include "affect/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "affect/binary.hpp"
#include "affect/losses.hpp"
#include "affect/metrics.hpp"
#include "affect/rng.hpp"

namespace affect {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Optimizer

std::vector<ParamSlot> param_slots(ModelParams<float>& params) {
  std::vector<ParamSlot> slots;
  params.for_each([&](const std::string&, Tensor& t, ParamRole role) { slots.push_back({&t, role == ParamRole::Weight}); });
  return slots;
}

void adam_step(std::span<const ParamSlot> params, OptimizerState& state, const TrainConfig& config) {
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor->shape());
      state.v.emplace_back(p.tensor->shape());
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& p = *params[i].tensor;
    if (state.m[i].shape() != p.shape()) throw DimensionError("adam_step: moment shape differs from parameter " + std::to_string(i));
    if (!p.has_grad()) throw StateError("adam_step: parameter " + std::to_string(i) + " has no gradient buffer");
    const auto& g = p.grad();
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!std::isfinite(g[k])) {
        throw NumericError("adam_step: non-finite gradient " + std::to_string(g[k]) + " in parameter " +
                           std::to_string(i) + " " + to_string(p.shape()) + " at element " + std::to_string(k) +
                           " (step " + std::to_string(state.t + 1) + ")");
      }
    }
  }
  state.t += 1;
  const double lr = config.lr;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i].tensor;
    const auto& g = p.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      double value = p[k];
      if (params[i].decay) value -= lr * config.weight_decay * value;
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * static_cast<double>(g[k]) * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      value -= lr * m_hat / (std::sqrt(v_hat) + config.adam_eps);
      p[k] = static_cast<float>(value);
    }
    p.check_finite("adam_step");
  }
}

// ---------------------------------------------------------------------------
// Losses

LossSpec make_loss_spec(Task task, std::span<const Segment> train, bool weighted, VaLoss va_loss) {
  LossSpec spec;
  spec.task = task;
  spec.va_loss = va_loss;
  if (weighted && task == Task::Expr) spec.class_weights = compute_class_weights(class_histogram(train, kExprClasses));
  if (weighted && task == Task::Au) spec.pos_weights = au_positive_weights(train);
  return spec;
}

template <typename Scalar>
Var batch_loss(Tape<Scalar>& tape, std::span<const Var> outputs, std::span<const Segment* const> segments,
               const LossSpec& spec) {
  if (outputs.size() != segments.size()) throw DimensionError("batch_loss: outputs and segments differ in count");
  const std::size_t w = label_width(spec.task);
  std::vector<Var> parts;
  std::vector<int> classes;
  std::vector<float> targets;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const Segment& seg = *segments[s];
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < seg.length(); ++i) {
      if (!seg.valid[i] || !seg.pad_mask[i]) continue;
      rows.push_back(i);
      if (spec.task == Task::Expr) classes.push_back(static_cast<int>(seg.labels[i]));
      else targets.insert(targets.end(), seg.labels.begin() + static_cast<std::ptrdiff_t>(i * w),
                          seg.labels.begin() + static_cast<std::ptrdiff_t>((i + 1) * w));
    }
    if (!rows.empty()) parts.push_back(tape.gather_rows(outputs[s], rows));
  }
  const std::size_t scored = spec.task == Task::Expr ? classes.size() : targets.size() / w;
  if (scored == 0 || (spec.task == Task::Va && spec.va_loss == VaLoss::Ccc && scored < 2)) return Var{};
  const Var z = parts.size() == 1 ? parts.front() : tape.concat_rows(parts);
  switch (spec.task) {
    case Task::Expr: return weighted_cross_entropy(tape, z, classes, spec.class_weights);
    case Task::Au: return binary_cross_entropy(tape, z, targets, spec.pos_weights);
    case Task::Va: return spec.va_loss == VaLoss::Ccc ? ccc_loss(tape, z, targets) : mse_loss(tape, z, targets);
  }
  return Var{};
}

template Var batch_loss<float>(Tape<float>&, std::span<const Var>, std::span<const Segment* const>, const LossSpec&);
template Var batch_loss<double>(Tape<double>&, std::span<const Var>, std::span<const Segment* const>, const LossSpec&);

// ---------------------------------------------------------------------------
// Prediction and scoring

Tensor predict_sequence(Predictor& predictor, const FrameSequence& seq, std::size_t seg_len) {
  Tensor out;
  for (const auto& seg : segment_sequence(seq, seg_len, /*drop_unlabeled=*/false)) {
    const Tensor y = predictor(seg.features, seg.pad_mask);
    if (out.empty()) out = Tensor(Shape{seq.n_frames(), y.cols()});
    const std::size_t real = seg.real_frames();
    std::copy_n(y.data().begin(), real * y.cols(), out.row(seg.start).begin());
  }
  return out;
}

namespace {

struct ScoredFrames {
  std::vector<int> pred_class, true_class;
  std::vector<int> pred_bits, true_bits;
  std::vector<double> pred_values, true_values;
  std::size_t frames = 0;
};

void collect(Task task, const Tensor& out, std::span<const float> labels, const Mask& valid, const Mask* pad,
             double threshold, ScoredFrames& acc) {
  const std::size_t w = label_width(task);
  if (out.cols() != output_width(task)) {
    throw DimensionError("scoring: output width " + std::to_string(out.cols()) + " does not match task " +
                         std::string(task_name(task)));
  }
  if (out.rows() != valid.size()) {
    throw DimensionError("scoring: " + std::to_string(out.rows()) + " output frames for " +
                         std::to_string(valid.size()) + " labelled frames");
  }
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (!valid[i] || (pad != nullptr && !(*pad)[i])) continue;
    ++acc.frames;
    const auto row = out.row(i);
    switch (task) {
      case Task::Expr:
        acc.pred_class.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
        acc.true_class.push_back(static_cast<int>(labels[i]));
        break;
      case Task::Au:
        for (std::size_t k = 0; k < w; ++k) {
          acc.pred_bits.push_back(row[k] > threshold ? 1 : 0);
          acc.true_bits.push_back(labels[i * w + k] > 0.5f ? 1 : 0);
        }
        break;
      case Task::Va:
        for (std::size_t k = 0; k < w; ++k) {
          acc.pred_values.push_back(row[k]);
          acc.true_values.push_back(labels[i * w + k]);
        }
        break;
    }
  }
}

TaskMetric finish(Task task, const ScoredFrames& acc) {
  TaskMetric m;
  m.frames = acc.frames;
  if (acc.frames == 0) throw RangeError("scoring: no valid frames");
  const auto n = static_cast<Eigen::Index>(acc.frames);
  switch (task) {
    case Task::Expr: {
      const auto cm = confusion(acc.pred_class, acc.true_class, kExprClasses);
      m.per_output = per_class_f1(cm);
      m.value = m.per_output.mean();
      break;
    }
    case Task::Au: {
      using IntRows = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
      const Eigen::MatrixXi p = Eigen::Map<const IntRows>(acc.pred_bits.data(), n, kActionUnits);
      const Eigen::MatrixXi t = Eigen::Map<const IntRows>(acc.true_bits.data(), n, kActionUnits);
      m.per_output = per_label_f1(p, t);
      m.value = m.per_output.mean();
      break;
    }
    case Task::Va: {
      const Eigen::MatrixXd p = Eigen::Map<const RowMatrix<double>>(acc.pred_values.data(), n, kAffectDims);
      const Eigen::MatrixXd t = Eigen::Map<const RowMatrix<double>>(acc.true_values.data(), n, kAffectDims);
      m.per_output = per_dim_ccc(p, t);
      m.value = m.per_output.mean();
      break;
    }
  }
  return m;
}

}  // namespace

TaskMetric score_outputs(Task task, std::span<const Tensor> outputs, std::span<const FrameSequence> videos,
                         double au_threshold) {
  if (outputs.size() != videos.size()) throw DimensionError("score_outputs: outputs and videos differ in count");
  ScoredFrames acc;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    collect(task, outputs[v], videos[v].labels, videos[v].valid, nullptr, au_threshold, acc);
  }
  return finish(task, acc);
}

TaskMetric score_segments(Task task, std::span<const Tensor> outputs, std::span<const Segment> segments,
                          double au_threshold) {
  if (outputs.size() != segments.size()) throw DimensionError("score_segments: outputs and segments differ in count");
  ScoredFrames acc;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    collect(task, outputs[s], segments[s].labels, segments[s].valid, &segments[s].pad_mask, au_threshold, acc);
  }
  return finish(task, acc);
}

// ---------------------------------------------------------------------------
// Training loop

std::string format_epoch_log(std::span<const EpochRecord> log) {
  std::ostringstream os;
  os << "epoch,split,loss,metric\n";
  for (const auto& r : log) os << r.epoch << ',' << r.split << ',' << format_double(r.loss) << ',' << format_double(r.metric) << '\n';
  return os.str();
}

namespace {

struct SplitScore {
  double loss = 0.0;
  double metric = 0.0;
};

SplitScore evaluate_split(const ModelParams<float>& params, const ModelConfig& model, std::span<const Segment> split,
                          const LossSpec& spec, double au_threshold) {
  Predictor predictor(params, model);
  std::vector<Tensor> outputs;
  outputs.reserve(split.size());
  for (const auto& seg : split) outputs.push_back(predictor(seg.features, seg.pad_mask));

  Tape<float> tape;
  std::vector<Var> vars;
  std::vector<const Segment*> segs;
  for (std::size_t i = 0; i < split.size(); ++i) {
    vars.push_back(tape.constant(outputs[i]));
    segs.push_back(&split[i]);
  }
  SplitScore score;
  const Var loss = batch_loss(tape, vars, segs, spec);
  if (loss.id != Var{}.id) score.loss = tape.value(loss)[0];
  score.metric = score_segments(model.task, outputs, split, au_threshold).value;
  return score;
}

void clip_gradients(std::span<const ParamSlot> slots, double max_norm) {
  double sq = 0.0;
  for (const auto& s : slots)
    for (float g : s.tensor->grad()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double f = max_norm / norm;
  for (const auto& s : slots)
    for (float& g : s.tensor->grad()) g = static_cast<float>(g * f);
}

}  // namespace

TrainResult train(ModelParams<float> params, const ModelConfig& model, const TrainConfig& config,
                  std::span<const Segment> train_set, std::span<const Segment> val_set, const TrainOptions& options) {
  model.validate();
  config.validate();
  check_shapes(params, model);
  if (train_set.empty()) throw RangeError("train: training set is empty");
  for (const auto& s : train_set) {
    if (s.task != model.task) throw ConfigError("train: segment task differs from model task");
    if (s.features.cols() != model.feat_dim) {
      throw DimensionError("train: segment " + s.video_id + " has feat_dim " + std::to_string(s.features.cols()) +
                           ", model expects " + std::to_string(model.feat_dim));
    }
  }

  const LossSpec spec = make_loss_spec(model.task, train_set, config.weighted_loss, config.va_loss);
  TrainResult result;
  OptimizerState state;
  std::vector<std::size_t> order(train_set.size());
  std::uint64_t step = 0;
  bool have_best = false;

  auto emit = [&](EpochRecord r) {
    if (options.on_record) options.on_record(r);
    result.log.push_back(std::move(r));
  };

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = Rng::derive(config.seed, {0xe90c, epoch});
    shuffle_rng.shuffle(std::span(order));

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      Tape<float> tape;
      params.zero_grad();
      const ParamVars vars = bind_params(tape, params);
      std::vector<Var> outputs;
      std::vector<const Segment*> segs;
      for (std::size_t j = begin; j < end; ++j) {
        const Segment& seg = train_set[order[j]];
        ForwardContext ctx{true, model.dropout, config.seed, step, j - begin};
        const Var x = tape.constant(seg.features);
        outputs.push_back(forward(tape, vars, params, model, x, seg.pad_mask, ctx));
        segs.push_back(&seg);
      }
      const Var loss = batch_loss(tape, outputs, segs, spec);
      if (loss.id == Var{}.id) continue;
      tape.backward(loss);
      auto slots = param_slots(params);
      if (config.grad_clip > 0.0) clip_gradients(slots, config.grad_clip);
      adam_step(slots, state, config);
      loss_sum += tape.value(loss)[0];
      ++batches;
      ++step;
    }

    const SplitScore train_score = evaluate_split(params, model, train_set, spec, config.au_threshold);
    emit({epoch, "train", batches ? loss_sum / static_cast<double>(batches) : 0.0, train_score.metric});
    double selection = train_score.metric;
    if (!val_set.empty()) {
      const SplitScore val_score = evaluate_split(params, model, val_set, spec, config.au_threshold);
      emit({epoch, "val", val_score.loss, val_score.metric});
      selection = val_score.metric;
    }
    if (!have_best || selection > result.best_metric) {
      have_best = true;
      result.best_metric = selection;
      result.best_epoch = epoch;
      result.best = params;
    }
    if (!options.out_dir.empty()) {
      const std::string csv = format_epoch_log(result.log);
      binary::write_file(options.out_dir / "epochs.csv",
                         std::span(reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()));
    }
  }

  result.params = std::move(params);
  result.params.for_each([](const std::string&, Tensor& t, ParamRole) { t.drop_grad(); });
  result.best.for_each([](const std::string&, Tensor& t, ParamRole) { t.drop_grad(); });
  if (!options.out_dir.empty()) {
    save_checkpoint(options.out_dir / "final.ckpt", result.params, model, config);
    save_checkpoint(options.out_dir / "best.ckpt", result.best, model, config);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr std::uint8_t kCheckpointMagic[4] = {'C', 'K', 'P', '1'};
}

std::vector<std::uint8_t> encode_checkpoint(const ModelParams<float>& params, const ModelConfig& model,
                                            const TrainConfig& train) {
  check_shapes(params, model);
  const std::string text = format_model_train(model, train);
  std::vector<std::uint8_t> out;
  binary::put_bytes(out, kCheckpointMagic);
  binary::put_u32(out, kCheckpointVersion);
  binary::put_u64(out, text.size());
  binary::put_bytes(out, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  std::uint32_t count = 0;
  params.for_each([&](const std::string&, const Tensor&, ParamRole) { ++count; });
  binary::put_u32(out, count);
  params.for_each([&](const std::string& name, const Tensor& t, ParamRole) {
    t.check_finite("checkpoint " + name);
    binary::put_u32(out, static_cast<std::uint32_t>(name.size()));
    binary::put_bytes(out, std::span(reinterpret_cast<const std::uint8_t*>(name.data()), name.size()));
    binary::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) binary::put_u32(out, static_cast<std::uint32_t>(e));
    for (float v : t.data()) binary::put_f32(out, v);
  });
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& what) {
  binary::Reader in(bytes, what);
  const auto magic = in.bytes(4, "magic");
  for (std::size_t i = 0; i < 4; ++i)
    if (magic[i] != kCheckpointMagic[i]) in.fail(i, "bad magic (expected CKP1)");
  if (const auto version = in.u32("version"); version != kCheckpointVersion) {
    in.fail(4, "unsupported version " + std::to_string(version));
  }
  const std::uint64_t text_len = in.u64("config length");
  if (text_len > in.remaining()) in.fail(8, "config length exceeds file size");
  const auto text_bytes = in.bytes(static_cast<std::size_t>(text_len), "config text");
  Checkpoint ck;
  parse_model_train(std::string_view(reinterpret_cast<const char*>(text_bytes.data()), text_bytes.size()), ck.model,
                    ck.train);
  ck.model.validate();

  ModelParams<float> params = allocate_params<float>(ck.model);
  const std::size_t count_at = in.offset();
  const std::uint32_t count = in.u32("tensor count");
  std::uint32_t expected = 0;
  params.for_each([&](const std::string&, const Tensor&, ParamRole) { ++expected; });
  if (count != expected) {
    in.fail(count_at, "checkpoint holds " + std::to_string(count) + " tensors, config implies " + std::to_string(expected));
  }
  params.for_each([&](const std::string& name, Tensor& t, ParamRole) {
    const std::size_t at = in.offset();
    const std::uint32_t len = in.u32("name length");
    const auto raw = in.bytes(len, "name");
    const std::string got(reinterpret_cast<const char*>(raw.data()), raw.size());
    if (got != name) in.fail(at, "tensor '" + got + "' where '" + name + "' was expected");
    const std::uint32_t rank = in.u32("rank");
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(in.u32("extent"));
    if (shape != t.shape()) {
      in.fail(at, "tensor " + name + " has shape " + to_string(shape) + ", config implies " + to_string(t.shape()));
    }
    in.need(4 * t.size(), "payload");
    for (auto& v : t.data()) v = in.f32("payload");
    t.check_finite("checkpoint " + name);
  });
  if (in.remaining() != 0) in.fail(in.offset(), std::to_string(in.remaining()) + " trailing bytes");
  ck.params = std::move(params);
  return ck;
}

void save_checkpoint(const fs::path& path, const ModelParams<float>& params, const ModelConfig& model,
                     const TrainConfig& train) {
  binary::write_file(path, encode_checkpoint(params, model, train));
}

Checkpoint load_checkpoint(const fs::path& path) { return decode_checkpoint(binary::read_file(path), path.string()); }

}  // namespace affect
