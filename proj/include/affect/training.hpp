#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "affect/config.hpp"
#include "affect/data.hpp"
#include "affect/model.hpp"

namespace affect {

// ---------------------------------------------------------------------------
// Optimizer

/// One parameter tensor as seen by the optimizer.
struct ParamSlot {
  Tensor* tensor;
  bool decay;
};

struct OptimizerState {
  std::vector<BasicTensor<double>> m;
  std::vector<BasicTensor<double>> v;
  std::uint64_t t = 0;
};

/// Decoupled weight decay (p -= lr * wd * p, only on slots with decay set)
/// followed by bias-corrected Adam on each slot's gradient buffer.
/// Every gradient is checked before any parameter moves; a non-finite entry
/// throws NumericError and leaves params and state untouched.
void adam_step(std::span<const ParamSlot> params, OptimizerState& state, const TrainConfig& config);

/// Slots for every trainable tensor; biases and layer-norm parameters do not decay.
std::vector<ParamSlot> param_slots(ModelParams<float>& params);

// ---------------------------------------------------------------------------
// Losses over batches of segments

struct LossSpec {
  Task task = Task::Expr;
  std::vector<double> class_weights;  // EXPR; empty = unweighted
  std::vector<double> pos_weights;    // AU; empty = all ones
  VaLoss va_loss = VaLoss::Ccc;
};

/// Builds the loss spec for a training set: inverse-frequency class weights
/// (EXPR) or n_neg/n_pos positive weights (AU) when `weighted` is set.
LossSpec make_loss_spec(Task task, std::span<const Segment> train, bool weighted, VaLoss va_loss);

/// Task loss over the valid real frames of `outputs` ([L, n_outputs] per segment).
/// Returns an invalid Var (id == npos) when the batch has too few scored frames.
template <typename Scalar>
Var batch_loss(Tape<Scalar>& tape, std::span<const Var> outputs, std::span<const Segment* const> segments,
               const LossSpec& spec);

// ---------------------------------------------------------------------------
// Prediction and evaluation

/// Per-frame outputs for a whole video, [n_frames, n_outputs]. Every frame
/// (labelled or not) receives an output.
Tensor predict_sequence(Predictor& predictor, const FrameSequence& seq, std::size_t seg_len);

/// Scored frames pulled from per-video outputs. EXPR: argmax vs label;
/// AU: output > threshold vs label; VA: raw values.
struct TaskMetric {
  double value = 0.0;
  Eigen::VectorXd per_output;  // per-class F1, per-AU F1 or per-dimension CCC
  std::size_t frames = 0;
};

/// Scores stacked per-frame outputs against labels over valid frames only.
TaskMetric score_outputs(Task task, std::span<const Tensor> outputs, std::span<const FrameSequence> videos,
                         double au_threshold = 0.0);

TaskMetric score_segments(Task task, std::span<const Tensor> outputs, std::span<const Segment> segments,
                          double au_threshold = 0.0);

// ---------------------------------------------------------------------------
// Training loop

struct EpochRecord {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0.0;
  double metric = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

std::string format_epoch_log(std::span<const EpochRecord> log);

struct TrainResult {
  ModelParams<float> params;
  ModelParams<float> best;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
  std::vector<EpochRecord> log;
};

struct TrainOptions {
  /// When set, epochs.csv, final.ckpt and best.ckpt are written here.
  std::filesystem::path out_dir;
  std::function<void(const EpochRecord&)> on_record;
};

/// Shuffled mini-batches of segments for `train.epochs` epochs. Each epoch logs
/// a "train" row (mean batch loss, metric in eval mode) and, when `val` is
/// non-empty, a "val" row. The best checkpoint maximises the val metric (train
/// metric without a val split); ties keep the earlier epoch.
TrainResult train(ModelParams<float> params, const ModelConfig& model, const TrainConfig& config,
                  std::span<const Segment> train_set, std::span<const Segment> val_set,
                  const TrainOptions& options = {});

// ---------------------------------------------------------------------------
// Checkpoints
//
//   0..3   magic "CKP1"
//   4..7   version u32 LE (= 1)
//   8..15  config text length u64 LE
//   text   `key = value` lines (model + training keys)
//   u32    tensor count
//   per tensor: u32 name length, name, u32 rank, rank x u32 extents, f32 LE payload

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  ModelParams<float> params;
};

std::vector<std::uint8_t> encode_checkpoint(const ModelParams<float>& params, const ModelConfig& model,
                                            const TrainConfig& train);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& what = "checkpoint");
void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params, const ModelConfig& model,
                     const TrainConfig& train);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace affect
