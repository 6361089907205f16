#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "affect/model.hpp"

namespace affect {

enum class VaLoss { Ccc, Mse };

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;  // segments per step
  double lr = 0.001;
  double weight_decay = 1.0 / 64.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  bool weighted_loss = true;
  VaLoss va_loss = VaLoss::Ccc;
  double grad_clip = 0.0;  // global-norm clip; 0 disables
  double au_threshold = 0.0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Everything a CLI run needs. Serialised as flat `key = value` lines with
/// `#` comments; unknown keys are rejected.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  bool seed_set = false;
  bool use_synthetic = false;
  std::string manifest;
  std::string val_manifest;
  std::string synthetic_manifest;
  std::string out;

  /// Sets one key from its textual value; throws ConfigError for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  /// Applies a whole config text. Later lines win.
  void parse(std::string_view text, const std::string& what = "config");
  /// All keys in a fixed order; parse(format()) reproduces *this.
  std::string format() const;

  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Keys accepted by RunConfig, in format() order.
const std::vector<std::string>& config_keys();

/// Model + training keys only (no paths); used inside checkpoints.
std::string format_model_train(const ModelConfig& model, const TrainConfig& train);
void parse_model_train(std::string_view text, ModelConfig& model, TrainConfig& train);

RunConfig load_run_config(const std::filesystem::path& path);

std::string format_double(double v);

}  // namespace affect
