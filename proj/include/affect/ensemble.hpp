#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "affect/data.hpp"
#include "affect/training.hpp"

namespace affect {

/// Per-frame outputs of one model on one video: raw logits for EXPR and AU,
/// tanh-bounded values for VA.
struct LogitSet {
  std::string model_id;
  std::string video_id;
  Tensor values;  // [n_frames, n_outputs]
};

// ---------------------------------------------------------------------------
// LGT1 files: same layout as FSQ1 with magic "LGT1" and n_outputs in place of
// feat_dim. Named `<video_id>.<model_id>.lgt`; the model id holds no dots.

inline constexpr std::uint32_t kLogitVersion = 1;

std::vector<std::uint8_t> encode_logits(const Tensor& values);
Tensor decode_logits(std::span<const std::uint8_t> bytes, const std::string& what = "LGT1");
std::filesystem::path logit_filename(const std::string& video_id, const std::string& model_id);
std::filesystem::path write_logit_file(const std::filesystem::path& dir, const LogitSet& set);
LogitSet read_logit_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Soft average voting

/// Uniform when `weights` is empty; otherwise every weight must be positive and
/// the result is rescaled to mean 1.
std::vector<double> normalize_weights(std::span<const double> weights, std::size_t n_members);

/// Per-frame weighted mean of the members' values, accumulated in double.
/// Members must agree on video id and shape; errors name the first offender.
LogitSet soft_average(std::span<const LogitSet> members, std::span<const double> weights = {});

/// Argmax per frame; ties go to the lowest class index.
std::vector<int> expr_decisions(const Tensor& logits);
/// 1 where the logit exceeds `threshold`.
Eigen::MatrixXi au_decisions(const Tensor& logits, double threshold = 0.0);
/// Majority vote of member argmaxes (ties to the lowest class), for comparison with soft averaging.
std::vector<int> majority_vote(std::span<const LogitSet> members);

// ---------------------------------------------------------------------------
// Subset reports

/// One model's outputs for every video of a dataset.
struct MemberLogits {
  std::string model_id;
  std::map<std::string, Tensor> videos;
};

/// Reads every `*.lgt` file in `dir`; all files must carry the same model id.
MemberLogits read_member_dir(const std::filesystem::path& dir);

/// Non-empty subsets of {0..n-1} ordered by size, then lexicographically.
std::vector<std::vector<std::size_t>> all_subsets(std::size_t n);

/// "(1)" for singletons, "Soft average voting (1) (2)" for pairs and
/// "Soft average voting (1), (2) and (3)" for larger subsets (1-based).
std::string subset_label(std::span<const std::size_t> members);

struct SubsetRow {
  std::string label;
  std::vector<std::size_t> members;
  TaskMetric metric;
};

/// Scores each requested subset (every non-empty subset when `subsets` is
/// empty). Each member must cover exactly the dataset's videos with matching
/// frame counts and the task's output width.
std::vector<SubsetRow> ensemble_eval(std::span<const MemberLogits> members, std::span<const FrameSequence> videos,
                                     Task task, std::span<const double> weights = {}, double au_threshold = 0.0,
                                     std::span<const std::vector<std::size_t>> subsets = {});

std::string format_report_text(std::span<const SubsetRow> rows, std::span<const MemberLogits> members, Task task);
std::string format_report_csv(std::span<const SubsetRow> rows, Task task);

}  // namespace affect
