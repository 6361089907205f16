#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "affect/model.hpp"
#include "affect/task.hpp"
#include "affect/tensor.hpp"

namespace affect {

/// One video: features [n_frames, feat_dim] and per-frame labels stored
/// row-major as [n_frames, label_width(task)].
struct FrameSequence {
  std::string video_id;
  Task task = Task::Expr;
  Tensor features;
  std::vector<float> labels;
  Mask valid;

  std::size_t n_frames() const noexcept { return valid.size(); }
  std::size_t feat_dim() const noexcept { return features.cols(); }
};

/// Fixed-length window of a FrameSequence. Pad rows carry zero features,
/// invalid labels and pad_mask = 0.
struct Segment {
  std::string video_id;
  std::size_t start = 0;
  Task task = Task::Expr;
  Tensor features;
  std::vector<float> labels;
  Mask valid;
  Mask pad_mask;

  std::size_t length() const noexcept { return pad_mask.size(); }
  std::size_t real_frames() const noexcept;
  std::size_t pad_count() const noexcept { return length() - real_frames(); }
  std::size_t valid_frames() const noexcept;
};

// ---------------------------------------------------------------------------
// FSQ1 feature files
//
//   0..3   magic "FSQ1"
//   4..7   version u32 LE (= 1)
//   8..11  n_frames u32 LE
//   12..15 feat_dim u32 LE
//   16..   n_frames * feat_dim f32 LE, row-major
//
// The filename stem is the video id.

inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 16;

struct FeatureFile {
  std::string video_id;
  Tensor features;
};

std::vector<std::uint8_t> encode_features(const Tensor& features);
Tensor decode_features(std::span<const std::uint8_t> bytes, const std::string& what = "FSQ1");
void write_feature_file(const std::filesystem::path& path, const Tensor& features);
FeatureFile read_feature_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Annotation CSV: header `frame,label` (EXPR), `frame,au1,...,au12` (AU) or
// `frame,valence,arousal` (VA); frame indices dense from 0.

struct Annotations {
  Task task = Task::Expr;
  std::vector<float> labels;
  Mask valid;

  std::size_t n_frames() const noexcept { return valid.size(); }
};

std::string annotation_header(Task task);
Annotations parse_annotations(std::string_view text, Task task, const std::string& what = "annotations");
Annotations read_annotations(const std::filesystem::path& path, Task task);
void write_annotations(const std::filesystem::path& path, Task task, std::span<const float> labels);

/// Per-frame validity: false iff any label component equals the task's invalid sentinel.
Mask label_validity(Task task, std::span<const float> labels);

/// Joins features and labels; a frame-count mismatch is a DimensionError.
FrameSequence make_sequence(FeatureFile features, Annotations annotations);

// ---------------------------------------------------------------------------
// Manifest: one `video_id<TAB>feature_path<TAB>annotation_path` per line.
// Relative paths resolve against the manifest's directory.

struct ManifestEntry {
  std::string video_id;
  std::filesystem::path features;
  std::filesystem::path annotations;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);
std::vector<FrameSequence> load_dataset(const std::filesystem::path& manifest, Task task);

// ---------------------------------------------------------------------------
// Segmentation and merging

/// Non-overlapping windows of `seg_len` frames in order; the tail window is
/// zero-padded. With `drop_unlabeled`, windows without any valid frame are skipped.
std::vector<Segment> segment_sequence(const FrameSequence& seq, std::size_t seg_len, bool drop_unlabeled = true);

std::vector<Segment> segment_dataset(std::span<const FrameSequence> data, std::size_t seg_len,
                                     bool drop_unlabeled = true);

/// Synthetic expression stills (EXPR labels 1..6 only) shuffled by `seed` and
/// packed into pseudo-sequences of `seg_len`, appended after `real`.
std::vector<Segment> merge_synthetic(std::vector<Segment> real, std::span<const FrameSequence> synthetic,
                                     std::size_t seg_len, std::uint64_t seed);

/// Frames per EXPR class over valid real frames.
std::vector<std::size_t> class_histogram(std::span<const Segment> segments, std::size_t n_classes);
std::vector<std::size_t> class_histogram(std::span<const int> labels, std::size_t n_classes);

/// Inverse-frequency weights w_c = N / (C * n_c). Every class needs n_c >= 1.
std::vector<double> compute_class_weights(std::span<const std::size_t> counts);
std::vector<double> compute_class_weights(std::span<const int> labels, std::size_t n_classes);

/// Per-AU positive weights n_neg / n_pos over valid frames; 1 for AUs without positives.
std::vector<double> au_positive_weights(std::span<const Segment> segments);

// ---------------------------------------------------------------------------
// Synthetic fixture: class-conditional Gaussian features with piecewise
// constant label runs, fully determined by the seed.

struct FixtureSpec {
  std::size_t n_videos = 40;
  std::size_t min_frames = 64;
  std::size_t max_frames = 256;
  std::size_t feat_dim = 32;
  std::size_t n_classes = 8;
  std::uint64_t seed = 0;
  Task task = Task::Expr;
  double noise_std = 0.31622776601683794;  // sqrt(0.1)
  double mean_scale = 2.0;
  std::size_t min_run = 8;
  std::size_t max_run = 48;
  /// Relative class frequencies; empty means uniform.
  std::vector<double> class_prior;
  /// Index of the first generated video; distinct offsets give disjoint splits
  /// that share class means.
  std::size_t first_video = 0;
};

/// Unit random directions scaled by `spec.mean_scale`, [n_classes, feat_dim].
Tensor fixture_class_means(const FixtureSpec& spec);

std::vector<FrameSequence> make_synthetic_fixture(const FixtureSpec& spec);
std::vector<FrameSequence> make_synthetic_fixture(std::size_t n_videos, std::size_t min_frames,
                                                  std::size_t max_frames, std::size_t feat_dim,
                                                  std::size_t n_classes, std::uint64_t seed);

/// Single expression stills drawn from the fixture's classes 1..6.
FrameSequence make_synthetic_stills(const FixtureSpec& spec, std::size_t n_images, const std::string& id);

struct FixtureLayout {
  std::filesystem::path train_manifest;
  std::filesystem::path val_manifest;
  std::filesystem::path synthetic_manifest;  // empty unless task is EXPR
};

/// Writes FSQ1 files, annotation CSVs and manifests for a train split
/// (`spec`), a held-out split of `n_val` videos and, for EXPR, a set of synthetic stills.
FixtureLayout write_fixture(const std::filesystem::path& dir, const FixtureSpec& spec, std::size_t n_val,
                            std::size_t n_synthetic);

void write_sequence(const std::filesystem::path& dir, const FrameSequence& seq, ManifestEntry* entry = nullptr);

}  // namespace affect
