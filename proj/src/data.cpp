#include "affect/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "affect/binary.hpp"
#include "affect/rng.hpp"

namespace affect {

namespace fs = std::filesystem;

std::size_t Segment::real_frames() const noexcept {
  return static_cast<std::size_t>(std::count_if(pad_mask.begin(), pad_mask.end(), [](auto v) { return v != 0; }));
}

std::size_t Segment::valid_frames() const noexcept {
  return static_cast<std::size_t>(std::count_if(valid.begin(), valid.end(), [](auto v) { return v != 0; }));
}

// ---------------------------------------------------------------------------
// FSQ1

namespace {
constexpr binary::MatrixFormat kFeatureFormat{"FSQ1", kFeatureVersion, "n_frames", "feat_dim"};
}

std::vector<std::uint8_t> encode_features(const Tensor& features) {
  if (features.rank() != 2) throw DimensionError("FSQ1 payload must be rank 2, got " + to_string(features.shape()));
  features.check_finite("FSQ1 encode");
  return binary::encode_matrix(kFeatureFormat, features.rows(), features.cols(), features.data());
}

Tensor decode_features(std::span<const std::uint8_t> bytes, const std::string& what) {
  std::size_t frames = 0, dim = 0;
  auto data = binary::decode_matrix(bytes, kFeatureFormat, what, frames, dim);
  return Tensor(Shape{frames, dim}, std::move(data));
}

void write_feature_file(const fs::path& path, const Tensor& features) {
  binary::write_file(path, encode_features(features));
}

FeatureFile read_feature_file(const fs::path& path) {
  const auto bytes = binary::read_file(path);
  return {path.stem().string(), decode_features(bytes, path.string())};
}

// ---------------------------------------------------------------------------
// Annotations

std::string annotation_header(Task task) {
  switch (task) {
    case Task::Expr: return "frame,label";
    case Task::Au: {
      std::string h = "frame";
      for (std::size_t i = 1; i <= kActionUnits; ++i) h += ",au" + std::to_string(i);
      return h;
    }
    case Task::Va: return "frame,valence,arousal";
  }
  return {};
}

Mask label_validity(Task task, std::span<const float> labels) {
  const std::size_t w = label_width(task);
  const float sentinel = invalid_label(task);
  Mask valid(labels.size() / w, 1);
  for (std::size_t i = 0; i < valid.size(); ++i)
    for (std::size_t k = 0; k < w; ++k)
      if (labels[i * w + k] == sentinel) valid[i] = 0;
  return valid;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = s.find(sep, pos);
    out.push_back(trim(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, out);
  return res.ec == std::errc() && res.ptr == end;
}

}  // namespace

Annotations parse_annotations(std::string_view text, Task task, const std::string& what) {
  Annotations out;
  out.task = task;
  const std::size_t w = label_width(task);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  auto fail = [&](const std::string& msg) -> void {
    throw FormatError(what + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line = trim(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != annotation_header(task)) {
        fail("header '" + std::string(line) + "' does not match '" + annotation_header(task) + "'");
      }
      header_seen = true;
      continue;
    }
    const auto cells = split(line, ',');
    if (cells.size() != w + 1) {
      fail("expected " + std::to_string(w + 1) + " columns, got " + std::to_string(cells.size()));
    }
    std::size_t frame = 0;
    if (!parse_number(cells[0], frame)) fail("bad frame index '" + std::string(cells[0]) + "'");
    if (frame != out.valid.size()) {
      fail("frame index " + std::to_string(frame) + " breaks the dense sequence (expected " +
           std::to_string(out.valid.size()) + ")");
    }
    for (std::size_t k = 0; k < w; ++k) {
      const std::string_view cell = cells[k + 1];
      float v = 0.0f;
      if (task == Task::Va) {
        if (!parse_number(cell, v)) fail("bad value '" + std::string(cell) + "'");
        if (v != kVaInvalid && !(v >= -1.0f && v <= 1.0f)) {
          throw RangeError(what + ":" + std::to_string(line_no) + ": valence/arousal " + std::string(cell) +
                           " outside [-1, 1]");
        }
      } else {
        int label = 0;
        if (!parse_number(cell, label)) fail("bad label '" + std::string(cell) + "'");
        const int hi = task == Task::Expr ? static_cast<int>(kExprClasses) - 1 : 1;
        if (label < -1 || label > hi) {
          throw RangeError(what + ":" + std::to_string(line_no) + ": label " + std::to_string(label) +
                           " outside [-1, " + std::to_string(hi) + "]");
        }
        v = static_cast<float>(label);
      }
      out.labels.push_back(v);
    }
    out.valid.push_back(1);
  }
  if (!header_seen) fail("missing header");
  if (out.valid.empty()) fail("no frames");
  out.valid = label_validity(task, out.labels);
  return out;
}

Annotations read_annotations(const fs::path& path, Task task) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_annotations(ss.str(), task, path.string());
}

void write_annotations(const fs::path& path, Task task, std::span<const float> labels) {
  const std::size_t w = label_width(task);
  std::ostringstream os;
  os << annotation_header(task) << '\n';
  char buf[32];
  for (std::size_t i = 0; i < labels.size() / w; ++i) {
    os << i;
    for (std::size_t k = 0; k < w; ++k) {
      const float v = labels[i * w + k];
      if (task == Task::Va) {
        const auto res = std::to_chars(buf, buf + sizeof buf, v);
        os << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
      } else {
        os << ',' << static_cast<int>(v);
      }
    }
    os << '\n';
  }
  const std::string text = os.str();
  binary::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

FrameSequence make_sequence(FeatureFile features, Annotations annotations) {
  if (features.features.rows() != annotations.n_frames()) {
    throw DimensionError("video " + features.video_id + ": feature file has " +
                         std::to_string(features.features.rows()) + " frames but annotations have " +
                         std::to_string(annotations.n_frames()));
  }
  FrameSequence seq;
  seq.video_id = std::move(features.video_id);
  seq.task = annotations.task;
  seq.features = std::move(features.features);
  seq.labels = std::move(annotations.labels);
  seq.valid = std::move(annotations.valid);
  return seq;
}

// ---------------------------------------------------------------------------
// Manifest

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto cells = split(view, '\t');
    if (cells.size() != 3 || cells[0].empty()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": expected video_id<TAB>feature_path<TAB>annotation_path");
    }
    auto resolve = [&](std::string_view p) {
      fs::path q(p);
      return q.is_absolute() ? q : base / q;
    };
    entries.push_back({std::string(cells[0]), resolve(cells[1]), resolve(cells[2])});
  }
  return entries;
}

void write_manifest(const fs::path& path, std::span<const ManifestEntry> entries) {
  std::ostringstream os;
  const fs::path base = path.parent_path();
  for (const auto& e : entries) {
    os << e.video_id << '\t' << e.features.lexically_relative(base).generic_string() << '\t'
       << e.annotations.lexically_relative(base).generic_string() << '\n';
  }
  const std::string text = os.str();
  binary::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<FrameSequence> load_dataset(const fs::path& manifest, Task task) {
  std::vector<FrameSequence> out;
  for (const auto& e : read_manifest(manifest)) {
    auto features = read_feature_file(e.features);
    features.video_id = e.video_id;
    out.push_back(make_sequence(std::move(features), read_annotations(e.annotations, task)));
  }
  if (out.empty()) throw FormatError("manifest " + manifest.string() + " lists no videos");
  return out;
}

// ---------------------------------------------------------------------------
// Segmentation

std::vector<Segment> segment_sequence(const FrameSequence& seq, std::size_t seg_len, bool drop_unlabeled) {
  if (seg_len == 0) throw RangeError("segment_sequence: seg_len must be positive");
  const std::size_t n = seq.n_frames();
  const std::size_t dim = seq.feat_dim();
  const std::size_t w = label_width(seq.task);
  const float sentinel = invalid_label(seq.task);
  std::vector<Segment> out;
  for (std::size_t start = 0; start < n; start += seg_len) {
    const std::size_t real = std::min(seg_len, n - start);
    Segment s;
    s.video_id = seq.video_id;
    s.start = start;
    s.task = seq.task;
    s.features = Tensor(Shape{seg_len, dim});
    std::copy_n(seq.features.data().begin() + static_cast<std::ptrdiff_t>(start * dim), real * dim,
                s.features.data().begin());
    s.labels.assign(seg_len * w, sentinel);
    std::copy_n(seq.labels.begin() + static_cast<std::ptrdiff_t>(start * w), real * w, s.labels.begin());
    s.valid.assign(seg_len, 0);
    std::copy_n(seq.valid.begin() + static_cast<std::ptrdiff_t>(start), real, s.valid.begin());
    s.pad_mask.assign(seg_len, 0);
    std::fill_n(s.pad_mask.begin(), real, 1);
    if (drop_unlabeled && s.valid_frames() == 0) continue;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Segment> segment_dataset(std::span<const FrameSequence> data, std::size_t seg_len, bool drop_unlabeled) {
  std::vector<Segment> out;
  for (const auto& seq : data) {
    auto segs = segment_sequence(seq, seg_len, drop_unlabeled);
    std::move(segs.begin(), segs.end(), std::back_inserter(out));
  }
  return out;
}

std::vector<Segment> merge_synthetic(std::vector<Segment> real, std::span<const FrameSequence> synthetic,
                                     std::size_t seg_len, std::uint64_t seed) {
  if (seg_len == 0) throw RangeError("merge_synthetic: seg_len must be positive");
  struct Item {
    const FrameSequence* source;
    std::size_t row;
  };
  std::vector<Item> items;
  std::size_t dim = 0;
  for (const auto& seq : synthetic) {
    if (seq.task != Task::Expr) throw RangeError("merge_synthetic: synthetic set must carry expression labels");
    if (dim == 0) dim = seq.feat_dim();
    if (seq.feat_dim() != dim) throw DimensionError("merge_synthetic: synthetic feature widths differ");
    for (std::size_t i = 0; i < seq.n_frames(); ++i) {
      const float label = seq.labels[i];
      if (!(label >= 1.0f && label <= 6.0f)) {
        throw RangeError("merge_synthetic: synthetic item " + seq.video_id + "#" + std::to_string(i) +
                         " has label " + std::to_string(static_cast<int>(label)) +
                         "; only the six basic expressions (1..6) are allowed");
      }
      items.push_back({&seq, i});
    }
  }
  if (items.empty()) return real;
  if (!real.empty() && real.front().features.cols() != dim) {
    throw DimensionError("merge_synthetic: synthetic feat_dim " + std::to_string(dim) +
                         " differs from real feat_dim " + std::to_string(real.front().features.cols()));
  }
  Rng rng = Rng::derive(seed, {0x5e9});
  rng.shuffle(std::span(items));
  for (std::size_t start = 0, k = 0; start < items.size(); start += seg_len, ++k) {
    const std::size_t count = std::min(seg_len, items.size() - start);
    Segment s;
    s.video_id = "synthetic/" + std::to_string(k);
    s.start = start;
    s.task = Task::Expr;
    s.features = Tensor(Shape{seg_len, dim});
    s.labels.assign(seg_len, kExprInvalid);
    s.valid.assign(seg_len, 0);
    s.pad_mask.assign(seg_len, 0);
    for (std::size_t j = 0; j < count; ++j) {
      const Item& it = items[start + j];
      const auto row = it.source->features.row(it.row);
      std::copy(row.begin(), row.end(), s.features.row(j).begin());
      s.labels[j] = it.source->labels[it.row];
      s.valid[j] = 1;
      s.pad_mask[j] = 1;
    }
    real.push_back(std::move(s));
  }
  return real;
}

std::vector<std::size_t> class_histogram(std::span<const Segment> segments, std::size_t n_classes) {
  std::vector<std::size_t> counts(n_classes, 0);
  for (const auto& s : segments) {
    if (s.task != Task::Expr) throw RangeError("class_histogram: expression segments required");
    for (std::size_t i = 0; i < s.length(); ++i) {
      if (!s.valid[i] || !s.pad_mask[i]) continue;
      const auto c = static_cast<std::size_t>(s.labels[i]);
      if (c >= n_classes) throw RangeError("class_histogram: label " + std::to_string(c) + " out of range");
      ++counts[c];
    }
  }
  return counts;
}

std::vector<std::size_t> class_histogram(std::span<const int> labels, std::size_t n_classes) {
  std::vector<std::size_t> counts(n_classes, 0);
  for (int c : labels) {
    if (c < 0 || static_cast<std::size_t>(c) >= n_classes) {
      throw RangeError("class_histogram: label " + std::to_string(c) + " out of range");
    }
    ++counts[static_cast<std::size_t>(c)];
  }
  return counts;
}

std::vector<double> compute_class_weights(std::span<const std::size_t> counts) {
  if (counts.empty()) throw ConfigError("compute_class_weights: no classes");
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  const double c = static_cast<double>(counts.size());
  std::vector<double> w(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) {
      throw ConfigError("class " + std::to_string(k) +
                        " has no training frames; merge the synthetic set or drop the class before weighting");
    }
    w[k] = total / (c * static_cast<double>(counts[k]));
  }
  return w;
}

std::vector<double> compute_class_weights(std::span<const int> labels, std::size_t n_classes) {
  const auto counts = class_histogram(labels, n_classes);
  return compute_class_weights(counts);
}

std::vector<double> au_positive_weights(std::span<const Segment> segments) {
  std::vector<double> pos(kActionUnits, 0.0), neg(kActionUnits, 0.0);
  for (const auto& s : segments) {
    if (s.task != Task::Au) throw RangeError("au_positive_weights: AU segments required");
    for (std::size_t i = 0; i < s.length(); ++i) {
      if (!s.valid[i] || !s.pad_mask[i]) continue;
      for (std::size_t k = 0; k < kActionUnits; ++k) (s.labels[i * kActionUnits + k] > 0.5f ? pos : neg)[k] += 1.0;
    }
  }
  std::vector<double> w(kActionUnits, 1.0);
  for (std::size_t k = 0; k < kActionUnits; ++k)
    if (pos[k] > 0.0 && neg[k] > 0.0) w[k] = neg[k] / pos[k];
  return w;
}

// ---------------------------------------------------------------------------
// Fixture

Tensor fixture_class_means(const FixtureSpec& spec) {
  Tensor means(Shape{spec.n_classes, spec.feat_dim});
  Rng rng = Rng::derive(spec.seed, {0x3ea5});
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    std::vector<double> v(spec.feat_dim);
    double norm = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (std::size_t k = 0; k < spec.feat_dim; ++k) means(c, k) = static_cast<float>(spec.mean_scale * v[k] / norm);
  }
  return means;
}

namespace {

std::size_t draw_class(Rng& rng, std::span<const double> cumulative) {
  const double u = rng.uniform() * cumulative.back();
  return static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
}

// Task-specific label vector for latent class c.
void emit_label(const FixtureSpec& spec, std::size_t c, Rng& rng, std::vector<float>& out) {
  switch (spec.task) {
    case Task::Expr:
      out.push_back(static_cast<float>(c));
      break;
    case Task::Au: {
      // Fixed AU pattern per class: AU k active with probability 0.3.
      for (std::size_t k = 0; k < kActionUnits; ++k) {
        Rng pattern = Rng::derive(spec.seed, {0xa0, c, k});
        out.push_back(pattern.uniform() < 0.3 ? 1.0f : 0.0f);
      }
      break;
    }
    case Task::Va: {
      const double angle = 2.0 * 3.141592653589793 * static_cast<double>(c) / static_cast<double>(spec.n_classes);
      const double v = std::clamp(0.7 * std::cos(angle) + 0.05 * rng.normal(), -1.0, 1.0);
      const double a = std::clamp(0.7 * std::sin(angle) + 0.05 * rng.normal(), -1.0, 1.0);
      out.push_back(static_cast<float>(v));
      out.push_back(static_cast<float>(a));
      break;
    }
  }
}

}  // namespace

std::vector<FrameSequence> make_synthetic_fixture(const FixtureSpec& spec) {
  if (spec.n_classes < 2) throw ConfigError("fixture needs at least 2 classes");
  if (spec.task == Task::Expr && spec.n_classes > kExprClasses) throw ConfigError("fixture: too many EXPR classes");
  if (spec.min_frames == 0 || spec.min_frames > spec.max_frames) throw ConfigError("fixture: bad frame range");
  if (spec.min_run == 0 || spec.min_run > spec.max_run) throw ConfigError("fixture: bad run range");
  const Tensor means = fixture_class_means(spec);
  std::vector<double> cumulative(spec.n_classes);
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    const double p = spec.class_prior.empty() ? 1.0 : spec.class_prior.at(c);
    cumulative[c] = (c ? cumulative[c - 1] : 0.0) + p;
  }
  std::vector<FrameSequence> out;
  for (std::size_t v = 0; v < spec.n_videos; ++v) {
    const std::size_t index = spec.first_video + v;
    Rng rng = Rng::derive(spec.seed, {0x71de, index});
    const std::size_t n = spec.min_frames + rng.below(spec.max_frames - spec.min_frames + 1);
    FrameSequence seq;
    char id[32];
    std::snprintf(id, sizeof id, "video%04zu", index);
    seq.video_id = id;
    seq.task = spec.task;
    seq.features = Tensor(Shape{n, spec.feat_dim});
    std::size_t frame = 0;
    while (frame < n) {
      const std::size_t c = draw_class(rng, cumulative);
      const std::size_t run = spec.min_run + rng.below(spec.max_run - spec.min_run + 1);
      for (std::size_t j = 0; j < run && frame < n; ++j, ++frame) {
        for (std::size_t k = 0; k < spec.feat_dim; ++k) {
          seq.features(frame, k) = static_cast<float>(means(c, k) + spec.noise_std * rng.normal());
        }
        emit_label(spec, c, rng, seq.labels);
      }
    }
    seq.valid = label_validity(spec.task, seq.labels);
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<FrameSequence> make_synthetic_fixture(std::size_t n_videos, std::size_t min_frames, std::size_t max_frames,
                                                  std::size_t feat_dim, std::size_t n_classes, std::uint64_t seed) {
  FixtureSpec spec;
  spec.n_videos = n_videos;
  spec.min_frames = min_frames;
  spec.max_frames = max_frames;
  spec.feat_dim = feat_dim;
  spec.n_classes = n_classes;
  spec.seed = seed;
  return make_synthetic_fixture(spec);
}

FrameSequence make_synthetic_stills(const FixtureSpec& spec, std::size_t n_images, const std::string& id) {
  if (spec.n_classes < 7) throw ConfigError("synthetic stills need the six basic expression classes");
  const Tensor means = fixture_class_means(spec);
  Rng rng = Rng::derive(spec.seed, {0x5711, n_images});
  FrameSequence seq;
  seq.video_id = id;
  seq.task = Task::Expr;
  seq.features = Tensor(Shape{n_images, spec.feat_dim});
  for (std::size_t i = 0; i < n_images; ++i) {
    const std::size_t c = 1 + rng.below(6);
    for (std::size_t k = 0; k < spec.feat_dim; ++k) {
      seq.features(i, k) = static_cast<float>(means(c, k) + spec.noise_std * rng.normal());
    }
    seq.labels.push_back(static_cast<float>(c));
  }
  seq.valid = label_validity(Task::Expr, seq.labels);
  return seq;
}

void write_sequence(const fs::path& dir, const FrameSequence& seq, ManifestEntry* entry) {
  const fs::path features = dir / "features" / (seq.video_id + ".fsq");
  const fs::path annotations = dir / "annotations" / std::string(task_name(seq.task)) / (seq.video_id + ".csv");
  write_feature_file(features, seq.features);
  write_annotations(annotations, seq.task, seq.labels);
  if (entry != nullptr) *entry = {seq.video_id, features, annotations};
}

FixtureLayout write_fixture(const fs::path& dir, const FixtureSpec& spec, std::size_t n_val, std::size_t n_synthetic) {
  FixtureLayout layout;
  auto write_split = [&](const std::vector<FrameSequence>& videos, const fs::path& manifest) {
    std::vector<ManifestEntry> entries(videos.size());
    for (std::size_t i = 0; i < videos.size(); ++i) write_sequence(dir, videos[i], &entries[i]);
    write_manifest(manifest, entries);
  };
  const std::string task(task_name(spec.task));
  layout.train_manifest = dir / ("train_" + task + ".tsv");
  write_split(make_synthetic_fixture(spec), layout.train_manifest);

  FixtureSpec val = spec;
  val.n_videos = n_val;
  val.first_video = spec.first_video + spec.n_videos;
  layout.val_manifest = dir / ("val_" + task + ".tsv");
  write_split(make_synthetic_fixture(val), layout.val_manifest);

  if (spec.task == Task::Expr && n_synthetic > 0) {
    layout.synthetic_manifest = dir / "synthetic_expr.tsv";
    write_split({make_synthetic_stills(spec, n_synthetic, "synthetic0000")}, layout.synthetic_manifest);
  }
  return layout;
}

}  // namespace affect
