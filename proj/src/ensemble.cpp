#include "affect/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "affect/binary.hpp"

namespace affect {

namespace fs = std::filesystem;

namespace {

constexpr binary::MatrixFormat kLogitFormat{"LGT1", kLogitVersion, "n_frames", "n_outputs"};

std::string member_name(std::size_t index, const std::string& id) {
  return "member (" + std::to_string(index + 1) + ") '" + id + "'";
}

std::string_view metric_name(Task task) {
  switch (task) {
    case Task::Expr: return "macro_f1";
    case Task::Au: return "au_f1";
    case Task::Va: return "va_ccc";
  }
  return "metric";
}

std::string output_name(Task task, std::size_t k) {
  switch (task) {
    case Task::Expr: return "class" + std::to_string(k);
    case Task::Au: return "au" + std::to_string(k + 1);
    case Task::Va: return k == 0 ? "valence" : "arousal";
  }
  return std::to_string(k);
}

}  // namespace

// ---------------------------------------------------------------------------
// LGT1

std::vector<std::uint8_t> encode_logits(const Tensor& values) {
  if (values.rank() != 2) throw DimensionError("LGT1 payload must be rank 2, got " + to_string(values.shape()));
  values.check_finite("LGT1 encode");
  return binary::encode_matrix(kLogitFormat, values.rows(), values.cols(), values.data());
}

Tensor decode_logits(std::span<const std::uint8_t> bytes, const std::string& what) {
  std::size_t frames = 0, outputs = 0;
  auto data = binary::decode_matrix(bytes, kLogitFormat, what, frames, outputs);
  return Tensor(Shape{frames, outputs}, std::move(data));
}

fs::path logit_filename(const std::string& video_id, const std::string& model_id) {
  if (model_id.empty() || model_id.find_first_of("./\\") != std::string::npos) {
    throw ConfigError("model id '" + model_id + "' must be non-empty and free of dots and slashes");
  }
  return video_id + "." + model_id + ".lgt";
}

fs::path write_logit_file(const fs::path& dir, const LogitSet& set) {
  const fs::path path = dir / logit_filename(set.video_id, set.model_id);
  binary::write_file(path, encode_logits(set.values));
  return path;
}

LogitSet read_logit_file(const fs::path& path) {
  if (path.extension() != ".lgt") throw FormatError(path.string() + ": expected a .lgt file");
  const std::string stem = path.stem().string();
  const auto dot = stem.rfind('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == stem.size()) {
    throw FormatError(path.string() + ": file name must be <video_id>.<model_id>.lgt");
  }
  const auto bytes = binary::read_file(path);
  return {stem.substr(dot + 1), stem.substr(0, dot), decode_logits(bytes, path.string())};
}

// ---------------------------------------------------------------------------
// Soft average voting

std::vector<double> normalize_weights(std::span<const double> weights, std::size_t n_members) {
  if (n_members == 0) throw ConfigError("ensemble needs at least one member");
  if (weights.empty()) return std::vector<double>(n_members, 1.0);
  if (weights.size() != n_members) {
    throw ConfigError("ensemble has " + std::to_string(n_members) + " members but " + std::to_string(weights.size()) +
                      " weights");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
      throw ConfigError("weight of member (" + std::to_string(i + 1) + ") must be positive, got " +
                        std::to_string(weights[i]));
    }
    sum += weights[i];
  }
  std::vector<double> out(weights.begin(), weights.end());
  for (double& w : out) w *= static_cast<double>(n_members) / sum;
  return out;
}

LogitSet soft_average(std::span<const LogitSet> members, std::span<const double> weights) {
  const auto w = normalize_weights(weights, members.size());
  const LogitSet& first = members.front();
  for (std::size_t m = 0; m < members.size(); ++m) {
    const LogitSet& x = members[m];
    if (x.video_id != first.video_id) {
      throw DimensionError(member_name(m, x.model_id) + " is for video '" + x.video_id + "', expected '" +
                           first.video_id + "'");
    }
    if (x.values.shape() != first.values.shape()) {
      throw DimensionError(member_name(m, x.model_id) + " has shape " + to_string(x.values.shape()) +
                           ", expected " + to_string(first.values.shape()));
    }
    x.values.check_finite(member_name(m, x.model_id));
  }
  const double total = static_cast<double>(members.size());
  LogitSet out{members.size() == 1 ? first.model_id : "ensemble", first.video_id, Tensor(first.values.shape())};
  for (std::size_t k = 0; k < out.values.size(); ++k) {
    double acc = 0.0;
    for (std::size_t m = 0; m < members.size(); ++m) acc += w[m] * members[m].values[k];
    out.values[k] = static_cast<float>(acc / total);
  }
  return out;
}

std::vector<int> expr_decisions(const Tensor& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto row = logits.row(i);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

Eigen::MatrixXi au_decisions(const Tensor& logits, double threshold) {
  Eigen::MatrixXi out(static_cast<Eigen::Index>(logits.rows()), static_cast<Eigen::Index>(logits.cols()));
  for (std::size_t i = 0; i < logits.rows(); ++i)
    for (std::size_t k = 0; k < logits.cols(); ++k)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = logits(i, k) > threshold ? 1 : 0;
  return out;
}

std::vector<int> majority_vote(std::span<const LogitSet> members) {
  if (members.empty()) throw ConfigError("ensemble needs at least one member");
  const std::size_t classes = members.front().values.cols();
  std::vector<std::vector<int>> votes;
  for (const auto& m : members) votes.push_back(expr_decisions(m.values));
  std::vector<int> out(members.front().values.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::vector<int> tally(classes, 0);
    for (const auto& v : votes) ++tally[static_cast<std::size_t>(v[i])];
    out[i] = static_cast<int>(std::max_element(tally.begin(), tally.end()) - tally.begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subset reports

MemberLogits read_member_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError(dir.string() + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".lgt") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw FormatError(dir.string() + ": no .lgt files");
  MemberLogits member;
  for (const auto& f : files) {
    LogitSet set = read_logit_file(f);
    if (member.model_id.empty()) member.model_id = set.model_id;
    if (set.model_id != member.model_id) {
      throw FormatError(dir.string() + ": mixes model ids '" + member.model_id + "' and '" + set.model_id + "'");
    }
    member.videos.emplace(set.video_id, std::move(set.values));
  }
  return member;
}

std::vector<std::vector<std::size_t>> all_subsets(std::size_t n) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t size = 1; size <= n; ++size) {
    std::vector<std::size_t> idx(size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    while (true) {
      out.push_back(idx);
      std::size_t i = size;
      while (i > 0 && idx[i - 1] == n - size + i - 1) --i;
      if (i == 0) break;
      ++idx[i - 1];
      for (std::size_t j = i; j < size; ++j) idx[j] = idx[j - 1] + 1;
    }
  }
  return out;
}

std::string subset_label(std::span<const std::size_t> members) {
  auto tag = [](std::size_t i) { return "(" + std::to_string(i + 1) + ")"; };
  if (members.size() == 1) return tag(members[0]);
  std::string s = "Soft average voting ";
  if (members.size() == 2) return s + tag(members[0]) + " " + tag(members[1]);
  for (std::size_t i = 0; i + 1 < members.size(); ++i) s += tag(members[i]) + (i + 2 < members.size() ? ", " : "");
  return s + " and " + tag(members.back());
}

std::vector<SubsetRow> ensemble_eval(std::span<const MemberLogits> members, std::span<const FrameSequence> videos,
                                     Task task, std::span<const double> weights, double au_threshold,
                                     std::span<const std::vector<std::size_t>> subsets) {
  const auto w = normalize_weights(weights, members.size());
  std::set<std::string> expected;
  for (const auto& v : videos) expected.insert(v.video_id);
  for (std::size_t m = 0; m < members.size(); ++m) {
    const auto& member = members[m];
    for (const auto& v : videos) {
      const auto it = member.videos.find(v.video_id);
      if (it == member.videos.end()) {
        throw DimensionError(member_name(m, member.model_id) + " has no outputs for video '" + v.video_id + "'");
      }
      if (it->second.rows() != v.n_frames() || it->second.cols() != output_width(task)) {
        throw DimensionError(member_name(m, member.model_id) + " has shape " + to_string(it->second.shape()) +
                             " for video '" + v.video_id + "', expected [" + std::to_string(v.n_frames()) + "," +
                             std::to_string(output_width(task)) + "]");
      }
    }
    for (const auto& [id, values] : member.videos) {
      if (!expected.contains(id)) {
        throw DimensionError(member_name(m, member.model_id) + " has outputs for video '" + id +
                             "' which is not in the dataset");
      }
    }
  }

  const auto requested = subsets.empty() ? all_subsets(members.size())
                                         : std::vector<std::vector<std::size_t>>(subsets.begin(), subsets.end());
  std::vector<SubsetRow> rows;
  for (const auto& subset : requested) {
    if (subset.empty()) throw ConfigError("ensemble subset is empty");
    std::vector<double> sub_w;
    for (std::size_t m : subset) {
      if (m >= members.size()) throw ConfigError("ensemble subset names member (" + std::to_string(m + 1) + ")");
      sub_w.push_back(w[m]);
    }
    std::vector<Tensor> fused;
    for (const auto& v : videos) {
      std::vector<LogitSet> sets;
      for (std::size_t m : subset) sets.push_back({members[m].model_id, v.video_id, members[m].videos.at(v.video_id)});
      fused.push_back(soft_average(sets, sub_w).values);
    }
    rows.push_back({subset_label(subset), subset, score_outputs(task, fused, videos, au_threshold)});
  }
  return rows;
}

std::string format_report_text(std::span<const SubsetRow> rows, std::span<const MemberLogits> members, Task task) {
  std::ostringstream os;
  for (std::size_t m = 0; m < members.size(); ++m) os << "(" << m + 1 << ") " << members[m].model_id << '\n';
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.label.size());
  os << '\n' << std::left << std::setw(static_cast<int>(width)) << "Method" << "  " << metric_name(task) << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(static_cast<int>(width)) << r.label << "  " << std::fixed << std::setprecision(4)
       << r.metric.value << '\n';
  }
  return os.str();
}

std::string format_report_csv(std::span<const SubsetRow> rows, Task task) {
  std::ostringstream os;
  os << "method," << metric_name(task);
  for (std::size_t k = 0; k < output_width(task); ++k) os << ',' << output_name(task, k);
  os << '\n';
  for (const auto& r : rows) {
    os << '"' << r.label << "\"," << format_double(r.metric.value);
    for (Eigen::Index k = 0; k < r.metric.per_output.size(); ++k) os << ',' << format_double(r.metric.per_output(k));
    os << '\n';
  }
  return os.str();
}

}  // namespace affect
