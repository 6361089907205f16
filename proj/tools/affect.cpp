// affect: command-line front end for training, evaluation, prediction and
// ensembling of the frame-level affect models.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "affect/config.hpp"
#include "affect/data.hpp"
#include "affect/ensemble.hpp"
#include "affect/gradcheck_suite.hpp"
#include "affect/training.hpp"

namespace fs = std::filesystem;
using namespace affect;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

/// Missing or contradictory arguments; reported with the subcommand's help text.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("short write to " + path.string());
}

std::string dashed(std::string key) {
  for (char& c : key)
    if (c == '_') c = '-';
  return key;
}

/// Relative manifest paths in a config file are taken relative to that file.
void resolve_paths(RunConfig& rc, const fs::path& config_path) {
  const fs::path base = config_path.parent_path();
  for (std::string* p : {&rc.manifest, &rc.val_manifest, &rc.synthetic_manifest, &rc.out}) {
    if (!p->empty() && fs::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
  }
}

std::string model_id_for(const fs::path& checkpoint, const std::string& requested) {
  return requested.empty() ? checkpoint.stem().string() : requested;
}

void check_feat_dim(std::span<const FrameSequence> videos, std::size_t feat_dim, const std::string& what) {
  for (const auto& v : videos) {
    if (v.feat_dim() != feat_dim) {
      throw DimensionError(what + ": video '" + v.video_id + "' has feat_dim " + std::to_string(v.feat_dim()) +
                           ", model expects " + std::to_string(feat_dim));
    }
  }
}

MemberLogits predict_member(const Checkpoint& ck, std::span<const FrameSequence> videos, const std::string& id) {
  check_feat_dim(videos, ck.model.feat_dim, "predict");
  Predictor predictor(ck.params, ck.model);
  MemberLogits member{id, {}};
  for (const auto& v : videos) member.videos.emplace(v.video_id, predict_sequence(predictor, v, ck.model.seg_len));
  return member;
}

void emit_report(std::span<const MemberLogits> members, std::span<const FrameSequence> videos, Task task,
                 std::span<const double> weights, double au_threshold, const std::string& out,
                 const std::string& stem) {
  const auto rows = ensemble_eval(members, videos, task, weights, au_threshold);
  const std::string text = format_report_text(rows, members, task);
  std::cout << text;
  if (!out.empty()) {
    write_text(fs::path(out) / (stem + ".txt"), text);
    write_text(fs::path(out) / (stem + ".csv"), format_report_csv(rows, task));
  }
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::map<std::string, std::string> values;
  bool use_synthetic = false;
  bool print_config = false;
};

int cmd_train(const TrainArgs& args, const std::map<std::string, CLI::Option*>& flags) {
  RunConfig rc;
  if (!args.config.empty()) {
    rc = load_run_config(args.config);
    resolve_paths(rc, args.config);
  }
  for (const auto& key : config_keys()) {
    if (key == "use_synthetic") continue;
    if (flags.at(key)->count() > 0) rc.set(key, args.values.at(key));
  }
  if (args.use_synthetic) rc.use_synthetic = true;
  rc.validate();

  if (args.print_config) {
    std::cout << rc.format();
    return kOk;
  }
  if (!rc.seed_set) throw UsageError("train requires --seed (or `seed` in the config file)");
  if (rc.manifest.empty()) throw UsageError("train requires --manifest");
  if (rc.out.empty()) throw UsageError("train requires --out");
  if (rc.use_synthetic && rc.synthetic_manifest.empty()) throw UsageError("--use-synthetic requires --synthetic-manifest");
  if (rc.use_synthetic && rc.model.task != Task::Expr) throw UsageError("--use-synthetic applies to the expr task only");

  const Task task = rc.model.task;
  const auto videos = load_dataset(rc.manifest, task);
  check_feat_dim(videos, rc.model.feat_dim, rc.manifest);
  auto train_set = segment_dataset(videos, rc.model.seg_len);
  if (rc.use_synthetic) {
    const auto stills = load_dataset(rc.synthetic_manifest, Task::Expr);
    check_feat_dim(stills, rc.model.feat_dim, rc.synthetic_manifest);
    train_set = merge_synthetic(std::move(train_set), stills, rc.model.seg_len, rc.train.seed);
  }
  std::vector<Segment> val_set;
  if (!rc.val_manifest.empty()) {
    const auto val_videos = load_dataset(rc.val_manifest, task);
    check_feat_dim(val_videos, rc.model.feat_dim, rc.val_manifest);
    val_set = segment_dataset(val_videos, rc.model.seg_len);
  }

  const fs::path out(rc.out);
  write_text(out / "config.txt", rc.format());
  std::cout << "task " << task_name(task) << ": " << train_set.size() << " train segments, " << val_set.size()
            << " val segments, " << parameter_count(rc.model) << " parameters\n";

  TrainOptions options;
  options.out_dir = out;
  options.on_record = [](const EpochRecord& r) {
    std::cout << "epoch " << r.epoch << ' ' << r.split << " loss " << format_double(r.loss) << " metric "
              << format_double(r.metric) << '\n'
              << std::flush;
  };
  const auto result = train(init_params<float>(rc.model, rc.train.seed), rc.model, rc.train, train_set, val_set, options);
  std::cout << "best epoch " << result.best_epoch << " metric " << format_double(result.best_metric) << '\n';
  return kOk;
}

struct EvalArgs {
  std::string checkpoint, logits, manifest, task, out, model_id;
  double au_threshold = 0.0;
};

int cmd_eval(const EvalArgs& args, bool threshold_given) {
  if (args.manifest.empty()) throw UsageError("eval requires --manifest");
  if (args.checkpoint.empty() == args.logits.empty()) throw UsageError("eval requires exactly one of --checkpoint or --logits");
  std::vector<MemberLogits> members;
  Task task;
  double threshold = args.au_threshold;
  std::vector<FrameSequence> videos;
  if (!args.checkpoint.empty()) {
    const auto ck = load_checkpoint(args.checkpoint);
    task = ck.model.task;
    if (!args.task.empty() && parse_task(args.task) != task) throw UsageError("--task disagrees with the checkpoint");
    if (!threshold_given) threshold = ck.train.au_threshold;
    videos = load_dataset(args.manifest, task);
    members.push_back(predict_member(ck, videos, model_id_for(args.checkpoint, args.model_id)));
  } else {
    if (args.task.empty()) throw UsageError("eval --logits requires --task");
    task = parse_task(args.task);
    videos = load_dataset(args.manifest, task);
    members.push_back(read_member_dir(args.logits));
  }
  emit_report(members, videos, task, {}, threshold, args.out, "eval");
  return kOk;
}

int cmd_predict(const EvalArgs& args) {
  if (args.checkpoint.empty()) throw UsageError("predict requires --checkpoint");
  if (args.manifest.empty()) throw UsageError("predict requires --manifest");
  if (args.out.empty()) throw UsageError("predict requires --out");
  const auto ck = load_checkpoint(args.checkpoint);
  const auto videos = load_dataset(args.manifest, ck.model.task);
  const auto member = predict_member(ck, videos, model_id_for(args.checkpoint, args.model_id));
  for (const auto& [video, values] : member.videos) write_logit_file(args.out, {member.model_id, video, values});
  std::cout << "wrote " << member.videos.size() << " logit files for model '" << member.model_id << "' to " << args.out
            << '\n';
  return kOk;
}

struct EnsembleArgs {
  std::vector<std::string> logits;
  std::vector<double> weights;
  std::string manifest, task = "expr", out;
  double au_threshold = 0.0;
};

int cmd_ensemble(const EnsembleArgs& args) {
  if (args.logits.empty()) throw UsageError("ensemble requires at least one --logits directory");
  if (args.manifest.empty()) throw UsageError("ensemble requires --manifest");
  const Task task = parse_task(args.task);
  const auto videos = load_dataset(args.manifest, task);
  std::vector<MemberLogits> members;
  for (const auto& dir : args.logits) members.push_back(read_member_dir(dir));
  emit_report(members, videos, task, args.weights, args.au_threshold, args.out, "ensemble");
  return kOk;
}

struct FixtureArgs {
  FixtureSpec spec;
  std::string task = "expr", out;
  std::size_t val_videos = 10;
  std::size_t synthetic = 256;
};

int cmd_fixture(FixtureArgs args) {
  if (args.out.empty()) throw UsageError("fixture requires --out");
  args.spec.task = parse_task(args.task);
  if (args.spec.min_frames == 0 || args.spec.min_frames > args.spec.max_frames) {
    throw UsageError("fixture needs 0 < --min-frames <= --max-frames");
  }
  const fs::path dir(args.out);
  const auto layout = write_fixture(dir, args.spec, args.val_videos, args.synthetic);

  RunConfig rc;
  rc.set("task", args.task);
  rc.model.feat_dim = args.spec.feat_dim;
  rc.manifest = layout.train_manifest.filename().string();
  rc.val_manifest = layout.val_manifest.filename().string();
  rc.synthetic_manifest = layout.synthetic_manifest.empty() ? "" : layout.synthetic_manifest.filename().string();
  std::string text = "# fixture seed " + std::to_string(args.spec.seed) + "\n";
  text += "task = " + args.task + "\nfeat_dim = " + std::to_string(args.spec.feat_dim) + "\n";
  text += "manifest = " + rc.manifest + "\nval_manifest = " + rc.val_manifest + "\n";
  if (!rc.synthetic_manifest.empty()) text += "synthetic_manifest = " + rc.synthetic_manifest + "\n";
  const std::string cfg_name = "run_" + std::string(task_name(args.spec.task)) + ".cfg";
  write_text(dir / cfg_name, text);
  std::cout << "train manifest " << layout.train_manifest.string() << '\n'
            << "val manifest " << layout.val_manifest.string() << '\n';
  if (!layout.synthetic_manifest.empty()) std::cout << "synthetic manifest " << layout.synthetic_manifest.string() << '\n';
  std::cout << "config " << (dir / cfg_name).string() << '\n';
  return kOk;
}

int cmd_gradcheck(std::uint64_t seed) {
  bool ok = true;
  for (const auto& c : run_gradcheck_suite(seed)) {
    if (c.abs_tolerance > 0.0) {
      std::printf("%-24s %s  max_abs_error %.3e over %zu coordinates (%.2f s)\n", c.name.c_str(),
                  c.passed() ? "PASS" : "FAIL", c.abs_error(), c.result.checked, c.seconds);
    } else {
      std::printf("%-24s %s  max_rel_error %.3e over %zu coordinates (%.2f s)\n", c.name.c_str(),
                  c.passed() ? "PASS" : "FAIL", c.result.max_rel_error, c.result.checked, c.seconds);
    }
    ok = ok && c.passed();
  }
  if (!ok) {
    std::printf("gradient check failed\n");
    return kNumeric;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frame-level affect recognition: transformer encoder over per-frame CNN features"};
  app.require_subcommand(1);

  // train
  TrainArgs train_args;
  std::map<std::string, CLI::Option*> train_options;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a manifest; writes checkpoints and epochs.csv");
  train_cmd->add_option("--config", train_args.config, "key = value config file; flags override it");
  for (const auto& key : config_keys()) {
    if (key == "use_synthetic") continue;
    train_options[key] = train_cmd->add_option("--" + dashed(key), train_args.values[key], "config key " + key);
  }
  train_cmd->add_flag("--use-synthetic", train_args.use_synthetic, "merge the synthetic stills into training (expr)");
  train_cmd->add_flag("--print-config", train_args.print_config, "print the resolved config and exit");

  // eval / predict
  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint (or a directory of .lgt files) on a manifest");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file");
  eval_cmd->add_option("--logits", eval_args.logits, "directory of <video>.<model>.lgt files");
  eval_cmd->add_option("--manifest", eval_args.manifest, "dataset manifest");
  eval_cmd->add_option("--task", eval_args.task, "expr | au | va");
  eval_cmd->add_option("--out", eval_args.out, "directory for eval.txt and eval.csv");
  eval_cmd->add_option("--model-id", eval_args.model_id, "report label (default: checkpoint file stem)");
  auto* eval_threshold =
      eval_cmd->add_option("--au-threshold", eval_args.au_threshold, "AU logit threshold (default: from checkpoint)");

  EvalArgs predict_args;
  auto* predict_cmd = app.add_subcommand("predict", "Write per-video logit files for a checkpoint");
  predict_cmd->add_option("--checkpoint", predict_args.checkpoint, "checkpoint file");
  predict_cmd->add_option("--manifest", predict_args.manifest, "dataset manifest");
  predict_cmd->add_option("--out", predict_args.out, "output directory");
  predict_cmd->add_option("--model-id", predict_args.model_id, "model id in file names (default: checkpoint stem)");

  // ensemble
  EnsembleArgs ens_args;
  auto* ens_cmd = app.add_subcommand("ensemble", "Soft average voting over logit directories; reports every subset");
  ens_cmd->add_option("--logits", ens_args.logits, "logit directory of one member (repeat per member)");
  ens_cmd->add_option("--manifest", ens_args.manifest, "dataset manifest");
  ens_cmd->add_option("--task", ens_args.task, "expr | au | va")->capture_default_str();
  ens_cmd->add_option("--weights", ens_args.weights, "per-member weights (default uniform)");
  ens_cmd->add_option("--au-threshold", ens_args.au_threshold, "AU logit threshold")->capture_default_str();
  ens_cmd->add_option("--out", ens_args.out, "directory for ensemble.txt and ensemble.csv");

  // fixture
  FixtureArgs fx;
  auto* fx_cmd = app.add_subcommand("fixture", "Write a seeded synthetic dataset (FSQ1 + CSV + manifests)");
  fx_cmd->add_option("--seed", fx.spec.seed, "fixture seed")->required();
  fx_cmd->add_option("--out", fx.out, "output directory");
  fx_cmd->add_option("--task", fx.task, "expr | au | va")->capture_default_str();
  fx_cmd->add_option("--videos", fx.spec.n_videos, "training videos")->capture_default_str();
  fx_cmd->add_option("--val-videos", fx.val_videos, "held-out videos")->capture_default_str();
  fx_cmd->add_option("--synthetic", fx.synthetic, "synthetic stills (expr only)")->capture_default_str();
  fx_cmd->add_option("--feat-dim", fx.spec.feat_dim, "feature width")->capture_default_str();
  fx_cmd->add_option("--min-frames", fx.spec.min_frames, "shortest video")->capture_default_str();
  fx_cmd->add_option("--max-frames", fx.spec.max_frames, "longest video")->capture_default_str();
  fx_cmd->add_option("--noise-std", fx.spec.noise_std, "per-feature noise")->capture_default_str();
  fx_cmd->add_option("--class-prior", fx.spec.class_prior, "relative class frequencies (expr)");

  // gradcheck
  std::uint64_t gc_seed = 0;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every loss and the tiny encoder");
  gc_cmd->add_option("--seed", gc_seed, "input seed")->capture_default_str();

  CLI::App* active = nullptr;
  try {
    app.parse(argc, argv);
    active = app.get_subcommands().front();
    if (active == train_cmd) return cmd_train(train_args, train_options);
    if (active == eval_cmd) return cmd_eval(eval_args, eval_threshold->count() > 0);
    if (active == predict_cmd) return cmd_predict(predict_args);
    if (active == ens_cmd) return cmd_ensemble(ens_args);
    if (active == fx_cmd) return cmd_fixture(fx);
    if (active == gc_cmd) return cmd_gradcheck(gc_seed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << (active ? active->help() : app.help());
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
