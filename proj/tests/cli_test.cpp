#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "support.hpp"

namespace fs = std::filesystem;
using testing::run;
using testing::slurp;

namespace {

const std::string kCli = AFFECT_CLI_PATH;

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

struct Workspace {
  fs::path dir = testing::temp_dir("cli");
  fs::path log = dir / "log.txt";

  testing::CommandResult cli(const std::string& args) const { return run(kCli + " " + args, log); }
};

const std::string kSmallModel = " --d-model 16 --d-ff 16 --head-hidden 16 --n-layers 1 --n-heads 2 --batch-size 4";

std::vector<std::pair<std::string, std::string>> tree(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.emplace_back(fs::relative(e.path(), root).string(), slurp(e.path()));
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("usage errors exit 1 with help text") {
  Workspace ws;
  auto r = ws.cli("train --seed 1 --out " + q(ws.dir / "o"));
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("--manifest") != std::string::npos);
  CHECK(r.output.find("Usage") != std::string::npos);

  r = ws.cli("train --manifest x.tsv --out " + q(ws.dir / "o"));
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("--seed") != std::string::npos);

  CHECK(ws.cli("eval --checkpoint a.ckpt").exit_code == 1);
  CHECK(ws.cli("ensemble --manifest m.tsv").exit_code == 1);
  CHECK(ws.cli("train --no-such-flag 3").exit_code == 1);
  CHECK(ws.cli("").exit_code == 1);
  CHECK(ws.cli("train --epochs 0 --print-config").exit_code == 1);
  CHECK(ws.cli("--help").exit_code == 0);
}

TEST_CASE("print-config shows the defaults and round trips") {
  Workspace ws;
  const auto r = ws.cli("train --print-config");
  REQUIRE(r.exit_code == 0);
  for (const char* line : {"seg_len = 64\n", "d_model = 512\n", "d_ff = 512\n", "dropout = 0.1\n",
                           "head_hidden = 256\n", "epochs = 20\n", "batch_size = 64\n", "lr = 0.001\n",
                           "weight_decay = 0.015625\n"})
    CHECK(r.output.find(line) != std::string::npos);

  const auto changed = ws.cli("train --print-config --n-layers 6 --lr 0.0005 --seed 3 --task au");
  REQUIRE(changed.exit_code == 0);
  std::ofstream(ws.dir / "echo.cfg") << changed.output;
  const auto again = ws.cli("train --print-config --config " + q(ws.dir / "echo.cfg"));
  CHECK(again.output == changed.output);

  std::ofstream(ws.dir / "bad.cfg") << "epochs = 2\nlearning_rate = 1\n";
  const auto bad = ws.cli("train --print-config --config " + q(ws.dir / "bad.cfg"));
  CHECK(bad.exit_code == 1);
  CHECK(bad.output.find("learning_rate") != std::string::npos);
}

TEST_CASE("fixture output is reproducible") {
  Workspace ws;
  const std::string args = " --seed 4 --videos 3 --val-videos 2 --synthetic 10 --max-frames 90";
  REQUIRE(ws.cli("fixture --out " + q(ws.dir / "a") + args).exit_code == 0);
  REQUIRE(ws.cli("fixture --out " + q(ws.dir / "b") + args).exit_code == 0);
  const auto a = tree(ws.dir / "a"), b = tree(ws.dir / "b");
  CHECK(a.size() == 3 + 2 + 1 + 3 + 2 + 1 + 3 + 1);
  CHECK(a == b);
  REQUIRE(ws.cli("fixture --out " + q(ws.dir / "c") + " --seed 5 --videos 3 --val-videos 2 --synthetic 10 --max-frames 90")
              .exit_code == 0);
  CHECK(tree(ws.dir / "c") != a);
}

TEST_CASE("train, predict, eval and ensemble end to end") {
  Workspace ws;
  const fs::path fx = ws.dir / "fx";
  REQUIRE(ws.cli("fixture --seed 2 --videos 8 --val-videos 4 --synthetic 40 --max-frames 120 --out " + q(fx)).exit_code ==
          0);
  const fs::path cfg = fx / "run_expr.cfg";

  std::vector<fs::path> runs;
  for (int seed : {1, 2, 3}) {
    const fs::path out = ws.dir / ("run" + std::to_string(seed));
    const auto r = ws.cli("train --config " + q(cfg) + " --seed " + std::to_string(seed) + " --epochs 3 --out " +
                          q(out) + kSmallModel + " --use-synthetic");
    REQUIRE_MESSAGE(r.exit_code == 0, r.output);
    CHECK(count_lines(slurp(out / "epochs.csv")) == 1 + 2 * 3);
    CHECK(fs::exists(out / "final.ckpt"));
    CHECK(fs::exists(out / "best.ckpt"));
    CHECK(slurp(out / "config.txt").find("seed = " + std::to_string(seed) + "\n") != std::string::npos);
    CHECK(slurp(out / "config.txt").find("use_synthetic = true\n") != std::string::npos);
    runs.push_back(out);
  }

  const fs::path val = fx / "val_expr.tsv";
  std::vector<fs::path> logit_dirs;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const fs::path dir = ws.dir / ("logits" + std::to_string(k));
    REQUIRE(ws.cli("predict --checkpoint " + q(runs[k] / "final.ckpt") + " --manifest " + q(val) + " --out " + q(dir))
                .exit_code == 0);
    CHECK(std::distance(fs::directory_iterator(dir), fs::directory_iterator()) == 4);
    logit_dirs.push_back(dir);
  }

  SUBCASE("eval from logits equals eval from the checkpoint") {
    REQUIRE(ws.cli("eval --checkpoint " + q(runs[0] / "final.ckpt") + " --manifest " + q(val) + " --out " +
                   q(ws.dir / "e1"))
                .exit_code == 0);
    REQUIRE(ws.cli("eval --logits " + q(logit_dirs[0]) + " --task expr --manifest " + q(val) + " --out " +
                   q(ws.dir / "e2"))
                .exit_code == 0);
    CHECK(slurp(ws.dir / "e1" / "eval.csv") == slurp(ws.dir / "e2" / "eval.csv"));
    CHECK(slurp(ws.dir / "e1" / "eval.txt") == slurp(ws.dir / "e2" / "eval.txt"));
    CHECK(count_lines(slurp(ws.dir / "e1" / "eval.csv")) == 2);

    REQUIRE(ws.cli("ensemble --logits " + q(logit_dirs[0]) + " --manifest " + q(val) + " --out " + q(ws.dir / "s1"))
                .exit_code == 0);
    CHECK(slurp(ws.dir / "s1" / "ensemble.csv") == slurp(ws.dir / "e1" / "eval.csv"));
    CHECK(slurp(ws.dir / "s1" / "ensemble.txt") == slurp(ws.dir / "e1" / "eval.txt"));
  }
  SUBCASE("three members give a seven row report") {
    std::string args = "ensemble --manifest " + q(val) + " --out " + q(ws.dir / "s3");
    for (const auto& d : logit_dirs) args += " --logits " + q(d);
    const auto r = ws.cli(args);
    REQUIRE_MESSAGE(r.exit_code == 0, r.output);
    const std::string csv = slurp(ws.dir / "s3" / "ensemble.csv");
    CHECK(count_lines(csv) == 8);
    CHECK(csv.find("\"Soft average voting (1), (2) and (3)\"") != std::string::npos);
    CHECK(slurp(ws.dir / "s3" / "ensemble.txt").find("Soft average voting (1) (2)") != std::string::npos);
  }
  SUBCASE("mismatched video sets exit 2") {
    fs::remove(fs::directory_iterator(logit_dirs[1])->path());
    const auto r = ws.cli("ensemble --manifest " + q(val) + " --logits " + q(logit_dirs[0]) + " --logits " +
                          q(logit_dirs[1]));
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("final") != std::string::npos);
  }
  SUBCASE("eval with another manifest's videos exits 2") {
    const auto r = ws.cli("eval --logits " + q(logit_dirs[0]) + " --task expr --manifest " + q(fx / "train_expr.tsv"));
    CHECK(r.exit_code == 2);
  }
}

TEST_CASE("data and numeric failures map to exit codes") {
  Workspace ws;
  const fs::path fx = ws.dir / "fx";
  REQUIRE(ws.cli("fixture --seed 1 --videos 2 --val-videos 1 --synthetic 0 --max-frames 80 --out " + q(fx)).exit_code ==
          0);
  const fs::path cfg = fx / "run_expr.cfg";

  SUBCASE("missing manifest file") {
    const auto r = ws.cli("train --seed 1 --manifest " + q(ws.dir / "nope.tsv") + " --out " + q(ws.dir / "o"));
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("nope.tsv") != std::string::npos);
  }
  SUBCASE("corrupt feature file") {
    const fs::path victim = fs::directory_iterator(fx / "features")->path();
    std::ofstream(victim, std::ios::binary | std::ios::trunc) << "FSQ1";
    const auto r = ws.cli("train --config " + q(cfg) + " --seed 1 --epochs 1 --out " + q(ws.dir / "o") + kSmallModel);
    CHECK(r.exit_code == 2);
    CHECK(r.output.find(victim.filename().string()) != std::string::npos);
  }
  SUBCASE("feature width disagrees with the config") {
    const auto r = ws.cli("train --config " + q(cfg) + " --seed 1 --feat-dim 31 --out " + q(ws.dir / "o"));
    CHECK(r.exit_code == 2);
  }
  SUBCASE("diverging training") {
    const auto r = ws.cli("train --config " + q(cfg) + " --seed 1 --epochs 20 --lr 1e30 --weight-decay 0 --weighted-loss false --out " +
                          q(ws.dir / "o") + kSmallModel);
    CHECK(r.exit_code == 3);
    CHECK(r.output.find("numeric error") != std::string::npos);
  }
  SUBCASE("gradcheck passes") {
    const auto r = ws.cli("gradcheck --seed 3");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("FAIL") == std::string::npos);
  }
}
