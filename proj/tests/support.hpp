#pragma once

// Independent reference implementations used as test oracles, plus small
// helpers shared by the test binaries. Nothing here calls into the library
// code it is used to check.

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace oracle {

inline std::vector<double> softmax(const std::vector<double>& x) {
  double m = x[0];
  for (double v : x) m = v > m ? v : m;
  std::vector<double> e;
  double s = 0;
  for (double v : x) {
    e.push_back(std::exp(v - m));
    s += e.back();
  }
  for (double& v : e) v /= s;
  return e;
}

inline double cross_entropy(const std::vector<double>& logits, int target) {
  return -std::log(softmax(logits)[static_cast<std::size_t>(target)]);
}

inline std::vector<double> layer_norm(const std::vector<double>& x, double eps) {
  double mean = 0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  std::vector<double> out;
  for (double v : x) out.push_back((v - mean) / std::sqrt(var + eps));
  return out;
}

/// Per-class F1 by counting each class's TP/FP/FN directly from the pairs.
inline double class_f1(const std::vector<int>& preds, const std::vector<int>& truths, int c) {
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] == c, t = truths[i] == c;
    if (p && t) ++tp;
    else if (p) ++fp;
    else if (t) ++fn;
  }
  if (tp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2 * precision * recall / (precision + recall);
}

inline double macro_f1(const std::vector<int>& preds, const std::vector<int>& truths, int n_classes) {
  double s = 0;
  for (int c = 0; c < n_classes; ++c) s += class_f1(preds, truths, c);
  return s / n_classes;
}

/// Mean over columns of binary F1; `preds` and `truths` are row-major n x k.
inline double multilabel_f1(const std::vector<int>& preds, const std::vector<int>& truths, std::size_t k) {
  const std::size_t n = preds.size() / k;
  double s = 0;
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<int> p, t;
    for (std::size_t i = 0; i < n; ++i) {
      p.push_back(preds[i * k + j]);
      t.push_back(truths[i * k + j]);
    }
    s += class_f1(p, t, 1);
  }
  return s / static_cast<double>(k);
}

/// CCC from raw sums in long double.
inline double ccc(const std::vector<double>& x, const std::vector<double>& y) {
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  const long double n = static_cast<long double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const long double mx = sx / n, my = sy / n;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const long double den = sxx / n + syy / n + (mx - my) * (mx - my);
  if (den == 0) return 0.0;
  return static_cast<double>(2 * (sxy / n) / den);
}

/// Central difference of a scalar function of a vector at coordinate i.
template <typename F>
double central_difference(F&& f, std::vector<double> x, std::size_t i, double h) {
  const double saved = x[i];
  x[i] = saved + h;
  const double up = f(x);
  x[i] = saved - h;
  const double down = f(x);
  return (up - down) / (2 * h);
}

}  // namespace oracle

namespace testing {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("affect_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CommandResult {
  int exit_code = -1;
  std::string output;
};

/// Runs `args` through the shell with stdout and stderr captured.
inline CommandResult run(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  CommandResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = slurp(log);
  return r;
}

}  // namespace testing
