#include "affect/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace affect {

std::string_view op_name(OpKind kind) noexcept {
  switch (kind) {
    case OpKind::Constant: return "constant";
    case OpKind::Input: return "input";
    case OpKind::Parameter: return "parameter";
    case OpKind::MatMul: return "matmul";
    case OpKind::MatMulNT: return "matmul_nt";
    case OpKind::Add: return "add";
    case OpKind::AddRow: return "add_row";
    case OpKind::AddConst: return "add_const";
    case OpKind::Scale: return "scale";
    case OpKind::Mul: return "mul";
    case OpKind::Relu: return "relu";
    case OpKind::Tanh: return "tanh";
    case OpKind::Softmax: return "softmax";
    case OpKind::LayerNorm: return "layer_norm";
    case OpKind::Dropout: return "dropout";
    case OpKind::SliceCols: return "slice_cols";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::GatherRows: return "gather_rows";
    case OpKind::ConcatRows: return "concat_rows";
    case OpKind::Sum: return "sum";
    case OpKind::DotConst: return "dot_const";
    case OpKind::Loss: return "loss";
  }
  return "?";
}

namespace {

using DMatrix = RowMatrix<double>;

template <typename Scalar>
Eigen::Map<const RowMatrix<Scalar>> view(std::span<const Scalar> s, std::size_t rows, std::size_t cols) {
  return {s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

template <typename Scalar>
Eigen::Map<RowMatrix<Scalar>> view(std::vector<Scalar>& s, std::size_t rows, std::size_t cols) {
  return {s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

void require(bool ok, const std::string& op, const Shape& a, const Shape& b) {
  if (!ok) {
    throw DimensionError(op + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
  }
}

}  // namespace

template <typename Scalar>
std::vector<Scalar>& Tape<Scalar>::grad_buffer(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), Scalar(0));
  return n.grad;
}

template <typename Scalar>
const typename Tape<Scalar>::Node& Tape<Scalar>::node(Var v, std::string_view op) const {
  if (v.id >= nodes_.size()) {
    throw StateError(std::string(op) + ": variable does not belong to this tape");
  }
  return nodes_[v.id];
}

template <typename Scalar>
Var Tape<Scalar>::push(OpKind kind, std::vector<std::size_t> inputs, TensorT value, BackwardFn fn) {
  value.check_finite(op_name(kind));
  Node n{kind, std::move(inputs), std::move(value), {}, {}, nullptr, false};
  for (std::size_t i : n.inputs) n.requires_grad = n.requires_grad || nodes_[i].requires_grad;
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename Scalar>
Var Tape<Scalar>::record(OpKind kind, std::vector<std::size_t> inputs, TensorT value, BackwardFn fn) {
  for (std::size_t i : inputs) node(Var{i}, op_name(kind));
  return push(kind, std::move(inputs), std::move(value), std::move(fn));
}

template <typename Scalar>
Var Tape<Scalar>::constant(TensorT value) {
  return push(OpKind::Constant, {}, std::move(value), {});
}

template <typename Scalar>
Var Tape<Scalar>::input(TensorT value) {
  Var v = push(OpKind::Input, {}, std::move(value), {});
  nodes_[v.id].requires_grad = true;
  return v;
}

template <typename Scalar>
Var Tape<Scalar>::parameter(TensorT& p) {
  Var v = push(OpKind::Parameter, {}, p, {});
  nodes_[v.id].requires_grad = true;
  nodes_[v.id].bound = &p;
  p.ensure_grad();
  return v;
}

template <typename Scalar>
Var Tape<Scalar>::matmul(Var a, Var b) {
  const auto& A = node(a, "matmul").value;
  const auto& B = node(b, "matmul").value;
  require(A.rank() == 2 && B.rank() == 2 && A.cols() == B.rows(), "matmul", A.shape(), B.shape());
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  TensorT out = TensorT::matrix(m, n);
  out.matrix() = (A.matrix().template cast<double>() * B.matrix().template cast<double>())
                     .template cast<Scalar>();
  return push(OpKind::MatMul, {a.id, b.id}, std::move(out), [m, k, n](Tape& t, std::size_t self) {
    const auto& in = t.nodes_[self].inputs;
    const DMatrix dC = view<Scalar>(t.grad_of(self), m, n).template cast<double>();
    if (t.requires_grad(in[0])) {
      const DMatrix dA = dC * t.value_of(in[1]).matrix().template cast<double>().transpose();
      view(t.grad_buffer(in[0]), m, k) += dA.cast<Scalar>();
    }
    if (t.requires_grad(in[1])) {
      const DMatrix dB = t.value_of(in[0]).matrix().template cast<double>().transpose() * dC;
      view(t.grad_buffer(in[1]), k, n) += dB.cast<Scalar>();
    }
  });
}

template <typename Scalar>
Var Tape<Scalar>::matmul_nt(Var a, Var b) {
  const auto& A = node(a, "matmul_nt").value;
  const auto& B = node(b, "matmul_nt").value;
  require(A.rank() == 2 && B.rank() == 2 && A.cols() == B.cols(), "matmul_nt", A.shape(), B.shape());
  const std::size_t m = A.rows(), k = A.cols(), n = B.rows();
  TensorT out = TensorT::matrix(m, n);
  out.matrix() = (A.matrix().template cast<double>() *
                  B.matrix().template cast<double>().transpose())
                     .template cast<Scalar>();
  return push(OpKind::MatMulNT, {a.id, b.id}, std::move(out), [m, k, n](Tape& t, std::size_t self) {
    const auto& in = t.nodes_[self].inputs;
    const DMatrix dC = view<Scalar>(t.grad_of(self), m, n).template cast<double>();
    if (t.requires_grad(in[0])) {
      const DMatrix dA = dC * t.value_of(in[1]).matrix().template cast<double>();
      view(t.grad_buffer(in[0]), m, k) += dA.cast<Scalar>();
    }
    if (t.requires_grad(in[1])) {
      const DMatrix dB = dC.transpose() * t.value_of(in[0]).matrix().template cast<double>();
      view(t.grad_buffer(in[1]), n, k) += dB.cast<Scalar>();
    }
  });
}

template <typename Scalar>
Var Tape<Scalar>::add(Var a, Var b) {
  const auto& A = node(a, "add").value;
  const auto& B = node(b, "add").value;
  require(A.shape() == B.shape(), "add", A.shape(), B.shape());
  TensorT out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  return push(OpKind::Add, {a.id, b.id}, std::move(out), [](Tape& t, std::size_t self) {
    const auto g = t.grad_of(self);
    for (std::size_t in : t.nodes_[self].inputs) {
      if (!t.requires_grad(in)) continue;
      auto& dst = t.grad_buffer(in);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
  });
}

template <typename Scalar>
Var Tape<Scalar>::add_row(Var x, Var bias) {
  const auto& X = node(x, "add_row").value;
  const auto& B = node(bias, "add_row").value;
  require(B.size() == X.cols(), "add_row", X.shape(), B.shape());
  TensorT out = X;
  const std::size_t rows = X.rows(), cols = X.cols();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) += B[c];
  return push(OpKind::AddRow, {x.id, bias.id}, std::move(out), [rows, cols](Tape& t, std::size_t self) {
    const auto& in = t.nodes_[self].inputs;
    const auto g = t.grad_of(self);
    if (t.requires_grad(in[0])) {
      auto& dx = t.grad_buffer(in[0]);
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    }
    if (t.requires_grad(in[1])) {
      auto& db = t.grad_buffer(in[1]);
      for (std::size_t c = 0; c < cols; ++c) {
        double acc = 0.0;
        for (std::size_t r = 0; r < rows; ++r) acc += g[r * cols + c];
        db[c] += static_cast<Scalar>(acc);
      }
    }
  });
}

template <typename Scalar>
Var Tape<Scalar>::add_const(Var x, const TensorT& c) {
  const auto& X = node(x, "add_const").value;
  require(X.size() == c.size(), "add_const", X.shape(), c.shape());
  TensorT out = X;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[i];
  return push(OpKind::AddConst, {x.id}, std::move(out), [](Tape& t, std::size_t self) {
    const auto g = t.grad_of(self);
    auto& dx = t.grad_buffer(t.nodes_[self].inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
  });
}

template <typename Scalar>
Var Tape<Scalar>::scale(Var x, double s) {
  TensorT out = node(x, "scale").value;
  for (auto& v : out.data()) v = static_cast<Scalar>(v * s);
  return push(OpKind::Scale, {x.id}, std::move(out), [s](Tape& t, std::size_t self) {
    const auto g = t.grad_of(self);
    auto& dx = t.grad_buffer(t.nodes_[self].inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += static_cast<Scalar>(g[i] * s);
  });
}

template <typename Scalar>
Var Tape<Scalar>::mul(Var a, Var b) {
  const auto& A = node(a, "mul").value;
  const auto& B = node(b, "mul").value;
  require(A.shape() == B.shape(), "mul", A.shape(), B.shape());
  TensorT out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  return push(OpKind::Mul, {a.id, b.id}, std::move(out), [](Tape& t, std::size_t self) {
    const auto& in = t.nodes_[self].inputs;
    const auto g = t.grad_of(self);
    for (int side = 0; side < 2; ++side) {
      if (!t.requires_grad(in[side])) continue;
      const auto& other = t.value_of(in[1 - side]);
      auto& dst = t.grad_buffer(in[side]);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * other[i];
    }
  });
}

template <typename Scalar>
Var Tape<Scalar>::relu(Var x) {
  TensorT out = node(x, "relu").value;
  for (auto& v : out.data()) v = v > Scalar(0) ? v : Scalar(0);
  return push(OpKind::Relu, {x.id}, std::move(out), [](Tape& t, std::size_t self) {
    const auto g = t.grad_of(self);
    const auto& y = t.value_of(self);
    auto& dx = t.grad_buffer(t.nodes_[self].inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (y[i] > Scalar(0)) dx[i] += g[i];
  });
}

template <typename Scalar>
Var Tape<Scalar>::tanh(Var x) {
  TensorT out = node(x, "tanh").value;
  for (auto& v : out.data()) v = std::tanh(v);
  return push(OpKind::Tanh, {x.id}, std::move(out), [](Tape& t, std::size_t self) {
    const auto g = t.grad_of(self);
    const auto& y = t.value_of(self);
    auto& dx = t.grad_buffer(t.nodes_[self].inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (Scalar(1) - y[i] * y[i]);
  });
}

template <typename Scalar>
Var Tape<Scalar>::softmax(Var x) {
  TensorT out = node(x, "softmax").value;
  const std::size_t rows = out.rows(), cols = out.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = out.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    std::vector<double> e(cols);
    for (std::size_t c = 0; c < cols; ++c) z += (e[c] = std::exp(static_cast<double>(row[c]) - mx));
    for (std::size_t c = 0; c < cols; ++c) row[c] = static_cast<Scalar>(e[c] / z);
  }
  return push(OpKind::Softmax, {x.id}, std::move(out), [rows, cols](Tape& t, std::size_t self) {
    const auto g = t.grad_of(self);
    const auto& y = t.value_of(self);
    auto& dx = t.grad_buffer(t.nodes_[self].inputs[0]);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t o = r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += static_cast<double>(g[o + c]) * y[o + c];
      for (std::size_t c = 0; c < cols; ++c)
        dx[o + c] += static_cast<Scalar>(y[o + c] * (g[o + c] - dot));
    }
  });
}

template <typename Scalar>
Var Tape<Scalar>::layer_norm(Var x, Var gamma, Var beta, double eps) {
  const auto& X = node(x, "layer_norm").value;
  const auto& G = node(gamma, "layer_norm").value;
  const auto& B = node(beta, "layer_norm").value;
  require(G.size() == X.cols() && B.size() == X.cols(), "layer_norm", X.shape(), G.shape());
  if (!(eps > 0.0)) throw RangeError("layer_norm: eps must be positive");
  const std::size_t rows = X.rows(), d = X.cols();
  auto xhat = std::make_shared<std::vector<double>>(X.size());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  TensorT out(X.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = X.row(r);
    double mean = 0.0;
    for (Scalar v : row) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (Scalar v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = inv;
    for (std::size_t c = 0; c < d; ++c) {
      const double h = (row[c] - mean) * inv;
      (*xhat)[r * d + c] = h;
      out(r, c) = static_cast<Scalar>(h * G[c] + B[c]);
    }
  }
  return push(OpKind::LayerNorm, {x.id, gamma.id, beta.id}, std::move(out),
              [rows, d, xhat, rstd](Tape& t, std::size_t self) {
                const auto& in = t.nodes_[self].inputs;
                const auto g = t.grad_of(self);
                const auto& G = t.value_of(in[1]);
                if (t.requires_grad(in[1]) || t.requires_grad(in[2])) {
                  std::vector<double> dg(d, 0.0), db(d, 0.0);
                  for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < d; ++c) {
                      dg[c] += g[r * d + c] * (*xhat)[r * d + c];
                      db[c] += g[r * d + c];
                    }
                  if (t.requires_grad(in[1])) {
                    auto& dst = t.grad_buffer(in[1]);
                    for (std::size_t c = 0; c < d; ++c) dst[c] += static_cast<Scalar>(dg[c]);
                  }
                  if (t.requires_grad(in[2])) {
                    auto& dst = t.grad_buffer(in[2]);
                    for (std::size_t c = 0; c < d; ++c) dst[c] += static_cast<Scalar>(db[c]);
                  }
                }
                if (!t.requires_grad(in[0])) return;
                auto& dx = t.grad_buffer(in[0]);
                std::vector<double> dh(d);
                for (std::size_t r = 0; r < rows; ++r) {
                  double mean_dh = 0.0, mean_dh_h = 0.0;
                  for (std::size_t c = 0; c < d; ++c) {
                    dh[c] = static_cast<double>(g[r * d + c]) * G[c];
                    mean_dh += dh[c];
                    mean_dh_h += dh[c] * (*xhat)[r * d + c];
                  }
                  mean_dh /= static_cast<double>(d);
                  mean_dh_h /= static_cast<double>(d);
                  for (std::size_t c = 0; c < d; ++c) {
                    dx[r * d + c] += static_cast<Scalar>(
                        (*rstd)[r] * (dh[c] - mean_dh - (*xhat)[r * d + c] * mean_dh_h));
                  }
                }
              });
}

template <typename Scalar>
Var Tape<Scalar>::dropout(Var x, double p, Rng& rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw RangeError("dropout: probability must lie in [0, 1), got " + std::to_string(p));
  }
  node(x, "dropout");
  if (!training || p == 0.0) return x;
  TensorT out = nodes_[x.id].value;
  auto mask = std::make_shared<std::vector<Scalar>>(out.size());
  const auto keep = static_cast<Scalar>(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng.uniform() >= p ? keep : Scalar(0);
    out[i] *= (*mask)[i];
  }
  return push(OpKind::Dropout, {x.id}, std::move(out), [mask](Tape& t, std::size_t self) {
    const auto g = t.grad_of(self);
    auto& dx = t.grad_buffer(t.nodes_[self].inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (*mask)[i];
  });
}

template <typename Scalar>
Var Tape<Scalar>::slice_cols(Var x, std::size_t begin, std::size_t count) {
  const auto& X = node(x, "slice_cols").value;
  if (count == 0 || begin + count > X.cols()) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + to_string(X.shape()));
  }
  const std::size_t rows = X.rows(), cols = X.cols();
  TensorT out = TensorT::matrix(rows, count);
  out.matrix() = X.matrix().middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
  return push(OpKind::SliceCols, {x.id}, std::move(out), [rows, cols, begin, count](Tape& t, std::size_t self) {
    auto& dx = t.grad_buffer(t.nodes_[self].inputs[0]);
    view(dx, rows, cols).middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count)) +=
        view<Scalar>(t.grad_of(self), rows, count);
  });
}

template <typename Scalar>
Var Tape<Scalar>::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = node(parts[0], "concat_cols").value.rows();
  std::size_t total = 0;
  std::vector<std::size_t> ids;
  for (Var p : parts) {
    const auto& P = node(p, "concat_cols").value;
    require(P.rank() == 2 && P.rows() == rows, "concat_cols", nodes_[parts[0].id].value.shape(), P.shape());
    total += P.cols();
    ids.push_back(p.id);
  }
  TensorT out = TensorT::matrix(rows, total);
  std::size_t offset = 0;
  for (Var p : parts) {
    const auto& P = nodes_[p.id].value;
    out.matrix().middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(P.cols())) = P.matrix();
    offset += P.cols();
  }
  return push(OpKind::ConcatCols, std::move(ids), std::move(out), [rows, total](Tape& t, std::size_t self) {
    const auto g = view<Scalar>(t.grad_of(self), rows, total);
    std::size_t off = 0;
    for (std::size_t in : t.nodes_[self].inputs) {
      const std::size_t c = t.value_of(in).cols();
      if (t.requires_grad(in)) {
        view(t.grad_buffer(in), rows, c) +=
            g.middleCols(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(c));
      }
      off += c;
    }
  });
}

template <typename Scalar>
Var Tape<Scalar>::gather_rows(Var x, std::span<const std::size_t> rows) {
  const auto& X = node(x, "gather_rows").value;
  if (rows.empty()) throw DimensionError("gather_rows: empty row selection");
  const std::size_t cols = X.cols();
  TensorT out = TensorT::matrix(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= X.rows()) {
      throw DimensionError("gather_rows: row " + std::to_string(rows[i]) + " outside " + to_string(X.shape()));
    }
    std::copy_n(X.row(rows[i]).begin(), cols, out.row(i).begin());
  }
  std::vector<std::size_t> picked(rows.begin(), rows.end());
  return push(OpKind::GatherRows, {x.id}, std::move(out), [picked, cols](Tape& t, std::size_t self) {
    const auto g = t.grad_of(self);
    auto& dx = t.grad_buffer(t.nodes_[self].inputs[0]);
    for (std::size_t i = 0; i < picked.size(); ++i)
      for (std::size_t c = 0; c < cols; ++c) dx[picked[i] * cols + c] += g[i * cols + c];
  });
}

template <typename Scalar>
Var Tape<Scalar>::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cols = node(parts[0], "concat_rows").value.cols();
  std::vector<Scalar> data;
  std::vector<std::size_t> ids;
  for (Var p : parts) {
    const auto& P = node(p, "concat_rows").value;
    require(P.cols() == cols, "concat_rows", nodes_[parts[0].id].value.shape(), P.shape());
    data.insert(data.end(), P.data().begin(), P.data().end());
    ids.push_back(p.id);
  }
  const std::size_t rows = data.size() / cols;
  return push(OpKind::ConcatRows, std::move(ids), TensorT(Shape{rows, cols}, std::move(data)),
              [](Tape& t, std::size_t self) {
                const auto g = t.grad_of(self);
                std::size_t off = 0;
                for (std::size_t in : t.nodes_[self].inputs) {
                  const std::size_t n = t.value_of(in).size();
                  if (t.requires_grad(in)) {
                    auto& dst = t.grad_buffer(in);
                    for (std::size_t i = 0; i < n; ++i) dst[i] += g[off + i];
                  }
                  off += n;
                }
              });
}

template <typename Scalar>
Var Tape<Scalar>::sum(Var x) {
  double acc = 0.0;
  for (Scalar v : node(x, "sum").value.data()) acc += v;
  return push(OpKind::Sum, {x.id}, TensorT(Shape{1}, static_cast<Scalar>(acc)), [](Tape& t, std::size_t self) {
    const Scalar g = t.grad_of(self)[0];
    for (auto& v : t.grad_buffer(t.nodes_[self].inputs[0])) v += g;
  });
}

template <typename Scalar>
Var Tape<Scalar>::dot_const(Var x, const TensorT& weights) {
  const auto& X = node(x, "dot_const").value;
  require(X.size() == weights.size(), "dot_const", X.shape(), weights.shape());
  double acc = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) acc += static_cast<double>(X[i]) * weights[i];
  return push(OpKind::DotConst, {x.id}, TensorT(Shape{1}, static_cast<Scalar>(acc)),
              [weights](Tape& t, std::size_t self) {
                const Scalar g = t.grad_of(self)[0];
                auto& dx = t.grad_buffer(t.nodes_[self].inputs[0]);
                for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g * weights[i];
              });
}

template <typename Scalar>
void Tape<Scalar>::backward(Var loss) {
  if (consumed_) {
    throw StateError("backward: tape already consumed; clear() and record a new forward pass first");
  }
  const auto& L = node(loss, "backward").value;
  if (L.size() != 1) throw DimensionError("backward: loss must be scalar, got " + to_string(L.shape()));
  consumed_ = true;
  grad_buffer(loss.id)[0] = Scalar(1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.bound != nullptr) {
      auto& dst = n.bound->grad();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad[k];
    }
  }
}

template <typename Scalar>
void Tape<Scalar>::clear() {
  nodes_.clear();
  consumed_ = false;
}

template <typename Scalar>
void Tape<Scalar>::rewind(std::size_t n) {
  if (n > nodes_.size()) throw StateError("rewind: mark beyond tape end");
  nodes_.resize(n);
  for (auto& node : nodes_) node.grad.clear();
  consumed_ = false;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace affect
