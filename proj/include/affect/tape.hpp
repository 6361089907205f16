#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "affect/rng.hpp"
#include "affect/tensor.hpp"

namespace affect {

enum class OpKind {
  Constant,
  Input,
  Parameter,
  MatMul,
  MatMulNT,
  Add,
  AddRow,
  AddConst,
  Scale,
  Mul,
  Relu,
  Tanh,
  Softmax,
  LayerNorm,
  Dropout,
  SliceCols,
  ConcatCols,
  GatherRows,
  ConcatRows,
  Sum,
  DotConst,
  Loss,
};

std::string_view op_name(OpKind kind) noexcept;

/// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

/// Linear reverse-mode tape.
///
/// Nodes are appended in forward order and backward() walks them in exact
/// reverse, so the creation order is already a topological order. Every op
/// rejects non-finite results. Reductions and matrix products accumulate in
/// double regardless of Scalar.
///
/// A tape supports a single backward(); call clear() before recording the
/// next forward pass.
template <typename Scalar>
class Tape {
 public:
  using TensorT = BasicTensor<Scalar>;
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves.
  Var constant(TensorT value);
  Var input(TensorT value);
  /// Binds external storage; backward() accumulates into `p.grad()`.
  /// `p` must outlive the tape's backward pass.
  Var parameter(TensorT& p);

  // Differentiable ops. Shapes are checked; errors name both operands.
  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);  // a * b^T
  Var add(Var a, Var b);
  Var add_row(Var x, Var bias);  // bias broadcast over rows
  Var add_const(Var x, const TensorT& c);
  Var scale(Var x, double s);
  Var mul(Var a, Var b);
  Var relu(Var x);
  Var tanh(Var x);
  Var softmax(Var x);  // over the last axis
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
  Var dropout(Var x, double p, Rng& rng, bool training);
  Var slice_cols(Var x, std::size_t begin, std::size_t count);
  Var concat_cols(std::span<const Var> parts);
  Var gather_rows(Var x, std::span<const std::size_t> rows);
  Var concat_rows(std::span<const Var> parts);
  Var sum(Var x);
  Var dot_const(Var x, const TensorT& weights);  // sum(x * weights)

  /// Appends a custom node; used by the loss functions.
  Var record(OpKind kind, std::vector<std::size_t> inputs, TensorT value, BackwardFn fn);

  void backward(Var loss);
  void clear();
  /// Drops every node recorded after the first `n`; also re-arms backward().
  void rewind(std::size_t n);

  const TensorT& value(Var v) const { return nodes_.at(v.id).value; }
  /// Empty until backward() has reached the node.
  std::span<const Scalar> grad(Var v) const { return nodes_.at(v.id).grad; }
  OpKind kind(Var v) const { return nodes_.at(v.id).kind; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Accessors for backward closures.
  const TensorT& value_of(std::size_t id) const { return nodes_[id].value; }
  std::span<const std::size_t> inputs_of(std::size_t id) const { return nodes_[id].inputs; }
  std::span<const Scalar> grad_of(std::size_t id) const { return nodes_[id].grad; }
  /// Zero-initialised gradient buffer for node `id`.
  std::vector<Scalar>& grad_buffer(std::size_t id);

 private:
  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    TensorT value;
    std::vector<Scalar> grad;
    BackwardFn backward;
    TensorT* bound = nullptr;
    bool requires_grad = false;
  };

  Var push(OpKind kind, std::vector<std::size_t> inputs, TensorT value, BackwardFn fn);
  const Node& node(Var v, std::string_view op) const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace affect
