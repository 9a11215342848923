#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "aura/tensor.hpp"

namespace aura {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the
/// tape lives.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Reverse-mode gradient tape. Nodes are appended in evaluation order, which
/// is a topological order, so backward is a single reverse sweep.
class Tape {
 public:
  /// Receives the node's value and the gradient flowing into it; pushes
  /// gradients to inputs via accumulate() or grad_buffer().
  using Backward =
      std::function<void(Tape&, const Tensor& out_value, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Constant input; the tensor is copied into the tape.
  Var constant(Tensor value);
  /// Differentiable leaf that views external storage (not copied). The
  /// referenced tensor must outlive the tape and stay unmodified.
  Var parameter(const Tensor& value);
  /// Non-differentiable leaf viewing external storage.
  Var view(const Tensor& value);

  /// Records an op result. `backward` is dropped when no input needs grad.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Tensor value, std::span<const Var> inputs, Backward backward);

  /// Seeds d(out)/d(out) = 1 for a single-element output and sweeps.
  void backward(Var out);
  /// Vector-Jacobian product: seeds the output gradient with `seed`.
  void backward(Var out, const Tensor& seed);

  /// Gradient of the last backward sweep w.r.t. v (zeros if none reached it).
  Tensor grad(Var v) const;
  bool has_grad(Var v) const;

  /// Adds g into the gradient buffer of v; no-op for nodes without grad.
  void accumulate(Var v, const Tensor& g);
  /// Mutable gradient buffer, allocated as zeros on first access. Only
  /// valid for nodes that require grad.
  Tensor& grad_buffer(Var v);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor own;
    const Tensor* external = nullptr;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
    const Tensor& value() const { return external ? *external : own; }
  };

  Var push(Node node);
  void sweep(std::uint32_t from);

  std::deque<Node> nodes_;
};

/// Differentiable primitives. Every op checks shapes and throws
/// DimensionError on mismatch.
namespace ad {

Var matmul(Var a, Var b);     // [M×K]·[K×N]
Var matmul_nt(Var a, Var b);  // [M×K]·[N×K]ᵀ
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// y = s*x + c elementwise.
Var affine(Var x, double s, double c = 0.0);
/// Adds a length-N vector to every row of an [M×N] matrix.
Var add_row(Var x, Var bias);
/// Adds a length-C vector to every column of a [C×L] matrix.
Var add_col(Var x, Var bias);

Var softmax_rows(Var x);
Var log_softmax_rows(Var x);
/// Row-wise layer normalization over the last axis, with gain and shift.
Var layer_norm(Var x, Var gain, Var shift, double eps = 1e-5);
/// Group normalization of a [C×L] map, channels split into `groups`.
Var group_norm(Var x, Var gain, Var shift, std::size_t groups, double eps = 1e-5);

Var gelu(Var x);  // exact erf form
Var relu(Var x);
Var tanh(Var x);
Var sigmoid(Var x);
Var log(Var x);

/// Mean over rows of [M×N] -> [N].
Var mean_rows(Var x);
/// Scalar mean over all elements (shape {1}).
Var mean(Var x);
Var sum(Var x);
/// mean_i x[i][cols[i]] (shape {1}).
Var pick_mean(Var x, std::span<const std::size_t> cols);

/// Unit-normalizes a vector; NumericError on zero norm.
Var l2_normalize(Var x);
Var l2_normalize_rows(Var x);

Var reshape(Var x, Shape shape);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var row(Var x, std::size_t r);  // [M×N] -> [N]
/// Stacks equal-length vectors into [B×N].
Var stack_rows(std::span<const Var> rows);

/// 1-D convolution: x[Cin×L], w[Cout×Cin×K], b[Cout] -> [Cout×Lout] with
/// Lout = (L + 2·pad − K)/stride + 1 and zero padding.
Var conv1d(Var x, Var w, Var b, std::size_t stride, std::size_t pad);

}  // namespace ad

using Objective = std::function<Var(Tape&, std::span<const Var> params)>;

/// Evaluates `f` on fresh parameter leaves and returns the objective value
/// with d f / d params. Throws ContractError if `f` is not scalar.
struct GradientResult {
  double value = 0.0;
  std::vector<Tensor> grads;
};
GradientResult gradient(const Objective& f, std::span<const Tensor> params);

}  // namespace aura
