#pragma once

#include "agentsod/tensor.hpp"

#include <cstddef>
#include <functional>
#include <vector>

namespace agentsod {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  int dim(int axis) const { return value().dim(axis); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Linear record of executed operations. Adjoints are replayed in exact
/// reverse execution order. One tape per thread.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers an input whose gradient is wanted.
  Var leaf(Tensor value);
  /// Registers an intermediate result. `backward` receives the output adjoint
  /// and must call accumulate() for each differentiable input.
  Var record(Tensor value, Backward backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  void accumulate(const Var& v, const Tensor& grad);

  /// Gradient of the last backward() pass. Leaves that the loss never
  /// reached get zeros.
  Tensor grad(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }
  bool is_leaf(std::size_t id) const { return nodes_[id].leaf; }

  /// Order in which the last backward() pass visited recorded operations.
  const std::vector<std::size_t>& replay_order() const { return replay_order_; }

  friend void backward(Tape& tape, const Var& loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward backward;
    bool leaf = false;
  };
  std::vector<Node> nodes_;
  std::vector<std::size_t> replay_order_;
};

/// Reverse-mode pass from a single-element `loss`. Throws ShapeError if the
/// loss is not scalar.
void backward(Tape& tape, const Var& loss);

/// Central differences (f(x + h e_i) - f(x - h e_i)) / (x_i^+ - x_i^-) per
/// coordinate. The denominator uses the perturbed values actually stored in
/// float, which equals 2h up to rounding.
Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, float h);

/// Norm-wise relative error ||a - b|| / max(||a||, ||b||); zero when both vanish.
double relative_error(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Differentiable counterparts of the tensor_core operations. Inputs must live
// on the same tape.

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, float s);
Var add_row_broadcast(const Var& x, const Var& bias);
Var softmax_lastdim(const Var& x);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, float eps = 1e-5f);
Var gelu(const Var& x);
Var logistic(const Var& x);
Var reshape(const Var& x, Shape shape);
Var slice_cols(const Var& x, int begin, int count);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var adaptive_avg_pool2d(const Var& x, int out_h, int out_w);
Var depthwise_conv2d(const Var& x, const Var& kernel);
/// Scalar sum of all elements.
Var sum_all(const Var& x);
/// Scalar sum of x * weights, with `weights` held constant.
Var weighted_sum(const Var& x, const Tensor& weights);

}  // namespace agentsod
