#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace agentsod {

using Shape = std::vector<int>;

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrixXf>;
using ConstMatrixMap = Eigen::Map<const RowMatrixXf>;
using VectorMap = Eigen::Map<Eigen::VectorXf>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXf>;

/// Raised for any extent or rank mismatch. The message names the offending shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation sees or would produce a NaN/Inf.
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

std::string to_string(const Shape& shape);

/// Dense row-major float tensor. Every extent is positive and the flat
/// buffer always holds exactly product(shape) elements.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0f); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0f); }
  static Tensor identity(int n);

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  const std::vector<float>& storage() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // 2-D and 3-D element access; no bounds checks beyond debug asserts.
  float& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
  float operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
  float& operator()(int c, int i, int j) {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + i) * shape_[2] + j];
  }
  float operator()(int c, int i, int j) const {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + i) * shape_[2] + j];
  }

  /// Same data under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  /// Eigen views over a rank-2 tensor.
  MatrixMap matrix();
  ConstMatrixMap matrix() const;
  VectorMap vector() { return VectorMap(data_.data(), static_cast<Eigen::Index>(data_.size())); }
  ConstVectorMap vector() const {
    return ConstVectorMap(data_.data(), static_cast<Eigen::Index>(data_.size()));
  }

  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Bitwise equality of shapes and payloads.
bool bit_equal(const Tensor& a, const Tensor& b);
float max_abs_diff(const Tensor& a, const Tensor& b);

/// Throws NumericError naming `where` if any element is NaN or Inf.
void ensure_finite(const Tensor& t, const char* where);

// ---------------------------------------------------------------------------
// Forward operations. All are pure; outputs are checked for finiteness.

/// c[i][j] = sum_t a[i][t] * b[t][j], accumulated with t ascending.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
/// x[r][:] + bias for every row r of a rank-2 x.
Tensor add_row_broadcast(const Tensor& x, const Tensor& bias);

Tensor softmax_lastdim(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps = 1e-5f);
/// tanh form of the Gaussian-error linear unit.
Tensor gelu(const Tensor& x);
Tensor logistic(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);

/// Rank-2 column slice [begin, begin + count).
Tensor slice_cols(const Tensor& x, int begin, int count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);

/// Window bounds used by adaptive pooling along one axis.
struct PoolWindow {
  int begin;
  int end;
};
PoolWindow adaptive_window(int index, int in_extent, int out_extent);

Tensor adaptive_avg_pool2d(const Tensor& x, int out_h, int out_w);
/// Half-pixel-centre bilinear resampling with edge clamping.
Tensor bilinear_resize(const Tensor& x, int out_h, int out_w);
/// Per-channel correlation with an odd square kernel and same-size zero padding.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernel);
/// Dense 2-D convolution, weight [Co x Ci x k x k], optional bias [Co].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding);

/// 1x1 convolution: weight [Ci x Co] applied at every pixel, plus bias [Co].
Tensor channel_project(const Tensor& x, const Tensor& weight, const Tensor& bias);

double sum(const Tensor& x);
double mean(const Tensor& x);

}  // namespace agentsod
