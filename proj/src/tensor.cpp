#include "agentsod/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace agentsod {

namespace {

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (int extent : shape) {
    if (extent <= 0) throw ShapeError("non-positive extent in shape " + to_string(shape));
    n *= static_cast<std::size_t>(extent);
  }
  return n;
}

void require_rank(const Tensor& t, int rank, const char* op) {
  if (t.ndim() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  data_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (element_count(shape_) != data_.size()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     to_string(shape_));
  }
}

Tensor Tensor::identity(int n) {
  Tensor t({n, n});
  for (int i = 0; i < n; ++i) t(i, i) = 1.0f;
  return t;
}

int Tensor::dim(int axis) const {
  if (axis < 0 || axis >= ndim()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(shape_));
  }
  return shape_[static_cast<std::size_t>(axis)];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (element_count(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

MatrixMap Tensor::matrix() {
  require_rank(*this, 2, "matrix view");
  return MatrixMap(data_.data(), shape_[0], shape_[1]);
}

ConstMatrixMap Tensor::matrix() const {
  require_rank(*this, 2, "matrix view");
  return ConstMatrixMap(data_.data(), shape_[0], shape_[1]);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  if (a.empty()) return 0.0f;
  return (a.vector() - b.vector()).cwiseAbs().maxCoeff();
}

void ensure_finite(const Tensor& t, const char* where) {
  if (!t.all_finite()) throw NumericError(std::string(where) + ": non-finite value");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  const int m = a.dim(0);
  const int k = a.dim(1);
  const int n = b.dim(1);
  Tensor c({m, n});
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  float* pc = c.data().data();
  // i-t-j order: each c[i][j] still accumulates with t ascending, and the
  // inner loop vectorizes over j.
  for (int i = 0; i < m; ++i) {
    float* crow = pc + static_cast<std::size_t>(i) * n;
    for (int t = 0; t < k; ++t) {
      const float av = pa[static_cast<std::size_t>(i) * k + t];
      const float* brow = pb + static_cast<std::size_t>(t) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  ensure_finite(c, "matmul");
  return c;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  Tensor t({a.dim(1), a.dim(0)});
  t.matrix() = a.matrix().transpose();
  return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor c(a.shape());
  c.vector() = a.vector() + b.vector();
  ensure_finite(c, "add");
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor c(a.shape());
  c.vector() = a.vector() - b.vector();
  ensure_finite(c, "sub");
  return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor c(a.shape());
  c.vector() = a.vector().cwiseProduct(b.vector());
  ensure_finite(c, "mul");
  return c;
}

Tensor scale(const Tensor& a, float s) {
  Tensor c(a.shape());
  c.vector() = a.vector() * s;
  ensure_finite(c, "scale");
  return c;
}

Tensor add_row_broadcast(const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_row_broadcast");
  if (static_cast<int>(bias.size()) != x.dim(1)) {
    throw ShapeError("add_row_broadcast: bias " + to_string(bias.shape()) + " vs rows of " +
                     to_string(x.shape()));
  }
  Tensor c(x.shape());
  c.matrix() = x.matrix().rowwise() + bias.vector().transpose();
  ensure_finite(c, "add_row_broadcast");
  return c;
}

Tensor softmax_lastdim(const Tensor& x) {
  if (x.ndim() < 1) throw ShapeError("softmax_lastdim: empty shape");
  ensure_finite(x, "softmax_lastdim input");
  const int d = x.shape().back();
  const std::size_t rows = x.size() / static_cast<std::size_t>(d);
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const float* in = x.data().data() + r * d;
    float* out = y.data().data() + r * d;
    const float peak = *std::max_element(in, in + d);
    float total = 0.0f;
    for (int j = 0; j < d; ++j) {
      out[j] = std::exp(in[j] - peak);
      total += out[j];
    }
    const float inv = 1.0f / total;
    for (int j = 0; j < d; ++j) out[j] *= inv;
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  if (x.ndim() < 1) throw ShapeError("layer_norm: empty shape");
  if (eps <= 0.0f) throw std::invalid_argument("layer_norm: eps must be positive");
  const int d = x.shape().back();
  if (static_cast<int>(gain.size()) != d || static_cast<int>(bias.size()) != d) {
    throw ShapeError("layer_norm: gain/bias " + to_string(gain.shape()) + "/" + to_string(bias.shape()) +
                     " do not match last extent of " + to_string(x.shape()));
  }
  const std::size_t rows = x.size() / static_cast<std::size_t>(d);
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const float* in = x.data().data() + r * d;
    float* out = y.data().data() + r * d;
    float mu = 0.0f;
    for (int j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<float>(d);
    float var = 0.0f;
    for (int j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<float>(d);
    const float inv_std = 1.0f / std::sqrt(var + eps);
    for (int j = 0; j < d; ++j) out[j] = (in[j] - mu) * inv_std * gain[j] + bias[j];
  }
  ensure_finite(y, "layer_norm");
  return y;
}

Tensor gelu(const Tensor& x) {
  constexpr float k0 = 0.7978845608028654f;  // sqrt(2/pi)
  constexpr float k1 = 0.044715f;
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float v = x[i];
    y[i] = 0.5f * v * (1.0f + std::tanh(k0 * (v + k1 * v * v * v)));
  }
  ensure_finite(y, "gelu");
  return y;
}

Tensor logistic(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = 1.0f / (1.0f + std::exp(-x[i]));
  ensure_finite(y, "logistic");
  return y;
}

Tensor reshape(const Tensor& x, Shape shape) { return x.reshaped(std::move(shape)); }

Tensor slice_cols(const Tensor& x, int begin, int count) {
  require_rank(x, 2, "slice_cols");
  if (begin < 0 || count <= 0 || begin + count > x.dim(1)) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside " + to_string(x.shape()));
  }
  Tensor y({x.dim(0), count});
  y.matrix() = x.matrix().middleCols(begin, count);
  return y;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  const int rows = parts.front().dim(0);
  int cols = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != rows) throw ShapeError("concat_cols: row mismatch " + to_string(p.shape()));
    cols += p.dim(1);
  }
  Tensor y({rows, cols});
  int offset = 0;
  for (const auto& p : parts) {
    y.matrix().middleCols(offset, p.dim(1)) = p.matrix();
    offset += p.dim(1);
  }
  return y;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  const int cols = parts.front().dim(1);
  int rows = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_rows");
    if (p.dim(1) != cols) throw ShapeError("concat_rows: column mismatch " + to_string(p.shape()));
    rows += p.dim(0);
  }
  Tensor y({rows, cols});
  float* out = y.data().data();
  for (const auto& p : parts) out = std::copy(p.data().begin(), p.data().end(), out);
  return y;
}

PoolWindow adaptive_window(int index, int in_extent, int out_extent) {
  const int begin = (index * in_extent) / out_extent;
  const int end = ((index + 1) * in_extent + out_extent - 1) / out_extent;
  return {begin, end};
}

Tensor adaptive_avg_pool2d(const Tensor& x, int out_h, int out_w) {
  require_rank(x, 3, "adaptive_avg_pool2d");
  const int channels = x.dim(0);
  const int h = x.dim(1);
  const int w = x.dim(2);
  if (out_h < 1 || out_w < 1 || out_h > h || out_w > w) {
    throw ShapeError("adaptive_avg_pool2d: output " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                     " invalid for input " + to_string(x.shape()));
  }
  Tensor y({channels, out_h, out_w});
  for (int c = 0; c < channels; ++c) {
    for (int i = 0; i < out_h; ++i) {
      const PoolWindow rows = adaptive_window(i, h, out_h);
      for (int j = 0; j < out_w; ++j) {
        const PoolWindow cols = adaptive_window(j, w, out_w);
        float acc = 0.0f;
        for (int r = rows.begin; r < rows.end; ++r) {
          for (int s = cols.begin; s < cols.end; ++s) acc += x(c, r, s);
        }
        y(c, i, j) = acc / static_cast<float>((rows.end - rows.begin) * (cols.end - cols.begin));
      }
    }
  }
  return y;
}

namespace {

struct LinearTap {
  int lo;
  int hi;
  float frac;
};

LinearTap half_pixel_tap(int dst, int in_extent, int out_extent) {
  const float ratio = static_cast<float>(in_extent) / static_cast<float>(out_extent);
  float src = (static_cast<float>(dst) + 0.5f) * ratio - 0.5f;
  if (src < 0.0f) src = 0.0f;
  int lo = static_cast<int>(src);
  if (lo > in_extent - 1) lo = in_extent - 1;
  const int hi = std::min(lo + 1, in_extent - 1);
  return {lo, hi, src - static_cast<float>(lo)};
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, int out_h, int out_w) {
  require_rank(x, 3, "bilinear_resize");
  if (out_h < 1 || out_w < 1) {
    throw ShapeError("bilinear_resize: invalid output extents " + std::to_string(out_h) + "x" +
                     std::to_string(out_w));
  }
  const int channels = x.dim(0);
  const int h = x.dim(1);
  const int w = x.dim(2);
  if (out_h == h && out_w == w) return x;

  std::vector<LinearTap> row_taps(out_h);
  std::vector<LinearTap> col_taps(out_w);
  for (int i = 0; i < out_h; ++i) row_taps[i] = half_pixel_tap(i, h, out_h);
  for (int j = 0; j < out_w; ++j) col_taps[j] = half_pixel_tap(j, w, out_w);

  Tensor y({channels, out_h, out_w});
  for (int c = 0; c < channels; ++c) {
    for (int i = 0; i < out_h; ++i) {
      const LinearTap ry = row_taps[i];
      for (int j = 0; j < out_w; ++j) {
        const LinearTap rx = col_taps[j];
        const float top = x(c, ry.lo, rx.lo) * (1.0f - rx.frac) + x(c, ry.lo, rx.hi) * rx.frac;
        const float bottom = x(c, ry.hi, rx.lo) * (1.0f - rx.frac) + x(c, ry.hi, rx.hi) * rx.frac;
        y(c, i, j) = top * (1.0f - ry.frac) + bottom * ry.frac;
      }
    }
  }
  return y;
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernel) {
  require_rank(x, 3, "depthwise_conv2d");
  require_rank(kernel, 3, "depthwise_conv2d kernel");
  const int channels = x.dim(0);
  const int h = x.dim(1);
  const int w = x.dim(2);
  const int k = kernel.dim(1);
  if (kernel.dim(0) != channels || kernel.dim(2) != k) {
    throw ShapeError("depthwise_conv2d: kernel " + to_string(kernel.shape()) + " incompatible with " +
                     to_string(x.shape()));
  }
  if (k % 2 == 0) throw ShapeError("depthwise_conv2d: kernel size must be odd, got " + std::to_string(k));
  const int pad = (k - 1) / 2;
  Tensor y({channels, h, w});
  for (int c = 0; c < channels; ++c) {
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        float acc = 0.0f;
        for (int u = 0; u < k; ++u) {
          const int r = i + u - pad;
          if (r < 0 || r >= h) continue;
          for (int v = 0; v < k; ++v) {
            const int s = j + v - pad;
            if (s < 0 || s >= w) continue;
            acc += kernel(c, u, v) * x(c, r, s);
          }
        }
        y(c, i, j) = acc;
      }
    }
  }
  ensure_finite(y, "depthwise_conv2d");
  return y;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding) {
  require_rank(x, 3, "conv2d");
  if (weight.ndim() != 4 || weight.dim(1) != x.dim(0) || weight.dim(2) != weight.dim(3)) {
    throw ShapeError("conv2d: weight " + to_string(weight.shape()) + " incompatible with " +
                     to_string(x.shape()));
  }
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: invalid stride/padding");
  const int c_out = weight.dim(0);
  const int c_in = x.dim(0);
  const int k = weight.dim(2);
  const int h = x.dim(1);
  const int w = x.dim(2);
  const int out_h = (h + 2 * padding - k) / stride + 1;
  const int out_w = (w + 2 * padding - k) / stride + 1;
  if (out_h < 1 || out_w < 1) throw ShapeError("conv2d: empty output for " + to_string(x.shape()));
  if (static_cast<int>(bias.size()) != c_out) {
    throw ShapeError("conv2d: bias " + to_string(bias.shape()) + " vs " + std::to_string(c_out) + " outputs");
  }
  Tensor y({c_out, out_h, out_w});
  const float* pw = weight.data().data();
  for (int o = 0; o < c_out; ++o) {
    for (int i = 0; i < out_h; ++i) {
      for (int j = 0; j < out_w; ++j) {
        float acc = bias[o];
        for (int c = 0; c < c_in; ++c) {
          const float* wk = pw + ((static_cast<std::size_t>(o) * c_in + c) * k) * k;
          for (int u = 0; u < k; ++u) {
            const int r = i * stride + u - padding;
            if (r < 0 || r >= h) continue;
            for (int v = 0; v < k; ++v) {
              const int s = j * stride + v - padding;
              if (s < 0 || s >= w) continue;
              acc += wk[u * k + v] * x(c, r, s);
            }
          }
        }
        y(o, i, j) = acc;
      }
    }
  }
  ensure_finite(y, "conv2d");
  return y;
}

Tensor channel_project(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 3, "channel_project");
  if (weight.ndim() != 2 || weight.dim(0) != x.dim(0)) {
    throw ShapeError("channel_project: weight " + to_string(weight.shape()) + " incompatible with " +
                     to_string(x.shape()));
  }
  const int c_out = weight.dim(1);
  if (static_cast<int>(bias.size()) != c_out) {
    throw ShapeError("channel_project: bias " + to_string(bias.shape()) + " vs " + std::to_string(c_out));
  }
  const int h = x.dim(1);
  const int w = x.dim(2);
  const Tensor flat = x.reshaped({x.dim(0), h * w});
  Tensor projected = matmul(transpose(weight), flat);
  projected.matrix().colwise() += bias.vector();
  ensure_finite(projected, "channel_project");
  return projected.reshaped({c_out, h, w});
}

double sum(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  return acc;
}

double mean(const Tensor& x) { return sum(x) / static_cast<double>(x.size()); }

}  // namespace agentsod
