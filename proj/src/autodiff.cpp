#include "agentsod/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace agentsod {

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("Var: not attached to a tape");
  return tape_->value(id_);
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor(), nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, Backward backward) {
  nodes_.push_back(Node{std::move(value), Tensor(), std::move(backward), false});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(const Var& v, const Tensor& grad) {
  Node& node = nodes_[v.id()];
  if (grad.shape() != node.value.shape()) {
    throw ShapeError("gradient shape " + to_string(grad.shape()) + " does not match value " +
                     to_string(node.value.shape()));
  }
  if (node.grad.empty()) {
    node.grad = grad;
  } else {
    node.grad.vector() += grad.vector();
  }
}

Tensor Tape::grad(const Var& v) const {
  const Node& node = nodes_[v.id()];
  if (node.grad.empty()) return Tensor::zeros(node.value.shape());
  return node.grad;
}

void backward(Tape& tape, const Var& loss) {
  if (loss.tape() != &tape) throw std::invalid_argument("backward: loss recorded on another tape");
  if (loss.value().size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + to_string(loss.shape()));
  }
  for (auto& node : tape.nodes_) node.grad = Tensor();
  tape.replay_order_.clear();
  tape.nodes_[loss.id()].grad = Tensor::ones(loss.shape());
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    auto& node = tape.nodes_[id];
    if (node.leaf || node.grad.empty()) continue;
    tape.replay_order_.push_back(id);
    node.backward(tape, node.grad);
  }
}

Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, float h) {
  if (!(h > 0.0f)) throw std::invalid_argument("finite_difference_grad: h must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float original = x[i];
    const float plus = original + h;
    const float minus = original - h;
    probe[i] = plus;
    const double f_plus = f(probe);
    probe[i] = minus;
    const double f_minus = f(probe);
    probe[i] = original;
    grad[i] = static_cast<float>((f_plus - f_minus) / (static_cast<double>(plus) - minus));
  }
  return grad;
}

double relative_error(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("relative_error: shape mismatch");
  double diff = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    diff += d * d;
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  if (denom == 0.0) return 0.0;
  return std::sqrt(diff) / denom;
}

namespace {

Tape& same_tape(const Var& a, const Var& b) {
  if (!a.tape() || a.tape() != b.tape()) throw std::invalid_argument("operands recorded on different tapes");
  return *a.tape();
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b);
  return tape.record(matmul(a.value(), b.value()), [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, matmul(g, transpose(b.value())));
    t.accumulate(b, matmul(transpose(a.value()), g));
  });
}

Var transpose(const Var& a) {
  return a.tape()->record(transpose(a.value()), [a](Tape& t, const Tensor& g) { t.accumulate(a, transpose(g)); });
}

Var add(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b);
  return tape.record(add(a.value(), b.value()), [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b);
  return tape.record(sub(a.value(), b.value()), [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, scale(g, -1.0f));
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b);
  return tape.record(mul(a.value(), b.value()), [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, mul(g, b.value()));
    t.accumulate(b, mul(g, a.value()));
  });
}

Var scale(const Var& a, float s) {
  return a.tape()->record(scale(a.value(), s), [a, s](Tape& t, const Tensor& g) { t.accumulate(a, scale(g, s)); });
}

Var add_row_broadcast(const Var& x, const Var& bias) {
  Tape& tape = same_tape(x, bias);
  return tape.record(add_row_broadcast(x.value(), bias.value()), [x, bias](Tape& t, const Tensor& g) {
    t.accumulate(x, g);
    Tensor gb(bias.shape());
    gb.vector() = g.matrix().colwise().sum().transpose();
    t.accumulate(bias, gb);
  });
}

Var softmax_lastdim(const Var& x) {
  Tape& tape = *x.tape();
  const std::size_t out_id = tape.size();
  // The adjoint reads the recorded output by id instead of holding a copy.
  return tape.record(softmax_lastdim(x.value()), [x, out_id](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(out_id);
    const int d = y.shape().back();
    const std::size_t rows = y.size() / static_cast<std::size_t>(d);
    Tensor gx(y.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      const float* py = y.data().data() + r * d;
      const float* pg = g.data().data() + r * d;
      float dot = 0.0f;
      for (int j = 0; j < d; ++j) dot += pg[j] * py[j];
      float* px = gx.data().data() + r * d;
      for (int j = 0; j < d; ++j) px[j] = py[j] * (pg[j] - dot);
    }
    t.accumulate(x, gx);
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, float eps) {
  Tape& tape = same_tape(x, gain);
  same_tape(x, bias);
  return tape.record(layer_norm(x.value(), gain.value(), bias.value(), eps),
                     [x, gain, bias, eps](Tape& t, const Tensor& g) {
                       const Tensor& xv = x.value();
                       const Tensor& gv = gain.value();
                       const int d = xv.shape().back();
                       const std::size_t rows = xv.size() / static_cast<std::size_t>(d);
                       Tensor gx(xv.shape());
                       Tensor g_gain(gain.shape());
                       Tensor g_bias(bias.shape());
                       std::vector<float> xhat(d);
                       std::vector<float> dxhat(d);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const float* in = xv.data().data() + r * d;
                         const float* go = g.data().data() + r * d;
                         float mu = 0.0f;
                         for (int j = 0; j < d; ++j) mu += in[j];
                         mu /= static_cast<float>(d);
                         float var = 0.0f;
                         for (int j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
                         var /= static_cast<float>(d);
                         const float inv_std = 1.0f / std::sqrt(var + eps);
                         float mean_dxhat = 0.0f;
                         float mean_dxhat_xhat = 0.0f;
                         for (int j = 0; j < d; ++j) {
                           xhat[j] = (in[j] - mu) * inv_std;
                           dxhat[j] = go[j] * gv[j];
                           mean_dxhat += dxhat[j];
                           mean_dxhat_xhat += dxhat[j] * xhat[j];
                           g_gain[j] += go[j] * xhat[j];
                           g_bias[j] += go[j];
                         }
                         mean_dxhat /= static_cast<float>(d);
                         mean_dxhat_xhat /= static_cast<float>(d);
                         float* out = gx.data().data() + r * d;
                         for (int j = 0; j < d; ++j) {
                           out[j] = inv_std * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                         }
                       }
                       t.accumulate(x, gx);
                       t.accumulate(gain, g_gain);
                       t.accumulate(bias, g_bias);
                     });
}

Var gelu(const Var& x) {
  return x.tape()->record(gelu(x.value()), [x](Tape& t, const Tensor& g) {
    constexpr float k0 = 0.7978845608028654f;
    constexpr float k1 = 0.044715f;
    const Tensor& xv = x.value();
    Tensor gx(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const float v = xv[i];
      const float inner = k0 * (v + k1 * v * v * v);
      const float th = std::tanh(inner);
      const float d_inner = k0 * (1.0f + 3.0f * k1 * v * v);
      const float d = 0.5f * (1.0f + th) + 0.5f * v * (1.0f - th * th) * d_inner;
      gx[i] = g[i] * d;
    }
    t.accumulate(x, gx);
  });
}

Var logistic(const Var& x) {
  Tensor y = logistic(x.value());
  Tensor dy(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dy[i] = y[i] * (1.0f - y[i]);
  return x.tape()->record(std::move(y), [x, dy = std::move(dy)](Tape& t, const Tensor& g) {
    t.accumulate(x, mul(g, dy));
  });
}

Var reshape(const Var& x, Shape shape) {
  return x.tape()->record(x.value().reshaped(std::move(shape)),
                          [x](Tape& t, const Tensor& g) { t.accumulate(x, g.reshaped(x.shape())); });
}

Var slice_cols(const Var& x, int begin, int count) {
  return x.tape()->record(slice_cols(x.value(), begin, count), [x, begin, count](Tape& t, const Tensor& g) {
    Tensor gx(x.shape());
    gx.matrix().middleCols(begin, count) = g.matrix();
    t.accumulate(x, gx);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (const auto& p : parts) {
    same_tape(parts.front(), p);
    values.push_back(p.value());
  }
  return parts.front().tape()->record(concat_cols(values), [parts](Tape& t, const Tensor& g) {
    int offset = 0;
    for (const auto& p : parts) {
      t.accumulate(p, slice_cols(g, offset, p.dim(1)));
      offset += p.dim(1);
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (const auto& p : parts) {
    same_tape(parts.front(), p);
    values.push_back(p.value());
  }
  return parts.front().tape()->record(concat_rows(values), [parts](Tape& t, const Tensor& g) {
    const float* src = g.data().data();
    for (const auto& p : parts) {
      Tensor gp(p.shape());
      std::copy(src, src + gp.size(), gp.data().begin());
      src += gp.size();
      t.accumulate(p, gp);
    }
  });
}

Var adaptive_avg_pool2d(const Var& x, int out_h, int out_w) {
  return x.tape()->record(adaptive_avg_pool2d(x.value(), out_h, out_w), [x, out_h, out_w](Tape& t, const Tensor& g) {
    const int channels = x.dim(0);
    const int h = x.dim(1);
    const int w = x.dim(2);
    Tensor gx(x.shape());
    for (int c = 0; c < channels; ++c) {
      for (int i = 0; i < out_h; ++i) {
        const PoolWindow rows = adaptive_window(i, h, out_h);
        for (int j = 0; j < out_w; ++j) {
          const PoolWindow cols = adaptive_window(j, w, out_w);
          const float share =
              g(c, i, j) / static_cast<float>((rows.end - rows.begin) * (cols.end - cols.begin));
          for (int r = rows.begin; r < rows.end; ++r) {
            for (int s = cols.begin; s < cols.end; ++s) gx(c, r, s) += share;
          }
        }
      }
    }
    t.accumulate(x, gx);
  });
}

Var depthwise_conv2d(const Var& x, const Var& kernel) {
  Tape& tape = same_tape(x, kernel);
  return tape.record(depthwise_conv2d(x.value(), kernel.value()), [x, kernel](Tape& t, const Tensor& g) {
    const Tensor& xv = x.value();
    const Tensor& kv = kernel.value();
    const int channels = xv.dim(0);
    const int h = xv.dim(1);
    const int w = xv.dim(2);
    const int k = kv.dim(1);
    const int pad = (k - 1) / 2;
    Tensor gx(xv.shape());
    Tensor gk(kv.shape());
    for (int c = 0; c < channels; ++c) {
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          const float go = g(c, i, j);
          for (int u = 0; u < k; ++u) {
            const int r = i + u - pad;
            if (r < 0 || r >= h) continue;
            for (int v = 0; v < k; ++v) {
              const int s = j + v - pad;
              if (s < 0 || s >= w) continue;
              gx(c, r, s) += kv(c, u, v) * go;
              gk(c, u, v) += xv(c, r, s) * go;
            }
          }
        }
      }
    }
    t.accumulate(x, gx);
    t.accumulate(kernel, gk);
  });
}

Var sum_all(const Var& x) {
  Tensor s({1}, static_cast<float>(sum(x.value())));
  return x.tape()->record(std::move(s), [x](Tape& t, const Tensor& g) {
    t.accumulate(x, Tensor(x.shape(), g[0]));
  });
}

Var weighted_sum(const Var& x, const Tensor& weights) {
  if (weights.shape() != x.shape()) {
    throw ShapeError("weighted_sum: weights " + to_string(weights.shape()) + " vs " + to_string(x.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) acc += static_cast<double>(x.value()[i]) * weights[i];
  Tensor s({1}, static_cast<float>(acc));
  return x.tape()->record(std::move(s), [x, weights](Tape& t, const Tensor& g) {
    t.accumulate(x, scale(weights, g[0]));
  });
}

}  // namespace agentsod
