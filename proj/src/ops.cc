// Copyright 2026 The auxstep Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "auxstep/ops.h"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <initializer_list>
#include <memory>
#include <string>

#include "auxstep/error.h"

namespace auxstep::ops {
namespace {

// y[k, n] += a[m, k]^T g[m, n]
void matmul_tn_acc(const double* a, const double* g, double* y, std::size_t m,
                   std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    double* yr = y + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double s = a[i * k + p];
      const double* gr = g + i * n;
      for (std::size_t j = 0; j < n; ++j) yr[j] += s * gr[j];
    }
  }
}

// y[m, k] += g[m, n] x[k, n]^T. Four interleaved partial sums combined in a
// fixed order keep the result independent of buffer alignment.
void matmul_nt_acc(const double* g, const double* x, double* y, std::size_t m,
                   std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* gr = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* xr = x + p * n;
      double acc[4] = {0.0, 0.0, 0.0, 0.0};
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        for (std::size_t l = 0; l < 4; ++l) acc[l] += gr[j + l] * xr[j + l];
      }
      for (; j < n; ++j) acc[0] += gr[j] * xr[j];
      y[i * k + p] += (acc[0] + acc[1]) + (acc[2] + acc[3]);
    }
  }
}

[[noreturn]] void shape_error(std::string_view op, const Shape& a,
                              const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) +
                   " vs " + shape_string(b));
}

[[noreturn]] void shape_error(std::string_view op, const Shape& a,
                              const std::string& rule) {
  throw ShapeError(std::string(op) + ": invalid shape " + shape_string(a) +
                   " (" + rule + ")");
}

void require_defined(std::string_view op, const Tensor& t) {
  if (!t.defined()) {
    throw ValidationError(std::string(op) + ": undefined operand");
  }
}

// Wraps forward values into a tensor and records it when a tape is active
// and some input requires grad.
Tensor emit(std::string_view op, Shape shape, std::vector<double> data,
            std::initializer_list<Tensor> inputs, Tape::BackwardFn backward) {
  Tensor out(std::move(shape), std::move(data));
#ifndef NDEBUG
  for (double v : out.data()) {
    assert(std::isfinite(v) && "non-finite forward value");
  }
#endif
  Tape* tape = Tape::active();
  if (tape == nullptr) return out;
  bool needs_grad = false;
  for (const Tensor& t : inputs) needs_grad = needs_grad || t.requires_grad();
  if (!needs_grad) return out;
  out.set_requires_grad(true);
  std::vector<std::shared_ptr<TensorImpl>> impls;
  impls.reserve(inputs.size());
  for (const Tensor& t : inputs) impls.push_back(t.impl());
  tape->record(op, std::move(impls), out.impl(), std::move(backward));
  return out;
}

void require_same_shape(std::string_view op, const Tensor& a,
                        const Tensor& b) {
  require_defined(op, a);
  require_defined(op, b);
  if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
}

// Elementwise map with derivative expressed through input x and output y.
template <class Forward, class Derivative>
Tensor unary(std::string_view op, const Tensor& x, Forward forward,
             Derivative derivative) {
  require_defined(op, x);
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(in[i]);
  return emit(op, x.shape(), std::move(out), {x},
              [derivative](const TensorImpl& y,
                           std::span<const std::shared_ptr<TensorImpl>> in) {
                double* gx = grad_target(*in[0]);
                if (gx == nullptr) return;
                const auto& xs = in[0]->data;
                for (std::size_t i = 0; i < xs.size(); ++i) {
                  gx[i] += y.grad[i] * derivative(xs[i], y.data[i]);
                }
              });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

std::size_t channel_axis(std::size_t rank) { return rank == 4 ? 1 : 0; }

std::size_t product(const Shape& shape, std::size_t begin, std::size_t end) {
  std::size_t p = 1;
  for (std::size_t i = begin; i < end; ++i) p *= shape[i];
  return p;
}

}  // namespace

void matmul_acc(const double* a, const double* b, double* y, std::size_t m,
                std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* yr = y + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = a[i * k + p];
      const double* br = b + p * n;
      for (std::size_t j = 0; j < n; ++j) yr[j] += s * br[j];
    }
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  return emit("add", a.shape(), std::move(out), {a, b},
              [](const TensorImpl& y,
                 std::span<const std::shared_ptr<TensorImpl>> in) {
                for (int k = 0; k < 2; ++k) {
                  if (double* g = grad_target(*in[k])) {
                    for (std::size_t i = 0; i < y.grad.size(); ++i) {
                      g[i] += y.grad[i];
                    }
                  }
                }
              });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  return emit("sub", a.shape(), std::move(out), {a, b},
              [](const TensorImpl& y,
                 std::span<const std::shared_ptr<TensorImpl>> in) {
                if (double* ga = grad_target(*in[0])) {
                  for (std::size_t i = 0; i < y.grad.size(); ++i) {
                    ga[i] += y.grad[i];
                  }
                }
                if (double* gb = grad_target(*in[1])) {
                  for (std::size_t i = 0; i < y.grad.size(); ++i) {
                    gb[i] -= y.grad[i];
                  }
                }
              });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  return emit("mul", a.shape(), std::move(out), {a, b},
              [](const TensorImpl& y,
                 std::span<const std::shared_ptr<TensorImpl>> in) {
                const auto& av = in[0]->data;
                const auto& bv = in[1]->data;
                if (double* ga = grad_target(*in[0])) {
                  for (std::size_t i = 0; i < y.grad.size(); ++i) {
                    ga[i] += y.grad[i] * bv[i];
                  }
                }
                if (double* gb = grad_target(*in[1])) {
                  for (std::size_t i = 0; i < y.grad.size(); ++i) {
                    gb[i] += y.grad[i] * av[i];
                  }
                }
              });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      "add_scalar", x, [value](double v) { return v + value; },
      [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double value) {
  return unary(
      "mul_scalar", x, [value](double v) { return v * value; },
      [value](double, double) { return value; });
}

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_defined("affine", x);
  require_defined("affine", weight);
  if (weight.rank() != 2) {
    shape_error("affine", weight.shape(), "weight must be [out, in]");
  }
  const std::size_t out_ch = weight.shape()[0];
  const std::size_t in_ch = weight.shape()[1];
  if (bias.defined() && bias.shape() != Shape{out_ch}) {
    shape_error("affine", bias.shape(), Shape{out_ch});
  }
  const std::size_t rank = x.rank();
  if (rank < 1 || rank > 4) {
    shape_error("affine", x.shape(), "input rank must be 1 to 4");
  }
  const std::size_t axis = channel_axis(rank);
  if (x.shape()[axis] != in_ch) shape_error("affine", x.shape(), weight.shape());

  const std::size_t batch = rank == 4 ? x.shape()[0] : 1;
  const std::size_t spatial = product(x.shape(), axis + 1, rank);
  Shape out_shape = x.shape();
  out_shape[axis] = out_ch;

  std::vector<double> out(batch * out_ch * spatial, 0.0);
  const double* w = weight.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    double* yb = out.data() + b * out_ch * spatial;
    matmul_acc(w, x.data().data() + b * in_ch * spatial, yb, out_ch, in_ch,
               spatial);
    if (bias.defined()) {
      for (std::size_t o = 0; o < out_ch; ++o) {
        const double bo = bias.data()[o];
        for (std::size_t j = 0; j < spatial; ++j) yb[o * spatial + j] += bo;
      }
    }
  }

  auto backward = [batch, in_ch, out_ch, spatial](
                      const TensorImpl& y,
                      std::span<const std::shared_ptr<TensorImpl>> in) {
    const double* w = in[1]->data.data();
    double* gx = grad_target(*in[0]);
    double* gw = grad_target(*in[1]);
    double* gb = in.size() > 2 ? grad_target(*in[2]) : nullptr;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* gy = y.grad.data() + b * out_ch * spatial;
      if (gx != nullptr) {
        matmul_tn_acc(w, gy, gx + b * in_ch * spatial, out_ch, in_ch, spatial);
      }
      if (gw != nullptr) {
        matmul_nt_acc(gy, in[0]->data.data() + b * in_ch * spatial, gw, out_ch,
                      in_ch, spatial);
      }
      if (gb != nullptr) {
        const double* g = gy;
        for (std::size_t o = 0; o < out_ch; ++o) {
          double acc = 0.0;
          for (std::size_t j = 0; j < spatial; ++j) acc += g[o * spatial + j];
          gb[o] += acc;
        }
      }
    }
  };
  if (bias.defined()) {
    return emit("affine", std::move(out_shape), std::move(out),
                {x, weight, bias}, backward);
  }
  return emit("affine", std::move(out_shape), std::move(out), {x, weight},
              backward);
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x, stable_sigmoid,
               [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
  return unary("softplus", x, stable_softplus,
               [](double v, double) { return stable_sigmoid(v); });
}

Tensor log(const Tensor& x) {
  return unary(
      "log", x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor abs(const Tensor& x) {
  return unary(
      "abs", x, [](double v) { return std::abs(v); },
      [](double v, double) {
        return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
      });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) throw ValidationError("clamp: lo must not exceed hi");
  return unary(
      "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  require_defined("log_softmax", x);
  if (axis >= x.rank()) {
    shape_error("log_softmax", x.shape(),
                "axis " + std::to_string(axis) + " out of range");
  }
  const Shape& s = x.shape();
  const std::size_t outer = product(s, 0, axis);
  const std::size_t dim = s[axis];
  const std::size_t inner = product(s, axis + 1, s.size());
  const auto in = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * dim * inner + i;
      double peak = in[base];
      for (std::size_t k = 1; k < dim; ++k) {
        peak = std::max(peak, in[base + k * inner]);
      }
      double total = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        total += std::exp(in[base + k * inner] - peak);
      }
      const double lse = peak + std::log(total);
      for (std::size_t k = 0; k < dim; ++k) {
        out[base + k * inner] = in[base + k * inner] - lse;
      }
    }
  }
  return emit("log_softmax", s, std::move(out), {x},
              [outer, dim, inner](
                  const TensorImpl& y,
                  std::span<const std::shared_ptr<TensorImpl>> in) {
                double* gx = grad_target(*in[0]);
                if (gx == nullptr) return;
                for (std::size_t o = 0; o < outer; ++o) {
                  for (std::size_t i = 0; i < inner; ++i) {
                    const std::size_t base = o * dim * inner + i;
                    double gsum = 0.0;
                    for (std::size_t k = 0; k < dim; ++k) {
                      gsum += y.grad[base + k * inner];
                    }
                    for (std::size_t k = 0; k < dim; ++k) {
                      const std::size_t j = base + k * inner;
                      gx[j] += y.grad[j] - std::exp(y.data[j]) * gsum;
                    }
                  }
                }
              });
}

Tensor mean(const Tensor& x, const std::vector<std::size_t>& axes) {
  require_defined("mean", x);
  const Shape& s = x.shape();
  std::vector<bool> reduced(s.size(), false);
  for (std::size_t a : axes) {
    if (a >= s.size()) {
      shape_error("mean", s, "axis " + std::to_string(a) + " out of range");
    }
    reduced[a] = true;
  }
  Shape out_shape;
  std::size_t count = 1;
  for (std::size_t d = 0; d < s.size(); ++d) {
    if (reduced[d]) {
      count *= s[d];
    } else {
      out_shape.push_back(s[d]);
    }
  }
  // Trailing reduced axes: each output sums one contiguous block, in the same
  // order as the general path below.
  const std::size_t first_reduced =
      static_cast<std::size_t>(std::find(reduced.begin(), reduced.end(), true) -
                               reduced.begin());
  if (std::all_of(reduced.begin() + first_reduced, reduced.end(),
                  [](bool r) { return r; })) {
    const std::size_t n_out = shape_numel(out_shape);
    std::vector<double> out(n_out, 0.0);
    const auto in = x.data();
    for (std::size_t o = 0; o < n_out; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < count; ++i) acc += in[o * count + i];
      out[o] = acc;
    }
    const double inv = 1.0 / static_cast<double>(count);
    for (double& v : out) v *= inv;
    return emit("mean", std::move(out_shape), std::move(out), {x},
                [count, inv](const TensorImpl& y,
                             std::span<const std::shared_ptr<TensorImpl>> in) {
                  double* gx = grad_target(*in[0]);
                  if (gx == nullptr) return;
                  for (std::size_t o = 0; o < y.grad.size(); ++o) {
                    const double g = y.grad[o] * inv;
                    for (std::size_t i = 0; i < count; ++i) gx[o * count + i] += g;
                  }
                });
  }
  // Output stride of each input axis (0 for reduced axes).
  std::vector<std::size_t> out_stride(s.size(), 0);
  std::size_t stride = 1;
  for (std::size_t d = s.size(); d-- > 0;) {
    if (!reduced[d]) {
      out_stride[d] = stride;
      stride *= s[d];
    }
  }
  auto index_map = std::make_shared<std::vector<std::size_t>>(x.numel());
  std::vector<std::size_t> idx(s.size(), 0);
  for (std::size_t flat = 0; flat < x.numel(); ++flat) {
    std::size_t o = 0;
    for (std::size_t d = 0; d < s.size(); ++d) o += idx[d] * out_stride[d];
    (*index_map)[flat] = o;
    for (std::size_t d = s.size(); d-- > 0;) {
      if (++idx[d] < s[d]) break;
      idx[d] = 0;
    }
  }
  std::vector<double> out(shape_numel(out_shape), 0.0);
  const auto in = x.data();
  for (std::size_t flat = 0; flat < in.size(); ++flat) {
    out[(*index_map)[flat]] += in[flat];
  }
  const double inv = 1.0 / static_cast<double>(count);
  for (double& v : out) v *= inv;
  return emit("mean", std::move(out_shape), std::move(out), {x},
              [index_map, inv](
                  const TensorImpl& y,
                  std::span<const std::shared_ptr<TensorImpl>> in) {
                double* gx = grad_target(*in[0]);
                if (gx == nullptr) return;
                for (std::size_t flat = 0; flat < index_map->size(); ++flat) {
                  gx[flat] += y.grad[(*index_map)[flat]] * inv;
                }
              });
}

Tensor spatial_mean(const Tensor& x) {
  require_defined("spatial_mean", x);
  if (x.rank() < 2) shape_error("spatial_mean", x.shape(), "rank must be >= 2");
  return mean(x, {x.rank() - 2, x.rank() - 1});
}

Tensor sum(const Tensor& x) {
  require_defined("sum", x);
  double total = 0.0;
  for (double v : x.data()) total += v;
  return emit("sum", Shape{}, {total}, {x},
              [](const TensorImpl& y,
                 std::span<const std::shared_ptr<TensorImpl>> in) {
                double* gx = grad_target(*in[0]);
                if (gx == nullptr) return;
                for (std::size_t i = 0; i < in[0]->data.size(); ++i) {
                  gx[i] += y.grad[0];
                }
              });
}

Tensor mean(const Tensor& x) {
  require_defined("mean", x);
  return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor upsample_nearest2x(const Tensor& x) {
  require_defined("upsample_nearest2x", x);
  if (x.rank() < 2) {
    shape_error("upsample_nearest2x", x.shape(), "rank must be >= 2");
  }
  const Shape& s = x.shape();
  const std::size_t h = s[s.size() - 2];
  const std::size_t w = s[s.size() - 1];
  const std::size_t planes = x.numel() / (h * w);
  Shape out_shape = s;
  out_shape[s.size() - 2] = 2 * h;
  out_shape[s.size() - 1] = 2 * w;
  std::vector<double> out(4 * x.numel());
  const auto in = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = in.data() + p * h * w;
    double* dst = out.data() + p * 4 * h * w;
    for (std::size_t r = 0; r < 2 * h; ++r) {
      const double* row = src + (r / 2) * w;
      double* orow = dst + r * 2 * w;
      for (std::size_t c = 0; c < w; ++c) {
        orow[2 * c] = row[c];
        orow[2 * c + 1] = row[c];
      }
    }
  }
  return emit("upsample_nearest2x", std::move(out_shape), std::move(out), {x},
              [planes, h, w](const TensorImpl& y,
                             std::span<const std::shared_ptr<TensorImpl>> in) {
                double* gx = grad_target(*in[0]);
                if (gx == nullptr) return;
                for (std::size_t p = 0; p < planes; ++p) {
                  const double* gy = y.grad.data() + p * 4 * h * w;
                  double* g = gx + p * h * w;
                  for (std::size_t r = 0; r < 2 * h; ++r) {
                    const double* grow = gy + r * 2 * w;
                    double* dst = g + (r / 2) * w;
                    for (std::size_t c = 0; c < w; ++c) {
                      dst[c] += grow[2 * c] + grow[2 * c + 1];
                    }
                  }
                }
              });
}

Tensor avg_pool2x2(const Tensor& x) {
  require_defined("avg_pool2x2", x);
  if (x.rank() < 2) shape_error("avg_pool2x2", x.shape(), "rank must be >= 2");
  const Shape& s = x.shape();
  const std::size_t h = s[s.size() - 2];
  const std::size_t w = s[s.size() - 1];
  if (h % 2 != 0 || w % 2 != 0) {
    shape_error("avg_pool2x2", s, "spatial extents must be even");
  }
  const std::size_t planes = x.numel() / (h * w);
  Shape out_shape = s;
  out_shape[s.size() - 2] = h / 2;
  out_shape[s.size() - 1] = w / 2;
  std::vector<double> out(x.numel() / 4);
  const auto in = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = in.data() + p * h * w;
    double* dst = out.data() + p * (h / 2) * (w / 2);
    for (std::size_t r = 0; r < h / 2; ++r) {
      for (std::size_t c = 0; c < w / 2; ++c) {
        const double* a = src + 2 * r * w + 2 * c;
        dst[r * (w / 2) + c] = 0.25 * (a[0] + a[1] + a[w] + a[w + 1]);
      }
    }
  }
  return emit("avg_pool2x2", std::move(out_shape), std::move(out), {x},
              [planes, h, w](const TensorImpl& y,
                             std::span<const std::shared_ptr<TensorImpl>> in) {
                double* gx = grad_target(*in[0]);
                if (gx == nullptr) return;
                for (std::size_t p = 0; p < planes; ++p) {
                  const double* gy = y.grad.data() + p * (h / 2) * (w / 2);
                  double* g = gx + p * h * w;
                  for (std::size_t r = 0; r < h / 2; ++r) {
                    for (std::size_t c = 0; c < w / 2; ++c) {
                      const double v = 0.25 * gy[r * (w / 2) + c];
                      double* a = g + 2 * r * w + 2 * c;
                      a[0] += v;
                      a[1] += v;
                      a[w] += v;
                      a[w + 1] += v;
                    }
                  }
                }
              });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined("reshape", x);
  if (shape_numel(shape) != x.numel()) shape_error("reshape", x.shape(), shape);
  std::vector<double> out(x.data().begin(), x.data().end());
  return emit("reshape", std::move(shape), std::move(out), {x},
              [](const TensorImpl& y,
                 std::span<const std::shared_ptr<TensorImpl>> in) {
                double* gx = grad_target(*in[0]);
                if (gx == nullptr) return;
                for (std::size_t i = 0; i < y.grad.size(); ++i) {
                  gx[i] += y.grad[i];
                }
              });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ValidationError("concat_channels: no operands");
  for (const Tensor& p : parts) require_defined("concat_channels", p);
  const Shape& first = parts.front().shape();
  if (first.empty()) shape_error("concat_channels", first, "rank must be >= 1");
  const std::size_t axis = channel_axis(first.size());
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) shape_error("concat_channels", first, s);
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) shape_error("concat_channels", first, s);
    }
    out_shape[axis] += s[axis];
  }
  const std::size_t outer = product(first, 0, axis);
  const std::size_t inner = product(first, axis + 1, first.size());
  auto blocks = std::make_shared<std::vector<std::size_t>>();
  for (const Tensor& p : parts) blocks->push_back(p.shape()[axis] * inner);
  const std::size_t out_block = out_shape[axis] * inner;

  std::vector<double> out(outer * out_block);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.data() + o * (*blocks)[k], (*blocks)[k],
                  out.data() + o * out_block + offset);
    }
    offset += (*blocks)[k];
  }

  Tensor result(std::move(out_shape), std::move(out));
  Tape* tape = Tape::active();
  bool needs_grad = false;
  for (const Tensor& p : parts) needs_grad = needs_grad || p.requires_grad();
  if (tape == nullptr || !needs_grad) return result;
  result.set_requires_grad(true);
  std::vector<std::shared_ptr<TensorImpl>> impls;
  for (const Tensor& p : parts) impls.push_back(p.impl());
  tape->record("concat_channels", std::move(impls), result.impl(),
               [blocks, outer, out_block](
                   const TensorImpl& y,
                   std::span<const std::shared_ptr<TensorImpl>> in) {
                 std::size_t offset = 0;
                 for (std::size_t k = 0; k < in.size(); ++k) {
                   if (double* g = grad_target(*in[k])) {
                     for (std::size_t o = 0; o < outer; ++o) {
                       const double* src =
                           y.grad.data() + o * out_block + offset;
                       double* dst = g + o * (*blocks)[k];
                       for (std::size_t i = 0; i < (*blocks)[k]; ++i) {
                         dst[i] += src[i];
                       }
                     }
                   }
                   offset += (*blocks)[k];
                 }
               });
  return result;
}

Tensor index_batch(const Tensor& x, std::size_t index) {
  require_defined("index_batch", x);
  if (x.rank() < 1) shape_error("index_batch", x.shape(), "rank must be >= 1");
  if (index >= x.shape()[0]) {
    shape_error("index_batch", x.shape(),
                "index " + std::to_string(index) + " out of range");
  }
  const std::size_t block = x.numel() / x.shape()[0];
  Shape out_shape(x.shape().begin() + 1, x.shape().end());
  std::vector<double> out(x.data().begin() + index * block,
                          x.data().begin() + (index + 1) * block);
  return emit("index_batch", std::move(out_shape), std::move(out), {x},
              [index, block](const TensorImpl& y,
                             std::span<const std::shared_ptr<TensorImpl>> in) {
                double* gx = grad_target(*in[0]);
                if (gx == nullptr) return;
                for (std::size_t i = 0; i < block; ++i) {
                  gx[index * block + i] += y.grad[i];
                }
              });
}

Tensor masked_sum(const Tensor& x, const Mask& mask) {
  require_defined("masked_sum", x);
  if (mask.size() != x.numel()) shape_error("masked_sum", x.shape(), mask.shape);
  auto selected = std::make_shared<std::vector<std::uint8_t>>(mask.values);
  double total = 0.0;
  const auto in = x.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if ((*selected)[i]) total += in[i];
  }
  return emit("masked_sum", Shape{}, {total}, {x},
              [selected](const TensorImpl& y,
                         std::span<const std::shared_ptr<TensorImpl>> in) {
                double* gx = grad_target(*in[0]);
                if (gx == nullptr) return;
                for (std::size_t i = 0; i < selected->size(); ++i) {
                  if ((*selected)[i]) gx[i] += y.grad[0];
                }
              });
}

Tensor masked_mean(const Tensor& x, const Mask& mask) {
  require_defined("masked_mean", x);
  if (mask.size() != x.numel()) {
    shape_error("masked_mean", x.shape(), mask.shape);
  }
  const std::size_t n = mask.count();
  if (n == 0) throw ValidationError("masked_mean: mask selects no elements");
  return mul_scalar(masked_sum(x, mask), 1.0 / static_cast<double>(n));
}

}  // namespace auxstep::ops
