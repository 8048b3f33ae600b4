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

// Differentiable primitives. Every function throws ShapeError naming the
// primitive and the offending shapes when its shape rule is violated.

#ifndef AUXSTEP_OPS_H_
#define AUXSTEP_OPS_H_

#include <cstddef>
#include <vector>

#include "auxstep/tensor.h"

namespace auxstep::ops {

// Row-major y[m, n] += a[m, k] b[k, n]. Each output accumulates over k in
// ascending order, so results never depend on buffer alignment.
void matmul_acc(const double* a, const double* b, double* y, std::size_t m,
                std::size_t k, std::size_t n);

// Elementwise; operands must have identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& x, double value);
Tensor mul_scalar(const Tensor& x, double value);

// y = W x + b along the channel axis. weight is [out, in], bias is [out] or
// undefined. Accepted inputs:
//   [in]            -> [out]
//   [in, N]         -> [out, N]
//   [in, H, W]      -> [out, H, W]
//   [B, in, H, W]   -> [B, out, H, W]
Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
// ln(1 + e^x), evaluated without overflow.
Tensor softplus(const Tensor& x);
// Natural log; inputs must be positive.
Tensor log(const Tensor& x);
// Subgradient 0 at x == 0.
Tensor abs(const Tensor& x);
// Gradient passes only where lo < x < hi.
Tensor clamp(const Tensor& x, double lo, double hi);

// Log-softmax along `axis`.
Tensor log_softmax(const Tensor& x, std::size_t axis);

// Mean over the listed axes; those axes are removed from the result.
Tensor mean(const Tensor& x, const std::vector<std::size_t>& axes);
// Mean over the last two axes (H, W).
Tensor spatial_mean(const Tensor& x);
// Full reductions to a scalar.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Nearest-neighbour 2x upsampling of the last two axes.
Tensor upsample_nearest2x(const Tensor& x);
// 2x2 mean pooling of the last two axes; both must be even.
Tensor avg_pool2x2(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
// Concatenation along the channel axis (axis 1 for rank-4 inputs, else 0).
// All other extents must agree.
Tensor concat_channels(const std::vector<Tensor>& parts);
// Slice `index` along axis 0; the axis is removed.
Tensor index_batch(const Tensor& x, std::size_t index);

// Sum / mean of the elements selected by `mask`. The mask must have as many
// entries as x; masked_mean requires at least one selected element.
Tensor masked_sum(const Tensor& x, const Mask& mask);
Tensor masked_mean(const Tensor& x, const Mask& mask);

}  // namespace auxstep::ops

#endif  // AUXSTEP_OPS_H_
