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

// Central finite differences, used as an independent oracle for backward().

#ifndef AUXSTEP_GRADCHECK_H_
#define AUXSTEP_GRADCHECK_H_

#include <cstddef>
#include <functional>

#include "auxstep/tensor.h"

namespace auxstep {

// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every coordinate i.
// f is evaluated on perturbed copies; x itself is never modified.
Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f,
                              const Tensor& x, double epsilon);

// Single partial derivative of a closure with respect to one coordinate of
// `param`, perturbing the tensor in place and restoring it bit-exactly.
// Useful when `param` is a shared model parameter the closure reads.
double finite_difference_partial(const std::function<double()>& f,
                                 Tensor& param, std::size_t index,
                                 double epsilon);

// |a - b| / max(|a|, |b|, floor).
double relative_error(double a, double b, double floor = 1e-8);

}  // namespace auxstep

#endif  // AUXSTEP_GRADCHECK_H_
