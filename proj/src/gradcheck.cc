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

#include "auxstep/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "auxstep/error.h"

namespace auxstep {
namespace {

double checked_eval(const std::function<double()>& f) {
  const double v = f();
  if (!std::isfinite(v)) {
    throw NumericError("finite_difference: function returned " +
                       std::to_string(v));
  }
  return v;
}

void require_positive(double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw ValidationError("finite_difference: epsilon must be positive");
  }
}

}  // namespace

Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f,
                              const Tensor& x, double epsilon) {
  require_positive(epsilon);
  Tensor probe = x.detach();
  std::vector<double> grad(x.numel());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    grad[i] = finite_difference_partial([&] { return f(probe); }, probe, i,
                                        epsilon);
  }
  return Tensor(x.shape(), std::move(grad));
}

double finite_difference_partial(const std::function<double()>& f,
                                 Tensor& param, std::size_t index,
                                 double epsilon) {
  require_positive(epsilon);
  auto values = param.mutable_data();
  if (index >= values.size()) {
    throw ValidationError("finite_difference: index out of range");
  }
  const double original = values[index];
  double plus = 0.0;
  double minus = 0.0;
  try {
    values[index] = original + epsilon;
    plus = checked_eval(f);
    values[index] = original - epsilon;
    minus = checked_eval(f);
  } catch (...) {
    values[index] = original;
    throw;
  }
  values[index] = original;
  return (plus - minus) / (2.0 * epsilon);
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace auxstep
