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

// Dense double-precision tensors and the reverse-mode differentiation tape.
//
// A Tensor is a shared handle: copying a Tensor copies the handle, not the
// values, so the same parameter can be reachable from several graphs. Values
// are row-major. A tensor created by a primitive while a Tape is active (see
// TapeScope) and with at least one grad-requiring input is recorded on that
// tape; Tape::backward then walks the records in reverse order.
//
// Gradients accumulate additively into leaf tensors until zero_grad() is
// called. Nothing clears them implicitly.

#ifndef AUXSTEP_TENSOR_H_
#define AUXSTEP_TENSOR_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace auxstep {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  // Empty until the first accumulation; same length as data afterwards.
  std::vector<double> grad;
  bool requires_grad = false;
  std::string name;
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> data() const;
  // Direct access for leaf updates (optimizers, finite-difference probes).
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  const std::string& name() const;
  Tensor& set_name(std::string name);

  bool has_grad() const;
  // Empty span when no gradient has been accumulated yet.
  std::span<const double> grad() const;
  // Gradient as a fresh tensor; zeros when nothing was accumulated.
  Tensor grad_tensor() const;
  void zero_grad();
  // Releases the gradient buffer so has_grad() reports false until the next
  // backward pass reaches this tensor.
  void clear_grad();

  // Deep copy of the values, detached from any graph.
  Tensor detach() const;
  bool same_as(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Boolean selection over a tensor's elements (row-major, same element count).
struct Mask {
  Shape shape;
  std::vector<std::uint8_t> values;

  static Mask all(Shape shape);
  std::size_t count() const;
  std::size_t size() const { return values.size(); }
};

class Tape {
 public:
  using BackwardFn = std::function<void(
      const TensorImpl& output,
      std::span<const std::shared_ptr<TensorImpl>> inputs)>;

  struct Entry {
    std::string_view op;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::string_view op,
              std::vector<std::shared_ptr<TensorImpl>> inputs,
              std::shared_ptr<TensorImpl> output, BackwardFn backward);

  // Populates grad of every grad-requiring tensor reachable from `loss`.
  // Intermediate gradients are recomputed on each call; leaf gradients
  // accumulate. Throws on a non-scalar loss, an empty tape, or a loss that
  // was not produced on this tape.
  void backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }
  const std::vector<Entry>& entries() const { return entries_; }

  // Tape receiving records on this thread, or nullptr (no-grad mode).
  static Tape* active();

 private:
  friend class TapeScope;
  std::vector<Entry> entries_;
};

// Activates a tape for the current thread for the lifetime of the scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Accumulation target for a tape input, or nullptr when the input does not
// require grad. Allocates the gradient buffer on first use.
double* grad_target(TensorImpl& tensor);

}  // namespace auxstep

#endif  // AUXSTEP_TENSOR_H_
