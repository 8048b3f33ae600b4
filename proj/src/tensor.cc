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

#include "auxstep/tensor.h"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "auxstep/error.h"

namespace auxstep {
namespace {

thread_local Tape* g_active_tape = nullptr;

const TensorImpl& checked(const std::shared_ptr<TensorImpl>& impl) {
  if (!impl) throw ValidationError("use of an undefined tensor");
  return *impl;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
  for (std::size_t extent : shape) {
    if (extent == 0) {
      throw ShapeError("tensor: zero extent in shape " + shape_string(shape));
    }
  }
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_string(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return checked(impl_).shape; }

std::size_t Tensor::numel() const { return checked(impl_).data.size(); }

std::span<const double> Tensor::data() const { return checked(impl_).data; }

std::span<double> Tensor::mutable_data() {
  checked(impl_);
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item: tensor of shape " + shape_string(shape()) +
                     " is not a scalar");
  }
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return checked(impl_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  checked(impl_);
  impl_->requires_grad = value;
  return *this;
}

const std::string& Tensor::name() const { return checked(impl_).name; }

Tensor& Tensor::set_name(std::string name) {
  checked(impl_);
  impl_->name = std::move(name);
  return *this;
}

bool Tensor::has_grad() const { return !checked(impl_).grad.empty(); }

std::span<const double> Tensor::grad() const { return checked(impl_).grad; }

Tensor Tensor::grad_tensor() const {
  const TensorImpl& impl = checked(impl_);
  if (impl.grad.empty()) return zeros(impl.shape);
  return Tensor(impl.shape, impl.grad);
}

void Tensor::zero_grad() {
  checked(impl_);
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::clear_grad() {
  checked(impl_);
  std::vector<double>().swap(impl_->grad);
}

Tensor Tensor::detach() const {
  const TensorImpl& impl = checked(impl_);
  return Tensor(impl.shape, impl.data);
}

Mask Mask::all(Shape shape) {
  const std::size_t n = shape_numel(shape);
  return Mask{std::move(shape), std::vector<std::uint8_t>(n, 1)};
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(
      std::count_if(values.begin(), values.end(),
                    [](std::uint8_t v) { return v != 0; }));
}

void Tape::record(std::string_view op,
                  std::vector<std::shared_ptr<TensorImpl>> inputs,
                  std::shared_ptr<TensorImpl> output, BackwardFn backward) {
  entries_.push_back(
      Entry{op, std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined()) throw ValidationError("backward: undefined loss");
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " +
                     shape_string(loss.shape()));
  }
  if (entries_.empty()) throw ValidationError("backward: tape is empty");

  TensorImpl* root = loss.impl().get();
  bool found = false;
  for (Entry& entry : entries_) {
    entry.output->grad.assign(entry.output->data.size(), 0.0);
    if (entry.output.get() == root) found = true;
  }
  if (!found) {
    throw ValidationError("backward: loss was not recorded on this tape");
  }
  root->grad[0] += 1.0;

  std::unordered_set<const TensorImpl*> reachable{root};
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!reachable.contains(it->output.get())) continue;
    it->backward(*it->output, it->inputs);
    for (const auto& input : it->inputs) {
      if (input->requires_grad) reachable.insert(input.get());
    }
  }
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = previous_; }

double* grad_target(TensorImpl& tensor) {
  if (!tensor.requires_grad) return nullptr;
  if (tensor.grad.size() != tensor.data.size()) {
    tensor.grad.assign(tensor.data.size(), 0.0);
  }
  return tensor.grad.data();
}

}  // namespace auxstep
