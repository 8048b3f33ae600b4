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

#include "auxstep/optim.h"

#include <cmath>
#include <numbers>

#include "auxstep/error.h"

namespace auxstep {

Schedule::Schedule(std::size_t total_steps, double base_lr,
                   double warmup_fraction)
    : total_steps_(total_steps), base_lr_(base_lr) {
  if (total_steps == 0) throw ValidationError("schedule: total_steps must be positive");
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) {
    throw ValidationError("schedule: base learning rate must be finite and >= 0");
  }
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
    throw ValidationError("schedule: warmup fraction must lie in [0, 1]");
  }
  if (warmup_fraction == 1.0 / 3.0) {
    warmup_steps_ = (total_steps + 2) / 3;
  } else {
    // Tolerance keeps T * f from rounding up past an exact integer.
    warmup_steps_ = static_cast<std::size_t>(
        std::ceil(static_cast<double>(total_steps) * warmup_fraction - 1e-9));
  }
}

double Schedule::multiplier(std::size_t t) const {
  if (t > total_steps_) {
    throw ValidationError("schedule: step " + std::to_string(t) +
                          " exceeds total steps " + std::to_string(total_steps_));
  }
  if (t < warmup_steps_) {
    return static_cast<double>(t) / static_cast<double>(warmup_steps_);
  }
  if (total_steps_ == warmup_steps_) return 1.0;  // no decay segment
  const double progress = static_cast<double>(t - warmup_steps_) /
                          static_cast<double>(total_steps_ - warmup_steps_);
  return 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

std::string_view to_string(Phase phase) {
  return phase == Phase::kDepth ? "depth" : "aux";
}

std::string_view to_string(Component component) {
  switch (component) {
    case Component::kDecoder: return "decoder";
    case Component::kDepthHead: return "depth_head";
    case Component::kAuxHead: return "aux_head";
  }
  return "unknown";
}

void LRPlan::validate() const {
  const int modes = alpha.has_value() + beta.has_value() + gamma.has_value();
  if (modes > 1) {
    throw ValidationError("lr plan: alpha, beta and gamma modes are mutually exclusive");
  }
  for (double r : {decoder_lr, depth_head_lr, aux_head_lr}) {
    if (!(r >= 0.0) || !std::isfinite(r)) {
      throw ValidationError("lr plan: learning rates must be finite and >= 0");
    }
  }
  if (alpha && !(*alpha >= 0.0 && *alpha <= 1.0)) {
    throw ValidationError("lr plan: alpha must lie in [0, 1]");
  }
  if (beta && !(*beta >= 0.0 && std::isfinite(*beta))) {
    throw ValidationError("lr plan: beta must be finite and >= 0");
  }
  if (gamma && !(*gamma >= 0.0 && std::isfinite(*gamma))) {
    throw ValidationError("lr plan: gamma must be finite and >= 0");
  }
}

double effective_lr(Phase phase, Component component, double multiplier,
                    const LRPlan& plan) {
  plan.validate();
  if (phase == Phase::kDepth && component == Component::kAuxHead) {
    throw ValidationError("effective_lr: auxiliary heads are not updated in the depth phase");
  }
  if (phase == Phase::kAux && component == Component::kDepthHead) {
    throw ValidationError("effective_lr: the depth head is not updated in the auxiliary phase");
  }
  if (phase == Phase::kAux && !plan.has_aux_phase()) {
    throw ValidationError("effective_lr: plan has no auxiliary phase");
  }
  const double base = component == Component::kDecoder     ? plan.decoder_lr
                      : component == Component::kDepthHead ? plan.depth_head_lr
                                                           : plan.aux_head_lr;
  double scale = 1.0;
  if (plan.gamma) {
    scale = *plan.gamma;
  } else if (component == Component::kDecoder) {
    if (plan.alpha) scale = phase == Phase::kDepth ? *plan.alpha : 1.0 - *plan.alpha;
    if (plan.beta && phase == Phase::kAux) scale = *plan.beta;
  }
  return scale * base * multiplier;
}

double effective_lr(Phase phase, Component component, std::size_t t,
                    const Schedule& schedule, const LRPlan& plan) {
  return effective_lr(phase, component, schedule.multiplier(t), plan);
}

Optimizer::Optimizer(std::vector<OptimizerParameter> params)
    : params_(std::move(params)) {
  for (const OptimizerParameter& p : params_) {
    if (!p.tensor.defined() || !p.tensor.requires_grad()) {
      throw ValidationError("optimizer: parameter '" + p.name +
                            "' must be a grad-requiring tensor");
    }
  }
}

void Optimizer::step(double decoder_lr, double head_lr) {
  for (double lr : {decoder_lr, head_lr}) {
    if (!(lr >= 0.0) || !std::isfinite(lr)) {
      throw ValidationError("optimizer: learning rate must be finite and >= 0");
    }
  }
  for (const OptimizerParameter& p : params_) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("optimizer: non-finite gradient for parameter '" +
                           p.name + "'");
      }
    }
  }
  for (const OptimizerParameter& p : params_) {
    if (!p.tensor.has_grad()) continue;
    update(p, p.decoder ? decoder_lr : head_lr);
  }
  ++steps_;
}

std::vector<NamedParameter> Optimizer::state() const {
  return {{"steps", Tensor::scalar(static_cast<double>(steps_))}};
}

void Optimizer::load_state(const std::vector<NamedParameter>& state) {
  for (const NamedParameter& s : state) {
    if (s.name == "steps") {
      steps_ = static_cast<std::uint64_t>(s.tensor.item());
      return;
    }
  }
  throw FormatError("optimizer state: missing 'steps'");
}

void PlainGradient::update(const OptimizerParameter& p, double lr) {
  Tensor t = p.tensor;
  auto values = t.mutable_data();
  const auto g = t.grad();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] -= lr * g[i];
}

AdamW::AdamW(std::vector<OptimizerParameter> params, AdamWConfig config,
             std::shared_ptr<MomentStore> store)
    : Optimizer(std::move(params)),
      config_(config),
      store_(store ? std::move(store) : std::make_shared<MomentStore>()) {
  if (!(config.beta1 >= 0.0 && config.beta1 < 1.0) ||
      !(config.beta2 >= 0.0 && config.beta2 < 1.0) || !(config.eps > 0.0) ||
      !(config.weight_decay >= 0.0)) {
    throw ValidationError("adamw: invalid hyperparameters");
  }
  for (const OptimizerParameter& p : params_) {
    MomentSlot& slot = (*store_)[p.name];
    if (slot.m.empty()) {
      slot.m.assign(p.tensor.numel(), 0.0);
      slot.v.assign(p.tensor.numel(), 0.0);
    } else if (slot.m.size() != p.tensor.numel()) {
      throw ShapeError("adamw: shared moments for '" + p.name +
                       "' have the wrong size");
    }
  }
}

const MomentSlot& AdamW::slot(const std::string& name) const {
  auto it = store_->find(name);
  if (it == store_->end()) throw ValidationError("adamw: no parameter '" + name + "'");
  return it->second;
}

void AdamW::update(const OptimizerParameter& p, double lr) {
  MomentSlot& s = (*store_)[p.name];
  ++s.t;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.t));
  Tensor t = p.tensor;
  auto values = t.mutable_data();
  const auto g = t.grad();
  for (std::size_t i = 0; i < values.size(); ++i) {
    s.m[i] = b1 * s.m[i] + (1.0 - b1) * g[i];
    s.v[i] = b2 * s.v[i] + (1.0 - b2) * g[i] * g[i];
    const double m_hat = s.m[i] / c1;
    const double v_hat = s.v[i] / c2;
    const double old = values[i];
    values[i] = old - lr * m_hat / (std::sqrt(v_hat) + config_.eps) -
                lr * config_.weight_decay * old;
  }
}

std::vector<NamedParameter> AdamW::state() const {
  std::vector<NamedParameter> out = Optimizer::state();
  for (const OptimizerParameter& p : params_) {
    const MomentSlot& s = slot(p.name);
    const Shape& shape = p.tensor.shape();
    out.push_back({"m." + p.name, Tensor(shape, s.m)});
    out.push_back({"v." + p.name, Tensor(shape, s.v)});
    out.push_back({"t." + p.name, Tensor::scalar(static_cast<double>(s.t))});
  }
  return out;
}

void AdamW::load_state(const std::vector<NamedParameter>& state) {
  Optimizer::load_state(state);
  std::map<std::string, const Tensor*> by_name;
  for (const NamedParameter& s : state) by_name[s.name] = &s.tensor;
  auto find = [&](const std::string& key, std::size_t numel) {
    auto it = by_name.find(key);
    if (it == by_name.end()) throw FormatError("optimizer state: missing '" + key + "'");
    if (it->second->numel() != numel) {
      throw FormatError("optimizer state: '" + key + "' has the wrong size");
    }
    return it->second;
  };
  for (const OptimizerParameter& p : params_) {
    MomentSlot& s = (*store_)[p.name];
    const Tensor* m = find("m." + p.name, p.tensor.numel());
    const Tensor* v = find("v." + p.name, p.tensor.numel());
    const Tensor* t = find("t." + p.name, 1);
    s.m.assign(m->data().begin(), m->data().end());
    s.v.assign(v->data().begin(), v->data().end());
    s.t = static_cast<std::uint64_t>(t->item());
  }
}

}  // namespace auxstep
