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


// Learning-rate schedule, learning-rate plans for the two-phase scheme, and
// the parameter update rules.

#ifndef AUXSTEP_OPTIM_H_
#define AUXSTEP_OPTIM_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "auxstep/model.h"
#include "auxstep/tensor.h"

namespace auxstep {

// Linear warmup from 0 over the first ceil(T * warmup_fraction) steps, then
// cosine decay to exactly 0 at step T.
class Schedule {
 public:
  Schedule() = default;
  Schedule(std::size_t total_steps, double base_lr = 1e-4,
           double warmup_fraction = 1.0 / 3.0);

  // s(t) in [0, 1] for 0 <= t <= T; throws ValidationError beyond T.
  double multiplier(std::size_t t) const;
  double lr(std::size_t t) const { return base_lr_ * multiplier(t); }

  std::size_t total_steps() const { return total_steps_; }
  std::size_t warmup_steps() const { return warmup_steps_; }
  double base_lr() const { return base_lr_; }

 private:
  std::size_t total_steps_ = 0;
  std::size_t warmup_steps_ = 0;
  double base_lr_ = 0.0;
};

enum class Phase { kDepth, kAux };
enum class Component { kDecoder, kDepthHead, kAuxHead };

std::string_view to_string(Phase phase);
std::string_view to_string(Component component);

// Base rates plus at most one scaling mode. With no mode set the plan is the
// plain baseline: every rate is eta * s(t) and no auxiliary phase exists.
struct LRPlan {
  double decoder_lr = 1e-4;
  double depth_head_lr = 1e-4;
  double aux_head_lr = 1e-4;
  std::optional<double> alpha;  // split decoder rate alpha / (1 - alpha)
  std::optional<double> beta;   // depth unscaled, auxiliary decoder rate * beta
  std::optional<double> gamma;  // baseline with every rate * gamma

  // Throws ValidationError on mixed modes or out-of-range scalars.
  void validate() const;
  bool has_aux_phase() const { return alpha.has_value() || beta.has_value(); }
};

// Rate for one component in one phase given the schedule multiplier s(t).
double effective_lr(Phase phase, Component component, double multiplier,
                    const LRPlan& plan);
double effective_lr(Phase phase, Component component, std::size_t t,
                    const Schedule& schedule, const LRPlan& plan);

struct OptimizerParameter {
  std::string name;
  Tensor tensor;
  bool decoder = false;  // shared trunk; otherwise a head parameter
};

// Parameters whose gradient buffer is empty (see Tensor::clear_grad) are
// skipped entirely: no value change and no state change.
class Optimizer {
 public:
  virtual ~Optimizer() = default;

  // Checks every gradient before touching any value; a non-finite entry
  // throws NumericError naming the parameter.
  void step(double decoder_lr, double head_lr);

  std::uint64_t steps() const { return steps_; }
  const std::vector<OptimizerParameter>& parameters() const { return params_; }

  // Named state tensors for checkpointing.
  virtual std::vector<NamedParameter> state() const;
  virtual void load_state(const std::vector<NamedParameter>& state);

 protected:
  explicit Optimizer(std::vector<OptimizerParameter> params);
  virtual void update(const OptimizerParameter& p, double lr) = 0;

  std::vector<OptimizerParameter> params_;
  std::uint64_t steps_ = 0;
};

// p <- p - lr * g. Momentum-free; exists for closed-form tests.
class PlainGradient final : public Optimizer {
 public:
  explicit PlainGradient(std::vector<OptimizerParameter> params)
      : Optimizer(std::move(params)) {}

 private:
  void update(const OptimizerParameter& p, double lr) override;
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Per-parameter moments and update count. Bias correction uses the slot's own
// count, so a slot shared by two optimizers stays consistent.
struct MomentSlot {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
};

// Moment slots keyed by parameter name. Two optimizers given the same store
// share moments for parameters they have in common.
using MomentStore = std::map<std::string, MomentSlot>;

class AdamW final : public Optimizer {
 public:
  AdamW(std::vector<OptimizerParameter> params, AdamWConfig config,
        std::shared_ptr<MomentStore> store = nullptr);

  const AdamWConfig& config() const { return config_; }
  const MomentSlot& slot(const std::string& name) const;
  const std::shared_ptr<MomentStore>& store() const { return store_; }

  std::vector<NamedParameter> state() const override;
  void load_state(const std::vector<NamedParameter>& state) override;

 private:
  void update(const OptimizerParameter& p, double lr) override;

  AdamWConfig config_;
  std::shared_ptr<MomentStore> store_;
};

}  // namespace auxstep

#endif  // AUXSTEP_OPTIM_H_
