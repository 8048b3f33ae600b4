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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "auxstep/error.h"
#include "auxstep/rng.h"

namespace auxstep {
namespace {

Tensor param(std::vector<double> values, std::string name = "p") {
  const std::size_t n = values.size();
  Tensor t({n}, std::move(values), true);
  t.set_name(std::move(name));
  return t;
}

// Sets the gradient of a leaf directly.
void set_grad(Tensor& t, const std::vector<double>& g) {
  t.clear_grad();
  double* dst = grad_target(*t.impl());
  std::copy(g.begin(), g.end(), dst);
}

TEST(ScheduleTest, Boundaries) {
  Schedule s(38400);
  EXPECT_EQ(s.warmup_steps(), 12800u);
  EXPECT_EQ(s.multiplier(0), 0.0);
  EXPECT_EQ(s.multiplier(12800), 1.0);
  EXPECT_NEAR(s.multiplier(25600), 0.5, 1e-15);
  EXPECT_NEAR(s.multiplier(38400), 0.0, 1e-15);
  EXPECT_NEAR(s.multiplier(6400), 0.5, 1e-15);
  EXPECT_THROW(s.multiplier(38401), ValidationError);
  EXPECT_EQ(Schedule(10).warmup_steps(), 4u);
  EXPECT_EQ(Schedule(9).warmup_steps(), 3u);
  EXPECT_EQ(Schedule(1).multiplier(1), 1.0);
  EXPECT_THROW(Schedule(0), ValidationError);
}

TEST(ScheduleTest, MonotoneAndBounded) {
  for (std::size_t total : {2u, 3u, 7u, 100u, 3000u}) {
    Schedule s(total);
    const std::size_t tw = s.warmup_steps();
    for (std::size_t t = 1; t <= total; ++t) {
      const double a = s.multiplier(t - 1);
      const double b = s.multiplier(t);
      EXPECT_GE(b, 0.0);
      EXPECT_LE(b, 1.0);
      if (t <= tw) EXPECT_GT(b, a) << total << " " << t;
      else EXPECT_LE(b, a) << total << " " << t;
    }
  }
}

TEST(LRPlanTest, Examples) {
  LRPlan plan;
  plan.alpha = 1.0;
  EXPECT_EQ(effective_lr(Phase::kAux, Component::kDecoder, 0.7, plan), 0.0);
  plan.alpha = 0.9;
  Schedule s(300);
  EXPECT_NEAR(effective_lr(Phase::kDepth, Component::kDecoder, s.warmup_steps(),
                           s, plan),
              9e-5, 1e-20);
  EXPECT_EQ(effective_lr(Phase::kAux, Component::kAuxHead, 1.0, plan), 1e-4);
  EXPECT_EQ(effective_lr(Phase::kDepth, Component::kDepthHead, 1.0, plan), 1e-4);
  LRPlan beta;
  beta.beta = 0.1;
  EXPECT_NEAR(effective_lr(Phase::kAux, Component::kDecoder, 1.0, beta), 1e-5,
              1e-20);
  EXPECT_EQ(effective_lr(Phase::kDepth, Component::kDecoder, 1.0, beta), 1e-4);
  EXPECT_EQ(effective_lr(Phase::kAux, Component::kAuxHead, 1.0, beta), 1e-4);
  LRPlan gamma;
  gamma.gamma = 2.0;
  EXPECT_EQ(effective_lr(Phase::kDepth, Component::kDepthHead, 0.5, gamma), 1e-4);
  EXPECT_THROW(effective_lr(Phase::kAux, Component::kDecoder, 0.5, gamma),
               ValidationError);
}

TEST(LRPlanTest, MixedModesRejected) {
  LRPlan plan;
  plan.alpha = 0.5;
  plan.beta = 0.1;
  EXPECT_THROW(effective_lr(Phase::kDepth, Component::kDecoder, 1.0, plan),
               ValidationError);
  LRPlan bad;
  bad.alpha = 1.5;
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(LRPlanTest, DecoderRateIsConserved) {
  Engine engine(1);
  Schedule s(38400);
  for (int i = 0; i < 1000; ++i) {
    LRPlan plan;
    plan.alpha = uniform01(engine);
    const std::size_t t = uniform_index(engine, 38401);
    const double d = effective_lr(Phase::kDepth, Component::kDecoder, t, s, plan);
    const double a = effective_lr(Phase::kAux, Component::kDecoder, t, s, plan);
    EXPECT_NEAR(d + a, 1e-4 * s.multiplier(t), 1e-15);
  }
}

TEST(AdamWTest, SingleStepClosedForm) {
  Tensor p = param({1.0});
  AdamW opt({{"p", p, true}}, AdamWConfig{0.9, 0.999, 1e-8, 0.01});
  set_grad(p, {1.0});
  opt.step(0.1, 0.1);
  EXPECT_NEAR(p.item(), 0.899000001, 1e-9);
  EXPECT_EQ(opt.slot("p").t, 1u);
}

TEST(AdamWTest, ZeroLearningRateIsNoOp) {
  Tensor p = param({0.3, -2.0});
  AdamW opt({{"p", p, false}}, AdamWConfig{});
  set_grad(p, {0.5, -0.25});
  opt.step(0.0, 0.0);
  EXPECT_EQ(p.data()[0], 0.3);
  EXPECT_EQ(p.data()[1], -2.0);
  EXPECT_NE(opt.slot("p").m[0], 0.0);
}

TEST(AdamWTest, ZeroGradientOnlyDecays) {
  Tensor p = param({2.0});
  AdamW opt({{"p", p, false}}, AdamWConfig{});
  set_grad(p, {0.0});
  opt.step(0.1, 0.1);
  EXPECT_EQ(p.item(), 2.0 - 0.1 * 0.01 * 2.0);
}

TEST(AdamWTest, NonFiniteGradientNamesParameter) {
  Tensor a = param({1.0}, "a");
  Tensor b = param({1.0}, "decoder.stage0.weight");
  AdamW opt({{"a", a, true}, {"decoder.stage0.weight", b, true}}, AdamWConfig{});
  set_grad(a, {1.0});
  set_grad(b, {std::numeric_limits<double>::infinity()});
  try {
    opt.step(0.1, 0.1);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("decoder.stage0.weight"),
              std::string::npos);
  }
  EXPECT_EQ(a.item(), 1.0);  // nothing applied
  EXPECT_EQ(opt.steps(), 0u);
}

TEST(AdamWTest, MatchesReferenceOverSeveralSteps) {
  // Scalar reference recurrence.
  Tensor p = param({0.5});
  AdamW opt({{"p", p, false}}, AdamWConfig{0.9, 0.999, 1e-8, 0.01});
  double ref = 0.5, m = 0.0, v = 0.0;
  const double grads[] = {0.3, -1.2, 0.7, 0.05, -0.4};
  for (int t = 1; t <= 5; ++t) {
    const double g = grads[t - 1];
    set_grad(p, {g});
    opt.step(0.0, 0.01);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.999, t));
    ref = ref - 0.01 * mh / (std::sqrt(vh) + 1e-8) - 0.01 * 0.01 * ref;
    EXPECT_NEAR(p.item(), ref, 1e-15);
  }
}

TEST(AdamWTest, SkipsParametersWithoutGradient) {
  Tensor a = param({1.0}, "a");
  Tensor b = param({1.0}, "b");
  AdamW opt({{"a", a, false}, {"b", b, false}}, AdamWConfig{});
  set_grad(a, {1.0});
  b.clear_grad();
  opt.step(0.1, 0.1);
  EXPECT_EQ(b.item(), 1.0);
  EXPECT_EQ(opt.slot("b").t, 0u);
  EXPECT_EQ(opt.slot("a").t, 1u);
}

TEST(AdamWTest, DuplicatedOptimizersAreIndependent) {
  Tensor shared = param({1.0}, "decoder.w");
  AdamW first({{"decoder.w", shared, true}}, AdamWConfig{});
  AdamW second({{"decoder.w", shared, true}}, AdamWConfig{});
  set_grad(shared, {2.0});
  first.step(0.1, 0.1);
  EXPECT_EQ(second.slot("decoder.w").m[0], 0.0);
  EXPECT_EQ(second.slot("decoder.w").t, 0u);
  // Opt-in sharing.
  auto store = std::make_shared<MomentStore>();
  AdamW a({{"decoder.w", shared, true}}, AdamWConfig{}, store);
  AdamW b({{"decoder.w", shared, true}}, AdamWConfig{}, store);
  a.step(0.1, 0.1);
  EXPECT_EQ(b.slot("decoder.w").t, 1u);
}

TEST(AdamWTest, StateRoundTrip) {
  Tensor p = param({0.2, 0.4});
  AdamW opt({{"p", p, false}}, AdamWConfig{});
  set_grad(p, {0.1, -0.3});
  opt.step(0.01, 0.01);
  opt.step(0.01, 0.01);
  Tensor q = param({0.2, 0.4});
  AdamW copy({{"p", q, false}}, AdamWConfig{});
  copy.load_state(opt.state());
  q.mutable_data()[0] = p.data()[0];
  q.mutable_data()[1] = p.data()[1];
  set_grad(q, {0.5, 0.5});
  set_grad(p, {0.5, 0.5});
  opt.step(0.01, 0.01);
  copy.step(0.01, 0.01);
  EXPECT_EQ(p.data()[0], q.data()[0]);
  EXPECT_EQ(p.data()[1], q.data()[1]);
  EXPECT_EQ(copy.steps(), 3u);
}

TEST(PlainGradientTest, Step) {
  Tensor d = param({1.0}, "d");
  Tensor h = param({1.0}, "h");
  PlainGradient opt({{"d", d, true}, {"h", h, false}});
  set_grad(d, {2.0});
  set_grad(h, {2.0});
  opt.step(0.25, 0.5);
  EXPECT_EQ(d.item(), 0.5);
  EXPECT_EQ(h.item(), 0.0);
}

}  // namespace
}  // namespace auxstep
