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

#include "auxstep/losses.h"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>

#include "auxstep/error.h"
#include "auxstep/gradcheck.h"
#include "auxstep/ops.h"
#include "auxstep/rng.h"

namespace auxstep {
namespace {

constexpr double kTight = 1e-12;

Tensor random_tensor(Shape shape, Engine& engine, double lo, double hi) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = uniform(engine, lo, hi);
  return Tensor(std::move(shape), std::move(v), true);
}

LabelMap random_labels(Engine& engine, std::size_t h, std::size_t w,
                       std::size_t k, double ignore_rate) {
  LabelMap m{h, w, std::vector<std::uint16_t>(h * w)};
  for (auto& id : m.ids) {
    id = uniform01(engine) < ignore_rate
             ? kIgnoreId
             : static_cast<std::uint16_t>(uniform_index(engine, k));
  }
  return m;
}

void expect_gradient_matches_fd(const std::function<Tensor(const Tensor&)>& loss,
                                Tensor x) {
  x.zero_grad();
  Tape tape;
  Tensor value;
  {
    TapeScope scope(tape);
    value = loss(x);
  }
  tape.backward(value);
  Tensor fd = finite_difference_grad(
      [&](const Tensor& p) { return loss(p).item(); }, x, 1e-4);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_LE(relative_error(x.grad()[i], fd.data()[i]), 1e-5) << "i=" << i;
  }
}

TEST(DepthLossTest, Examples) {
  Tensor gt({1, 1, 2}, {1.0, 1.0});
  EXPECT_EQ(depth_loss(gt, gt, Mask::all({1, 2})).item(), 0.0);
  Tensor plus_one({1, 1, 2}, {2.0, 2.0});
  EXPECT_NEAR(depth_loss(plus_one, gt, Mask::all({1, 2})).item(), 1.0, kTight);
  Tensor pred({1, 1, 2}, {2.0, 4.0});
  Mask first{{1, 2}, {1, 0}};
  EXPECT_NEAR(depth_loss(pred, gt, first).item(), 1.0, kTight);
  EXPECT_NEAR(depth_loss(pred, gt, first, DepthLossKind::kL2).item(), 1.0,
              kTight);
}

TEST(DepthLossTest, Errors) {
  Tensor gt({1, 1, 2}, {1.0, std::nan("")});
  Tensor pred({1, 1, 2}, {1.0, 1.0});
  EXPECT_THROW(depth_loss(pred, gt, Mask{{1, 2}, {0, 0}}), ValidationError);
  EXPECT_THROW(depth_loss(pred, gt, Mask::all({1, 2})), NumericError);
  // Non-finite values at invalid pixels are ignored.
  EXPECT_EQ(depth_loss(pred, gt, Mask{{1, 2}, {1, 0}}).item(), 0.0);
  EXPECT_THROW(depth_loss(Tensor::zeros({2, 1, 2}), gt, Mask::all({1, 2})),
               ShapeError);
  EXPECT_THROW(parse_depth_loss_kind("huber"), ValidationError);
}

TEST(DepthLossTest, InvalidPixelsNeverMatter) {
  Engine engine(4);
  Tensor pred = random_tensor({1, 8, 8}, engine, 0.5, 5.0);
  Tensor gt = random_tensor({1, 8, 8}, engine, 0.5, 5.0);
  Mask mask{{8, 8}, std::vector<std::uint8_t>(64)};
  for (auto& v : mask.values) v = uniform01(engine) < 0.7;
  const double before = depth_loss(pred, gt, mask).item();
  Tensor gt2 = gt.detach();
  Tensor pred2 = pred.detach();
  for (std::size_t i = 0; i < 64; ++i) {
    if (mask.values[i]) continue;
    gt2.mutable_data()[i] = -3.0;
    pred2.mutable_data()[i] = 100.0;
  }
  EXPECT_EQ(depth_loss(pred2, gt2, mask).item(), before);
}

TEST(SegmentationCeTest, Examples) {
  LabelMap labels{2, 2, {0, 1, 2, 3}};
  EXPECT_NEAR(segmentation_ce(Tensor::zeros({4, 2, 2}), labels).item(),
              std::log(4.0), kTight);
  // 2x1 map, K=2: pixel 0 ignored, pixel 1 is class 0 with logit 1 vs 0.
  LabelMap two{2, 1, {kIgnoreId, 0}};
  Tensor logits({2, 2, 1}, {5.0, 1.0, -7.0, 0.0});
  EXPECT_NEAR(segmentation_ce(logits, two).item(), 0.313262, 1e-6);
  Tensor sharp({2, 2, 1}, {0.0, 60.0, 0.0, 0.0});
  EXPECT_LT(segmentation_ce(sharp, two).item(), 1e-20);
}

TEST(SegmentationCeTest, Errors) {
  EXPECT_THROW(segmentation_ce(Tensor::zeros({2, 1, 2}),
                               LabelMap{1, 2, {kIgnoreId, kIgnoreId}}),
               ValidationError);
  EXPECT_THROW(segmentation_ce(Tensor::zeros({2, 1, 2}), LabelMap{1, 2, {0, 2}}),
               ValidationError);
  EXPECT_THROW(segmentation_ce(Tensor::zeros({2, 2, 2}), LabelMap{1, 2, {0, 1}}),
               ShapeError);
}

TEST(SegmentationCeTest, IgnoredPixelsNeverMatter) {
  Engine engine(8);
  LabelMap labels = random_labels(engine, 6, 6, 5, 0.3);
  labels.ids[0] = 1;
  Tensor logits = random_tensor({5, 6, 6}, engine, -3.0, 3.0);
  const double before = segmentation_ce(logits, labels).item();
  Tensor changed = logits.detach();
  for (std::size_t j = 0; j < 36; ++j) {
    if (labels.ids[j] != kIgnoreId) continue;
    for (std::size_t c = 0; c < 5; ++c) changed.mutable_data()[c * 36 + j] = 9.0;
  }
  EXPECT_EQ(segmentation_ce(changed, labels).item(), before);
}

TEST(MldcTest, TargetExamples) {
  EXPECT_EQ(mldc_target(LabelMap{2, 2, {3, 3, 3, 3}}, 5),
            (std::vector<double>{0, 0, 0, 1, 0}));
  EXPECT_EQ(mldc_target(LabelMap{2, 2, {1, 2, 2, kIgnoreId}}, 4),
            (std::vector<double>{0, 1, 1, 0}));
  EXPECT_EQ(mldc_target(LabelMap{1, 3, {0, 2, 1}}, 3),
            (std::vector<double>{1, 1, 1}));
  EXPECT_THROW(mldc_target(LabelMap{1, 1, {kIgnoreId}}, 3), ValidationError);
}

TEST(MldcTest, PredictionExamples) {
  Tensor p = mldc_prediction(Tensor::zeros({3, 2, 2}));
  for (double v : p.data()) EXPECT_EQ(v, 0.5);
  Tensor extreme({2, 1, 2}, {800.0, 800.0, -800.0, -800.0});
  Tensor q = mldc_prediction(extreme);
  EXPECT_EQ(q.data()[0], 1.0 - kProbabilityClamp);
  EXPECT_EQ(q.data()[1], kProbabilityClamp);
  Tensor half({1, 1, 2}, {0.0, 60.0});
  EXPECT_NEAR(mldc_prediction(half).item(), 0.75, 1e-12);
}

TEST(MldcTest, LossExamples) {
  EXPECT_NEAR(mldc_loss(Tensor({1}, {0.75}), {1.0}).item(), 0.287682, 1e-6);
  EXPECT_NEAR(mldc_loss(Tensor({3}, {0.5, 0.5, 0.5}), {1.0, 0.0, 1.0}).item(),
              std::numbers::ln2, kTight);
  Tensor clamped({2}, {1.0 - kProbabilityClamp, kProbabilityClamp});
  EXPECT_LT(mldc_loss(clamped, {1.0, 0.0}).item(), 2e-7);
  EXPECT_THROW(mldc_loss(Tensor({2}, {0.5, 0.5}), {1.0}), ShapeError);
  EXPECT_THROW(mldc_loss(Tensor({1}, {0.5}), {0.5}), ValidationError);
}

TEST(SlcTest, Examples) {
  EXPECT_NEAR(slc_loss(Tensor::zeros({4, 2, 2}), std::uint16_t{2}).item(),
              std::log(4.0), kTight);
  // Tie between classes 1 and 3.
  LabelMap tie{2, 2, {1, 3, 3, 1}};
  EXPECT_EQ(dominant_class(tie, 4), 1);
  LabelMap mostly{1, 10, {2, 2, 2, 2, 2, 2, 2, 2, 2, 0}};
  Tensor logits = Tensor::zeros({4, 1, 10});
  for (std::size_t j = 0; j < 10; ++j) logits.mutable_data()[2 * 10 + j] = 50.0;
  EXPECT_LT(slc_loss(logits, mostly).item(), 1e-20);
  EXPECT_THROW(slc_loss(logits, LabelMap{1, 10, std::vector<std::uint16_t>(
                                                    10, kIgnoreId)}),
               ValidationError);
}

TEST(ReconstructionTest, Examples) {
  Tensor img = Tensor::full({3, 2, 2}, 0.2);
  EXPECT_EQ(reconstruction_mse(img, img).item(), 0.0);
  EXPECT_NEAR(reconstruction_mse(Tensor::full({3, 2, 2}, 0.7), img).item(), 0.25,
              kTight);
  EXPECT_NEAR(reconstruction_mse(Tensor::zeros({3, 2, 2}), img).item(), 0.04,
              kTight);
  EXPECT_THROW(reconstruction_mse(Tensor::zeros({3, 2, 1}), img), ShapeError);
}

// Independent oracles: per-class scans over every pixel.
std::vector<double> brute_presence(const LabelMap& m, std::size_t k) {
  std::vector<double> out(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t y = 0; y < m.height; ++y) {
      for (std::size_t x = 0; x < m.width; ++x) {
        if (m.ids[y * m.width + x] == c) out[c] = 1.0;
      }
    }
  }
  return out;
}

std::uint16_t brute_dominant(const LabelMap& m, std::size_t k) {
  std::size_t best_count = 0;
  std::uint16_t best = 0;
  for (std::size_t c = k; c-- > 0;) {
    std::size_t n = 0;
    for (std::uint16_t id : m.ids) n += id == c;
    if (n >= best_count) {
      best_count = n;
      best = static_cast<std::uint16_t>(c);
    }
  }
  return best;
}

TEST(MldcTest, AgreesWithBruteForceOnRandomMasks) {
  Engine engine(20);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + uniform_index(engine, 14);
    const std::size_t h = 1 + uniform_index(engine, 16);
    const std::size_t w = 1 + uniform_index(engine, 16);
    LabelMap m = random_labels(engine, h, w, k, uniform(engine, 0.0, 0.9));
    m.ids[uniform_index(engine, m.size())] =
        static_cast<std::uint16_t>(uniform_index(engine, k));
    ASSERT_EQ(mldc_target(m, k), brute_presence(m, k)) << "trial " << trial;
    ASSERT_EQ(dominant_class(m, k), brute_dominant(m, k)) << "trial " << trial;
  }
}

TEST(LossGradientTest, MatchesFiniteDifferences) {
  Engine engine(31);
  LabelMap labels = random_labels(engine, 3, 4, 5, 0.2);
  labels.ids[0] = 2;
  Tensor gt = random_tensor({1, 3, 4}, engine, 0.5, 4.0);
  Mask mask{{3, 4}, std::vector<std::uint8_t>(12, 1)};
  mask.values[3] = 0;
  // Keep |pred - gt| away from the abs kink.
  std::vector<double> offset(12);
  for (std::size_t i = 0; i < 12; ++i) {
    offset[i] = gt.data()[i] + (i % 2 ? 0.3 : -0.2) + uniform(engine, -0.05, 0.05);
  }
  Tensor pred({1, 3, 4}, std::move(offset), true);
  expect_gradient_matches_fd(
      [&](const Tensor& p) { return depth_loss(p, gt, mask); }, pred);
  expect_gradient_matches_fd(
      [&](const Tensor& p) { return depth_loss(p, gt, mask, DepthLossKind::kL2); },
      pred);
  Tensor logits = random_tensor({5, 3, 4}, engine, -2.0, 2.0);
  expect_gradient_matches_fd(
      [&](const Tensor& l) { return segmentation_ce(l, labels); }, logits);
  const auto target = mldc_target(labels, 5);
  expect_gradient_matches_fd(
      [&](const Tensor& l) { return mldc_loss(mldc_prediction(l), target); },
      logits);
  expect_gradient_matches_fd(
      [&](const Tensor& l) { return slc_loss(l, labels); }, logits);
  Tensor img = random_tensor({3, 3, 4}, engine, 0.0, 1.0);
  Tensor rec = random_tensor({3, 3, 4}, engine, -1.0, 2.0);
  expect_gradient_matches_fd(
      [&](const Tensor& r) { return reconstruction_mse(r, img); }, rec);
}

TEST(LossPropertyTest, NonNegativeOnRandomInputs) {
  Engine engine(44);
  for (int trial = 0; trial < 50; ++trial) {
    LabelMap labels = random_labels(engine, 4, 4, 6, 0.3);
    labels.ids[5] = 1;
    Tensor logits = random_tensor({6, 4, 4}, engine, -20.0, 20.0);
    EXPECT_GE(segmentation_ce(logits, labels).item(), 0.0);
    EXPECT_GE(mldc_loss(mldc_prediction(logits), mldc_target(labels, 6)).item(),
              0.0);
    EXPECT_GE(slc_loss(logits, labels).item(), 0.0);
  }
}

}  // namespace
}  // namespace auxstep
