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

#include <cmath>
#include <string>

#include "auxstep/error.h"
#include "auxstep/ops.h"

namespace auxstep {
namespace {

void require_classes(const Tensor& logits, std::string_view op) {
  if (logits.rank() != 3) {
    throw ShapeError(std::string(op) + ": expected [K,H,W] logits, got " +
                     shape_string(logits.shape()));
  }
}

void require_labels(const LabelMap& gt, std::size_t k, std::uint16_t ignore_id,
                    std::string_view op) {
  if (gt.ids.size() != gt.height * gt.width) {
    throw ShapeError(std::string(op) + ": label map size does not match " +
                     std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  bool any = false;
  for (std::uint16_t id : gt.ids) {
    if (id == ignore_id) continue;
    if (id >= k) {
      throw ValidationError(std::string(op) + ": class id " + std::to_string(id) +
                            " out of range for " + std::to_string(k) + " classes");
    }
    any = true;
  }
  if (!any) throw ValidationError(std::string(op) + ": every pixel is ignored");
}

void require_matching_labels(const Tensor& logits, const LabelMap& gt,
                             std::string_view op) {
  const Shape& s = logits.shape();
  if (s[1] != gt.height || s[2] != gt.width) {
    throw ShapeError(std::string(op) + ": logits " + shape_string(s) +
                     " vs labels " + std::to_string(gt.height) + "x" +
                     std::to_string(gt.width));
  }
}

// Selects entry (target, j) of a [K, n] layout for each selected column j.
Mask one_hot(std::size_t k, std::size_t n, const LabelMap& gt,
             std::uint16_t ignore_id) {
  Mask m{{k, n}, std::vector<std::uint8_t>(k * n, 0)};
  for (std::size_t j = 0; j < n; ++j) {
    if (gt.ids[j] != ignore_id) m.values[gt.ids[j] * n + j] = 1;
  }
  return m;
}

}  // namespace

DepthLossKind parse_depth_loss_kind(std::string_view name) {
  if (name == "l1") return DepthLossKind::kL1;
  if (name == "l2") return DepthLossKind::kL2;
  throw ValidationError("unknown depth loss '" + std::string(name) + "'");
}

std::string_view to_string(DepthLossKind kind) {
  return kind == DepthLossKind::kL1 ? "l1" : "l2";
}

Tensor depth_loss(const Tensor& pred, const Tensor& gt, const Mask& mask,
                  DepthLossKind kind) {
  if (pred.rank() != 3 || pred.shape()[0] != 1) {
    throw ShapeError("depth_loss: expected [1,H,W] prediction, got " +
                     shape_string(pred.shape()));
  }
  if (gt.shape() != pred.shape()) {
    throw ShapeError("depth_loss: prediction " + shape_string(pred.shape()) +
                     " vs ground truth " + shape_string(gt.shape()));
  }
  if (mask.size() != pred.numel()) {
    throw ShapeError("depth_loss: mask has " + std::to_string(mask.size()) +
                     " entries for " + shape_string(pred.shape()));
  }
  if (mask.count() == 0) throw ValidationError("depth_loss: no valid pixels");
  // Invalid pixels may hold anything; zero them so intermediates stay finite.
  std::vector<double> target(gt.numel(), 0.0);
  const auto g = gt.data();
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (!mask.values[i]) continue;
    if (!std::isfinite(g[i])) {
      throw NumericError("depth_loss: non-finite ground truth at valid pixel " +
                         std::to_string(i));
    }
    target[i] = g[i];
  }
  Tensor diff = ops::sub(pred, Tensor(gt.shape(), std::move(target)));
  Tensor err = kind == DepthLossKind::kL1 ? ops::abs(diff) : ops::mul(diff, diff);
  return ops::masked_mean(err, mask);
}

Tensor segmentation_ce(const Tensor& logits, const LabelMap& gt,
                       std::uint16_t ignore_id) {
  require_classes(logits, "segmentation_ce");
  const std::size_t k = logits.shape()[0];
  require_matching_labels(logits, gt, "segmentation_ce");
  require_labels(gt, k, ignore_id, "segmentation_ce");
  Tensor logp = ops::log_softmax(logits, 0);
  return ops::mul_scalar(
      ops::masked_mean(logp, one_hot(k, gt.size(), gt, ignore_id)), -1.0);
}

std::vector<double> mldc_target(const LabelMap& gt, std::size_t num_classes,
                                std::uint16_t ignore_id) {
  require_labels(gt, num_classes, ignore_id, "mldc_target");
  std::vector<double> present(num_classes, 0.0);
  for (std::uint16_t id : gt.ids) {
    if (id != ignore_id) present[id] = 1.0;
  }
  return present;
}

std::uint16_t dominant_class(const LabelMap& gt, std::size_t num_classes,
                             std::uint16_t ignore_id) {
  require_labels(gt, num_classes, ignore_id, "dominant_class");
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::uint16_t id : gt.ids) {
    if (id != ignore_id) ++counts[id];
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < num_classes; ++c) {
    if (counts[c] > counts[best]) best = c;
  }
  return static_cast<std::uint16_t>(best);
}

Tensor mldc_prediction(const Tensor& logits) {
  require_classes(logits, "mldc_prediction");
  return ops::clamp(ops::spatial_mean(ops::sigmoid(logits)), kProbabilityClamp,
                    1.0 - kProbabilityClamp);
}

Tensor mldc_loss(const Tensor& pred, const std::vector<double>& target) {
  if (pred.rank() != 1 || pred.numel() != target.size()) {
    throw ShapeError("mldc_loss: prediction " + shape_string(pred.shape()) +
                     " vs " + std::to_string(target.size()) + " targets");
  }
  std::vector<double> neg(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] != 0.0 && target[i] != 1.0) {
      throw ValidationError("mldc_loss: targets must be 0 or 1");
    }
    neg[i] = 1.0 - target[i];
  }
  const Shape& s = pred.shape();
  Tensor pos_term = ops::mul(ops::log(pred), Tensor(s, target));
  Tensor neg_term = ops::mul(
      ops::log(ops::add_scalar(ops::mul_scalar(pred, -1.0), 1.0)),
      Tensor(s, std::move(neg)));
  return ops::mul_scalar(ops::mean(ops::add(pos_term, neg_term)), -1.0);
}

Tensor slc_loss(const Tensor& logits, std::uint16_t target_class) {
  require_classes(logits, "slc_loss");
  const std::size_t k = logits.shape()[0];
  if (target_class >= k) {
    throw ValidationError("slc_loss: target class " +
                          std::to_string(target_class) + " out of range");
  }
  Tensor logp = ops::log_softmax(ops::spatial_mean(logits), 0);
  Mask pick{{k}, std::vector<std::uint8_t>(k, 0)};
  pick.values[target_class] = 1;
  return ops::mul_scalar(ops::masked_sum(logp, pick), -1.0);
}

Tensor slc_loss(const Tensor& logits, const LabelMap& gt,
                std::uint16_t ignore_id) {
  require_classes(logits, "slc_loss");
  require_matching_labels(logits, gt, "slc_loss");
  return slc_loss(logits, dominant_class(gt, logits.shape()[0], ignore_id));
}

Tensor reconstruction_mse(const Tensor& pred, const Tensor& image) {
  if (pred.shape() != image.shape()) {
    throw ShapeError("reconstruction_mse: prediction " +
                     shape_string(pred.shape()) + " vs image " +
                     shape_string(image.shape()));
  }
  Tensor diff = ops::sub(pred, image);
  return ops::mean(ops::mul(diff, diff));
}

}  // namespace auxstep
