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


// Training objectives. Every loss returns a scalar tensor recorded on the
// active tape, so gradients flow back to the model parameters.

#ifndef AUXSTEP_LOSSES_H_
#define AUXSTEP_LOSSES_H_

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "auxstep/tensor.h"

namespace auxstep {

inline constexpr std::uint16_t kIgnoreId = 65535;
inline constexpr double kProbabilityClamp = 1e-7;

// Dense class ids, row-major H x W.
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint16_t> ids;

  std::size_t size() const { return ids.size(); }
};

enum class DepthLossKind { kL1, kL2 };

DepthLossKind parse_depth_loss_kind(std::string_view name);
std::string_view to_string(DepthLossKind kind);

// Mean over valid pixels of |pred - gt| (kL1) or (pred - gt)^2 (kL2).
// pred and gt are [1, H, W]; mask has H * W entries.
Tensor depth_loss(const Tensor& pred, const Tensor& gt, const Mask& mask,
                  DepthLossKind kind = DepthLossKind::kL1);

// Mean over non-ignored pixels of -log softmax(logits)[gt]; logits [K, H, W].
Tensor segmentation_ce(const Tensor& logits, const LabelMap& gt,
                       std::uint16_t ignore_id = kIgnoreId);

// Binary presence of each class among non-ignored pixels.
std::vector<double> mldc_target(const LabelMap& gt, std::size_t num_classes,
                                std::uint16_t ignore_id = kIgnoreId);

// Most frequent non-ignored class; ties resolve to the smallest id.
std::uint16_t dominant_class(const LabelMap& gt, std::size_t num_classes,
                             std::uint16_t ignore_id = kIgnoreId);

// Per-class spatial mean of sigmoid(logits), clamped to
// [kProbabilityClamp, 1 - kProbabilityClamp]. [K, H, W] -> [K].
Tensor mldc_prediction(const Tensor& logits);

// Mean over K of binary cross-entropy; target entries must be 0 or 1.
Tensor mldc_loss(const Tensor& pred, const std::vector<double>& target);

// Cross-entropy of spatially mean-pooled logits against `target_class`.
Tensor slc_loss(const Tensor& logits, std::uint16_t target_class);
Tensor slc_loss(const Tensor& logits, const LabelMap& gt,
                std::uint16_t ignore_id = kIgnoreId);

// Mean over all entries of (pred - image)^2.
Tensor reconstruction_mse(const Tensor& pred, const Tensor& image);

}  // namespace auxstep

#endif  // AUXSTEP_LOSSES_H_
