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

// Predictors built from a frozen encoder, a shared decoder and per-task
// heads: depth(x) = depth_head(decoder(encoder(x))) and
// aux(x) = aux_head(decoder(encoder(x))).

#ifndef AUXSTEP_MODEL_H_
#define AUXSTEP_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "auxstep/tensor.h"

namespace auxstep {

enum class TaskKind { kDepth, kSegmentation, kMldc, kSlc, kReconstruction };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

struct EncoderConfig {
  std::size_t patch_size = 8;
  std::size_t embed_dim = 64;
  std::size_t channels = 3;
  std::size_t height = 64;
  std::size_t width = 64;
  // Fixed across runs: the encoder stands in for one pre-trained backbone.
  std::uint64_t seed = 20240101;
};

// Stand-in for a frozen pre-trained backbone: a seeded linear patch
// projection plus a fixed per-patch positional table. Immutable after
// construction and never recorded on a tape.
class FrozenEncoder {
 public:
  explicit FrozenEncoder(const EncoderConfig& config);

  // image [C, H, W] with values in [0, 1] -> [embed_dim, H/p, W/p].
  Tensor encode(const Tensor& image) const;
  std::vector<double> encode(std::span<const double> image) const;

  const EncoderConfig& config() const { return config_; }
  std::size_t grid_height() const { return config_.height / config_.patch_size; }
  std::size_t grid_width() const { return config_.width / config_.patch_size; }
  Shape output_shape() const;
  // Hash of the projection and positional table bytes.
  std::uint64_t fingerprint() const;

  const std::vector<double>& projection() const { return projection_; }
  const std::vector<double>& positional() const { return positional_; }

 private:
  EncoderConfig config_;
  std::vector<double> projection_;  // [embed_dim, channels * p * p]
  std::vector<double> positional_;  // [embed_dim, grid_h * grid_w]
};

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

// Pointwise affine stages, each followed by relu and 2x nearest upsampling,
// taking encoder features back to image resolution. Pointwise maps commute
// with nearest upsampling, so forward() equals upsample(forward_grid()) and
// the stages run on the patch grid.
class SharedDecoder {
 public:
  SharedDecoder() = default;
  SharedDecoder(std::size_t in_channels, std::vector<std::size_t> channels);

  // [E, h, w] or [B, E, h, w] -> [D, h*2^s, w*2^s] (batched likewise).
  Tensor forward(const Tensor& features) const;
  // All stages without upsampling: [D, h, w] (batched likewise).
  Tensor forward_grid(const Tensor& features) const;
  // One 2x nearest upsampling per stage.
  Tensor upsample(const Tensor& grid) const;

  std::size_t in_channels() const { return in_channels_; }
  std::size_t out_channels() const { return channels_.back(); }
  const std::vector<std::size_t>& channels() const { return channels_; }
  std::vector<NamedParameter> parameters() const;

 private:
  std::size_t in_channels_ = 0;
  std::vector<std::size_t> channels_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

// A single pointwise affine from the decoder width to the task channels.
// Depth heads apply softplus (times a fixed output scale) so predictions are
// strictly positive; all other heads emit raw values.
class TaskHead {
 public:
  TaskHead() = default;
  TaskHead(TaskKind kind, std::size_t in_channels, std::size_t out_channels,
           std::string dataset_id, double output_scale = 1.0);

  Tensor forward(const Tensor& decoded) const;

  TaskKind kind() const { return kind_; }
  std::size_t out_channels() const { return out_channels_; }
  const std::string& dataset_id() const { return dataset_id_; }
  // "depth" or "aux.<dataset_id>".
  std::string name() const;
  double output_scale() const { return output_scale_; }
  std::vector<NamedParameter> parameters() const;

 private:
  TaskKind kind_ = TaskKind::kDepth;
  std::size_t out_channels_ = 0;
  std::string dataset_id_;
  double output_scale_ = 1.0;
  Tensor weight_;
  Tensor bias_;
};

struct AuxHeadSpec {
  TaskKind kind = TaskKind::kMldc;
  std::string dataset_id = "aux";
  // Class count for classification heads; ignored for reconstruction.
  std::size_t num_classes = 12;
};

struct ModelConfig {
  EncoderConfig encoder;
  std::vector<std::size_t> decoder_channels = {48, 40, 32};
  std::vector<AuxHeadSpec> aux_heads;
  // Multiplier on the depth head's softplus output.
  double depth_scale = 1.0;
};

std::size_t head_channels(TaskKind kind, std::size_t num_classes);

class Model {
 public:
  // Affine weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero. Each
  // parameter draws from its own stream derived from (seed, name), so adding
  // auxiliary heads never changes the decoder or depth head initialization.
  static Model init(const ModelConfig& config, std::uint64_t seed);
  static Model init(const ModelConfig& config,
                    std::shared_ptr<const FrozenEncoder> encoder,
                    std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const FrozenEncoder& encoder() const { return *encoder_; }
  const std::shared_ptr<const FrozenEncoder>& shared_encoder() const {
    return encoder_;
  }
  const SharedDecoder& decoder() const { return decoder_; }
  const TaskHead& depth_head() const { return depth_head_; }
  const std::vector<TaskHead>& aux_heads() const { return aux_heads_; }

  // "depth", "aux" (only when exactly one auxiliary head exists),
  // "aux.<id>" or a bare dataset id. Throws ValidationError otherwise.
  const TaskHead& head(std::string_view selector) const;

  // Single image [C, H, W] -> task output [channels, H, W].
  Tensor predict(const Tensor& image, std::string_view selector) const;
  // Encoded features [E, h, w] or [B, E, h, w] through decoder and head.
  Tensor forward_features(const Tensor& features, const TaskHead& head) const;

  std::vector<NamedParameter> decoder_parameters() const;
  std::vector<NamedParameter> named_parameters() const;
  // Overwrites parameter values by name; shapes must match.
  void load_parameters(const std::vector<NamedParameter>& values);

 private:
  ModelConfig config_;
  std::shared_ptr<const FrozenEncoder> encoder_;
  SharedDecoder decoder_;
  TaskHead depth_head_;
  std::vector<TaskHead> aux_heads_;
};

}  // namespace auxstep

#endif  // AUXSTEP_MODEL_H_
