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

#include "auxstep/model.h"

#include <cmath>
#include <map>

#include "auxstep/error.h"
#include "auxstep/ops.h"
#include "auxstep/rng.h"

namespace auxstep {
namespace {

Tensor uniform_weight(std::uint64_t seed, const std::string& name,
                      std::size_t out, std::size_t in) {
  Engine engine(derive_seed(seed, name));
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> values(out * in);
  for (double& v : values) v = uniform(engine, -bound, bound);
  Tensor w({out, in}, std::move(values), true);
  w.set_name(name);
  return w;
}

Tensor zero_bias(const std::string& name, std::size_t out) {
  Tensor b = Tensor::zeros({out}, true);
  b.set_name(name);
  return b;
}

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

std::size_t log2_exact(std::size_t v) {
  std::size_t n = 0;
  while (v > 1) {
    v >>= 1;
    ++n;
  }
  return n;
}

}  // namespace

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kDepth: return "depth";
    case TaskKind::kSegmentation: return "segmentation";
    case TaskKind::kMldc: return "mldc";
    case TaskKind::kSlc: return "slc";
    case TaskKind::kReconstruction: return "reconstruction";
  }
  return "unknown";
}

TaskKind parse_task_kind(std::string_view name) {
  for (TaskKind k : {TaskKind::kDepth, TaskKind::kSegmentation, TaskKind::kMldc,
                     TaskKind::kSlc, TaskKind::kReconstruction}) {
    if (to_string(k) == name) return k;
  }
  throw ValidationError("unknown task kind '" + std::string(name) + "'");
}

std::size_t head_channels(TaskKind kind, std::size_t num_classes) {
  switch (kind) {
    case TaskKind::kDepth: return 1;
    case TaskKind::kReconstruction: return 3;
    default:
      if (num_classes == 0) {
        throw ValidationError("classification head needs at least one class");
      }
      return num_classes;
  }
}

FrozenEncoder::FrozenEncoder(const EncoderConfig& config) : config_(config) {
  const std::size_t p = config.patch_size;
  if (p == 0 || config.embed_dim == 0 || config.channels == 0) {
    throw ValidationError("encoder: patch_size, embed_dim and channels must be positive");
  }
  if (config.height % p != 0 || config.width % p != 0) {
    throw ValidationError("encoder: image size " + std::to_string(config.height) +
                          "x" + std::to_string(config.width) +
                          " must be a multiple of patch_size " +
                          std::to_string(p));
  }
  const std::size_t fan_in = config.channels * p * p;
  // Unit-variance-preserving bound for zero-mean unit-variance inputs.
  const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
  Engine proj(derive_seed(config.seed, "encoder.projection"));
  projection_.resize(config.embed_dim * fan_in);
  for (double& v : projection_) v = uniform(proj, -bound, bound);
  Engine pos(derive_seed(config.seed, "encoder.positional"));
  positional_.resize(config.embed_dim * grid_height() * grid_width());
  for (double& v : positional_) v = uniform(pos, -0.5, 0.5);
}

Shape FrozenEncoder::output_shape() const {
  return {config_.embed_dim, grid_height(), grid_width()};
}

std::uint64_t FrozenEncoder::fingerprint() const {
  std::uint64_t h = fnv1a(projection_.data(),
                          projection_.size() * sizeof(double));
  return fnv1a(positional_.data(), positional_.size() * sizeof(double), h);
}

Tensor FrozenEncoder::encode(const Tensor& image) const {
  const Shape& s = image.shape();
  const std::size_t p = config_.patch_size;
  if (s.size() != 3 || s[0] != config_.channels) {
    throw ShapeError("encode: expected [" + std::to_string(config_.channels) +
                     ",H,W] image, got " + shape_string(s));
  }
  if (s[1] % p != 0 || s[2] % p != 0) {
    throw ValidationError("encode: image height and width must be multiples of " +
                          std::to_string(p) + ", got " + shape_string(s));
  }
  if (s[1] != config_.height || s[2] != config_.width) {
    throw ShapeError("encode: encoder is configured for " +
                     std::to_string(config_.height) + "x" +
                     std::to_string(config_.width) + " images, got " +
                     shape_string(s));
  }
  return Tensor(output_shape(), encode(image.data()));
}

std::vector<double> FrozenEncoder::encode(std::span<const double> image) const {
  const std::size_t p = config_.patch_size;
  const std::size_t c = config_.channels;
  const std::size_t h = config_.height;
  const std::size_t w = config_.width;
  if (image.size() != c * h * w) {
    throw ShapeError("encode: image has " + std::to_string(image.size()) +
                     " values, expected " + std::to_string(c * h * w));
  }
  for (double v : image) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValidationError("encode: image values must lie in [0, 1]");
    }
  }
  const std::size_t gh = grid_height();
  const std::size_t gw = grid_width();
  const std::size_t fan_in = c * p * p;
  // Column j holds patch j flattened as (channel, dy, dx).
  std::vector<double> patches(fan_in * gh * gw);
  for (std::size_t py = 0; py < gh; ++py) {
    for (std::size_t px = 0; px < gw; ++px) {
      const std::size_t col = py * gw + px;
      std::size_t row = 0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t dy = 0; dy < p; ++dy) {
          for (std::size_t dx = 0; dx < p; ++dx) {
            patches[(row++) * gh * gw + col] =
                image[ch * h * w + (py * p + dy) * w + px * p + dx];
          }
        }
      }
    }
  }
  std::vector<double> out(positional_);
  ops::matmul_acc(projection_.data(), patches.data(), out.data(),
                  config_.embed_dim, fan_in, gh * gw);
  return out;
}

SharedDecoder::SharedDecoder(std::size_t in_channels,
                             std::vector<std::size_t> channels)
    : in_channels_(in_channels), channels_(std::move(channels)) {
  if (channels_.empty()) throw ValidationError("decoder: needs at least one stage");
  std::size_t prev = in_channels_;
  for (std::size_t i = 0; i < channels_.size(); ++i) {
    const std::string stem = "decoder.stage" + std::to_string(i);
    weights_.push_back(Tensor::zeros({channels_[i], prev}, true).set_name(stem + ".weight"));
    biases_.push_back(zero_bias(stem + ".bias", channels_[i]));
    prev = channels_[i];
  }
}

Tensor SharedDecoder::forward(const Tensor& features) const {
  return upsample(forward_grid(features));
}

Tensor SharedDecoder::forward_grid(const Tensor& features) const {
  Tensor x = features;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    x = ops::relu(ops::affine(x, weights_[i], biases_[i]));
  }
  return x;
}

Tensor SharedDecoder::upsample(const Tensor& grid) const {
  Tensor x = grid;
  for (std::size_t i = 0; i < weights_.size(); ++i) x = ops::upsample_nearest2x(x);
  return x;
}

std::vector<NamedParameter> SharedDecoder::parameters() const {
  std::vector<NamedParameter> out;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    out.push_back({weights_[i].name(), weights_[i]});
    out.push_back({biases_[i].name(), biases_[i]});
  }
  return out;
}

TaskHead::TaskHead(TaskKind kind, std::size_t in_channels,
                   std::size_t out_channels, std::string dataset_id,
                   double output_scale)
    : kind_(kind),
      out_channels_(out_channels),
      dataset_id_(std::move(dataset_id)),
      output_scale_(output_scale) {
  if (kind_ == TaskKind::kDepth && out_channels_ != 1) {
    throw ValidationError("depth head must have exactly one channel");
  }
  if (!(output_scale_ > 0.0)) {
    throw ValidationError("head output scale must be positive");
  }
  weight_ = Tensor::zeros({out_channels_, in_channels}, true).set_name(name() + ".weight");
  bias_ = zero_bias(name() + ".bias", out_channels_);
}

std::string TaskHead::name() const {
  if (kind_ == TaskKind::kDepth) return "head.depth";
  return "head.aux." + dataset_id_;
}

Tensor TaskHead::forward(const Tensor& decoded) const {
  Tensor y = ops::affine(decoded, weight_, bias_);
  if (kind_ != TaskKind::kDepth) return y;
  y = ops::softplus(y);
  if (output_scale_ != 1.0) y = ops::mul_scalar(y, output_scale_);
  return y;
}

std::vector<NamedParameter> TaskHead::parameters() const {
  return {{weight_.name(), weight_}, {bias_.name(), bias_}};
}

Model Model::init(const ModelConfig& config, std::uint64_t seed) {
  return init(config, std::make_shared<const FrozenEncoder>(config.encoder),
              seed);
}

Model Model::init(const ModelConfig& config,
                  std::shared_ptr<const FrozenEncoder> encoder,
                  std::uint64_t seed) {
  if (!encoder) throw ValidationError("model: missing encoder");
  const EncoderConfig& ec = encoder->config();
  if (!is_power_of_two(ec.patch_size) ||
      log2_exact(ec.patch_size) != config.decoder_channels.size()) {
    throw ValidationError(
        "model: decoder needs log2(patch_size) stages to reach full resolution");
  }
  Model m;
  m.config_ = config;
  m.config_.encoder = ec;
  m.encoder_ = std::move(encoder);
  m.decoder_ = SharedDecoder(ec.embed_dim, config.decoder_channels);
  const std::size_t width = m.decoder_.out_channels();
  m.depth_head_ = TaskHead(TaskKind::kDepth, width, 1, "", config.depth_scale);
  std::map<std::string, bool> seen;
  for (const AuxHeadSpec& spec : config.aux_heads) {
    if (spec.kind == TaskKind::kDepth) {
      throw ValidationError("model: auxiliary heads cannot be depth heads");
    }
    if (seen[spec.dataset_id]) {
      throw ValidationError("model: duplicate auxiliary dataset id '" +
                            spec.dataset_id + "'");
    }
    seen[spec.dataset_id] = true;
    m.aux_heads_.emplace_back(spec.kind, width,
                              head_channels(spec.kind, spec.num_classes),
                              spec.dataset_id);
  }
  for (NamedParameter& p : m.named_parameters()) {
    if (p.tensor.rank() != 2) continue;  // biases stay zero
    Tensor init = uniform_weight(seed, p.name, p.tensor.shape()[0],
                                 p.tensor.shape()[1]);
    std::copy(init.data().begin(), init.data().end(),
              p.tensor.mutable_data().begin());
  }
  return m;
}

const TaskHead& Model::head(std::string_view selector) const {
  if (selector == "depth") return depth_head_;
  if (selector == "aux" && aux_heads_.size() == 1) return aux_heads_.front();
  std::string_view id = selector;
  if (id.starts_with("aux.")) id.remove_prefix(4);
  for (const TaskHead& h : aux_heads_) {
    if (h.dataset_id() == id) return h;
  }
  throw ValidationError("unknown head '" + std::string(selector) + "'");
}

Tensor Model::predict(const Tensor& image, std::string_view selector) const {
  const TaskHead& h = head(selector);
  return forward_features(encoder_->encode(image), h);
}

Tensor Model::forward_features(const Tensor& features,
                               const TaskHead& head) const {
  // Heads are pointwise, so they commute with nearest upsampling; applying
  // them on the patch grid gives the same values at 1/4^s of the cost.
  return decoder_.upsample(head.forward(decoder_.forward_grid(features)));
}

std::vector<NamedParameter> Model::decoder_parameters() const {
  return decoder_.parameters();
}

std::vector<NamedParameter> Model::named_parameters() const {
  std::vector<NamedParameter> out = decoder_.parameters();
  for (NamedParameter& p : depth_head_.parameters()) out.push_back(std::move(p));
  for (const TaskHead& h : aux_heads_) {
    for (NamedParameter& p : h.parameters()) out.push_back(std::move(p));
  }
  return out;
}

void Model::load_parameters(const std::vector<NamedParameter>& values) {
  std::map<std::string, const Tensor*> by_name;
  for (const NamedParameter& v : values) by_name[v.name] = &v.tensor;
  for (NamedParameter& p : named_parameters()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      throw FormatError("missing parameter '" + p.name + "'");
    }
    if (it->second->shape() != p.tensor.shape()) {
      throw ShapeError("parameter '" + p.name + "': shape " +
                       shape_string(it->second->shape()) + " vs " +
                       shape_string(p.tensor.shape()));
    }
    std::copy(it->second->data().begin(), it->second->data().end(),
              p.tensor.mutable_data().begin());
  }
}

}  // namespace auxstep
