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

#include "auxstep/trainer.h"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "auxstep/error.h"
#include "auxstep/ops.h"
#include "auxstep/parallel.h"
#include "auxstep/rng.h"

namespace auxstep {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kCheckpointVersion = 1;
constexpr const char* kCheckpointFormat = "auxstep.checkpoint";

template <typename T>
T get_field(const json& doc, const char* key) {
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: bad value for '") + key +
                          "': " + e.what());
  }
}

bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0.0; }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Stacks cached features of the selected samples into [B, E, h, w].
Tensor stack_features(const EncodedSet& set, const std::vector<std::size_t>& idx,
                      const Shape& feature_shape) {
  const std::size_t block = shape_numel(feature_shape);
  std::vector<double> data(idx.size() * block);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const std::vector<double>& f = set.samples[idx[b]].features;
    std::copy(f.begin(), f.end(), data.begin() + b * block);
  }
  Shape shape{idx.size()};
  shape.insert(shape.end(), feature_shape.begin(), feature_shape.end());
  return Tensor(std::move(shape), std::move(data));
}

Tensor mean_over_batch(const std::vector<Tensor>& losses) {
  Tensor total = losses.front();
  for (std::size_t i = 1; i < losses.size(); ++i) total = ops::add(total, losses[i]);
  return ops::mul_scalar(total, 1.0 / static_cast<double>(losses.size()));
}

Tensor aux_sample_loss(TaskKind kind, const Tensor& out, const EncodedSample& s) {
  switch (kind) {
    case TaskKind::kSegmentation: return segmentation_ce(out, s.seg);
    case TaskKind::kMldc: return mldc_loss(mldc_prediction(out), s.presence);
    case TaskKind::kSlc: return slc_loss(out, s.dominant);
    case TaskKind::kReconstruction: return reconstruction_mse(out, s.image);
    case TaskKind::kDepth: break;
  }
  throw ValidationError("depth cannot be an auxiliary task");
}

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& config,
                                          std::vector<OptimizerParameter> params,
                                          std::shared_ptr<MomentStore> store) {
  if (config.optimizer == OptimizerKind::kPlainGradient) {
    return std::make_unique<PlainGradient>(std::move(params));
  }
  AdamWConfig adam;
  adam.weight_decay = config.weight_decay;
  return std::make_unique<AdamW>(std::move(params), adam, std::move(store));
}

void append_params(std::vector<OptimizerParameter>& out,
                   const std::vector<NamedParameter>& params, bool decoder) {
  for (const NamedParameter& p : params) out.push_back({p.name, p.tensor, decoder});
}

json stream_to_json(const BatchStream::State& s) {
  return {{"epoch", s.epoch}, {"position", s.position}};
}

BatchStream::State stream_from_json(const json& doc) {
  return {doc.at("epoch").get<std::uint64_t>(), doc.at("position").get<std::uint64_t>()};
}

void add_entries(Container& c, const std::string& prefix,
                 const std::vector<NamedParameter>& values) {
  for (const NamedParameter& p : values) {
    c.entries.emplace_back(prefix + p.name, from_tensor(p.tensor, DType::kF64));
  }
}

std::vector<NamedParameter> take_entries(const Container& c, const std::string& prefix) {
  std::vector<NamedParameter> out;
  for (const auto& [name, array] : c.entries) {
    if (name.compare(0, prefix.size(), prefix) == 0) {
      out.push_back({name.substr(prefix.size()), to_tensor(array)});
    }
  }
  return out;
}

Container read_checkpoint(const fs::path& path) {
  Container c = read_container(path);
  const json& h = c.header;
  if (!h.is_object() || h.value("format", "") != kCheckpointFormat) {
    throw FormatError(path.string() + ": not a checkpoint");
  }
  if (h.value("version", -1) != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported version " +
                      h.value("version", json(nullptr)).dump());
  }
  return c;
}

std::vector<LogRow> parse_log(const std::string& text, std::size_t rows,
                              const fs::path& path) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != log_header()) {
    throw FormatError(path.string() + ": missing log header");
  }
  std::vector<LogRow> out;
  while (out.size() < rows && std::getline(in, line)) {
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos;
         start = pos + 1) {
      f.push_back(line.substr(start, pos - start));
    }
    f.push_back(line.substr(start));
    if (f.size() != 5 || (f[1] != "depth" && f[1] != "aux")) {
      throw FormatError(path.string() + ": malformed log row '" + line + "'");
    }
    LogRow r;
    r.phase = f[1] == "depth" ? Phase::kDepth : Phase::kAux;
    auto num = [&](const std::string& s, auto& v) {
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size()) {
        throw FormatError(path.string() + ": malformed log value '" + s + "'");
      }
    };
    num(f[0], r.step);
    num(f[2], r.loss);
    num(f[3], r.decoder_lr);
    num(f[4], r.head_lr);
    out.push_back(r);
  }
  if (out.size() != rows) {
    throw FormatError(path.string() + ": log shorter than the checkpoint");
  }
  return out;
}

std::string render_log(const std::vector<LogRow>& rows) {
  std::string out = log_header() + "\n";
  for (const LogRow& r : rows) out += format_log_row(r) + "\n";
  return out;
}

void prepare_run_dir(const fs::path& dir, bool overwrite) {
  std::error_code ec;
  if (fs::exists(dir, ec) && !fs::is_empty(dir, ec)) {
    if (!overwrite) {
      throw ValidationError("run directory " + dir.string() +
                            " is not empty (use --force to overwrite)");
    }
    fs::remove_all(dir, ec);
    if (ec) throw IoError("cannot clear " + dir.string() + ": " + ec.message());
  }
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

}  // namespace

std::string_view to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kBaseline: return "baseline";
    case TrainMode::kJoint: return "joint";
    case TrainMode::kBetaAblation: return "beta_ablation";
    case TrainMode::kGammaAblation: return "gamma_ablation";
  }
  return "unknown";
}

TrainMode parse_train_mode(std::string_view name) {
  for (TrainMode m : {TrainMode::kBaseline, TrainMode::kJoint,
                      TrainMode::kBetaAblation, TrainMode::kGammaAblation}) {
    if (to_string(m) == name) return m;
  }
  throw ValidationError("unknown training mode '" + std::string(name) + "'");
}

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kAdamW ? "adamw" : "sgd";
}

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "adamw") return OptimizerKind::kAdamW;
  if (name == "sgd") return OptimizerKind::kPlainGradient;
  throw ValidationError("unknown optimizer '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (mode == TrainMode::kJoint && !(alpha >= 0.0 && alpha <= 1.0)) {
    throw ValidationError("alpha must lie in [0, 1]");
  }
  if (beta.has_value() != (mode == TrainMode::kBetaAblation)) {
    throw ValidationError("beta is required in beta_ablation mode and only there");
  }
  if (gamma.has_value() != (mode == TrainMode::kGammaAblation)) {
    throw ValidationError("gamma is required in gamma_ablation mode and only there");
  }
  if (beta && !finite_nonneg(*beta)) throw ValidationError("beta must be >= 0");
  if (gamma && !finite_nonneg(*gamma)) throw ValidationError("gamma must be >= 0");
  if (aux_task == TaskKind::kDepth) {
    throw ValidationError("aux_task must not be depth");
  }
  if (batch_size_depth == 0 || batch_size_aux == 0) {
    throw ValidationError("batch sizes must be positive");
  }
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) {
    throw ValidationError("base_lr must be positive");
  }
  if (!finite_nonneg(weight_decay)) throw ValidationError("weight_decay must be >= 0");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
    throw ValidationError("warmup_fraction must lie in [0, 1]");
  }
  if (!(depth_fraction > 0.0 && depth_fraction <= 1.0)) {
    throw ValidationError("depth_fraction must lie in (0, 1]");
  }
  if (!(depth_scale > 0.0) || !std::isfinite(depth_scale)) {
    throw ValidationError("depth_scale must be positive");
  }
  if (decoder_channels.empty() ||
      std::find(decoder_channels.begin(), decoder_channels.end(), 0u) !=
          decoder_channels.end()) {
    throw ValidationError("decoder_channels must be non-empty and positive");
  }
  if (joint() && aux_manifests.empty()) {
    throw ValidationError(std::string(to_string(mode)) +
                          " mode needs at least one auxiliary manifest");
  }
  lr_plan().validate();
}

LRPlan TrainConfig::lr_plan() const {
  LRPlan plan;
  plan.decoder_lr = plan.depth_head_lr = plan.aux_head_lr = base_lr;
  if (mode == TrainMode::kJoint) plan.alpha = alpha;
  if (mode == TrainMode::kBetaAblation) plan.beta = beta;
  if (mode == TrainMode::kGammaAblation) plan.gamma = gamma;
  return plan;
}

Schedule TrainConfig::schedule() const {
  return Schedule(total_steps, base_lr, warmup_fraction);
}

json config_to_json(const TrainConfig& c) {
  json doc = {
      {"mode", to_string(c.mode)},
      {"aux_task", to_string(c.aux_task)},
      {"total_steps", c.total_steps},
      {"batch_size_depth", c.batch_size_depth},
      {"batch_size_aux", c.batch_size_aux},
      {"base_lr", c.base_lr},
      {"weight_decay", c.weight_decay},
      {"warmup_fraction", c.warmup_fraction},
      {"seed", c.seed},
      {"depth_manifest", c.depth_manifest},
      {"aux_manifests", c.aux_manifests},
      {"depth_fraction", c.depth_fraction},
      {"subset_seed", c.subset_seed},
      {"depth_loss", to_string(c.depth_loss)},
      {"optimizer", to_string(c.optimizer)},
      {"share_moments", c.share_moments},
      {"depth_scale", c.depth_scale},
      {"encoder_seed", c.encoder_seed},
      {"decoder_channels", c.decoder_channels},
  };
  if (c.mode == TrainMode::kJoint) doc["alpha"] = c.alpha;
  if (c.beta) doc["beta"] = *c.beta;
  if (c.gamma) doc["gamma"] = *c.gamma;
  return doc;
}

TrainConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw ValidationError("config must be a JSON object");
  static const std::set<std::string> known = {
      "mode", "alpha", "beta", "gamma", "aux_task", "total_steps",
      "batch_size_depth", "batch_size_aux", "base_lr", "weight_decay",
      "warmup_fraction", "seed", "depth_manifest", "aux_manifests",
      "depth_fraction", "subset_seed", "depth_loss", "optimizer",
      "share_moments", "depth_scale", "encoder_seed", "decoder_channels"};
  for (const auto& [key, value] : doc.items()) {
    if (!known.contains(key)) throw ValidationError("config: unknown key '" + key + "'");
  }
  TrainConfig c;
  if (doc.contains("mode")) c.mode = parse_train_mode(get_field<std::string>(doc, "mode"));
  if (doc.contains("alpha")) {
    if (c.mode != TrainMode::kJoint) {
      throw ValidationError("config: alpha only applies to joint mode");
    }
    c.alpha = get_field<double>(doc, "alpha");
  }
  if (doc.contains("beta")) c.beta = get_field<double>(doc, "beta");
  if (doc.contains("gamma")) c.gamma = get_field<double>(doc, "gamma");
  if (doc.contains("aux_task")) {
    c.aux_task = parse_task_kind(get_field<std::string>(doc, "aux_task"));
  }
  auto size_field = [&](const char* key, std::size_t& out) {
    if (!doc.contains(key)) return;
    if (!doc.at(key).is_number_unsigned()) {
      throw ValidationError(std::string("config: '") + key +
                            "' must be a non-negative integer");
    }
    out = doc.at(key).get<std::size_t>();
  };
  size_field("total_steps", c.total_steps);
  size_field("batch_size_depth", c.batch_size_depth);
  size_field("batch_size_aux", c.batch_size_aux);
  if (doc.contains("base_lr")) c.base_lr = get_field<double>(doc, "base_lr");
  if (doc.contains("weight_decay")) c.weight_decay = get_field<double>(doc, "weight_decay");
  if (doc.contains("warmup_fraction")) {
    c.warmup_fraction = get_field<double>(doc, "warmup_fraction");
  }
  if (doc.contains("seed")) c.seed = get_field<std::uint64_t>(doc, "seed");
  if (doc.contains("depth_manifest")) {
    c.depth_manifest = get_field<std::string>(doc, "depth_manifest");
  }
  if (doc.contains("aux_manifests")) {
    c.aux_manifests = get_field<std::vector<std::string>>(doc, "aux_manifests");
  }
  if (doc.contains("depth_fraction")) {
    c.depth_fraction = get_field<double>(doc, "depth_fraction");
  }
  if (doc.contains("subset_seed")) c.subset_seed = get_field<std::uint64_t>(doc, "subset_seed");
  if (doc.contains("depth_loss")) {
    c.depth_loss = parse_depth_loss_kind(get_field<std::string>(doc, "depth_loss"));
  }
  if (doc.contains("optimizer")) {
    c.optimizer = parse_optimizer_kind(get_field<std::string>(doc, "optimizer"));
  }
  if (doc.contains("share_moments")) c.share_moments = get_field<bool>(doc, "share_moments");
  if (doc.contains("depth_scale")) c.depth_scale = get_field<double>(doc, "depth_scale");
  if (doc.contains("encoder_seed")) {
    c.encoder_seed = get_field<std::uint64_t>(doc, "encoder_seed");
  }
  if (doc.contains("decoder_channels")) {
    c.decoder_channels = get_field<std::vector<std::size_t>>(doc, "decoder_channels");
  }
  c.validate();
  return c;
}

EncodedSet encode_set(const DatasetManifest& manifest, const FrozenEncoder& encoder,
                      bool need_depth, TaskKind aux_task, bool need_aux) {
  EncodedSet set;
  set.dataset_id = manifest.name;
  set.num_classes = manifest.num_classes;
  const bool classification = aux_task != TaskKind::kReconstruction;
  if (need_aux && classification && manifest.num_classes == 0) {
    throw ValidationError("dataset '" + manifest.name + "' declares no classes");
  }
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const SampleEntry& entry = manifest.samples[i];
    Sample s = load_sample(manifest, i);
    EncodedSample e;
    e.id = s.id;
    e.features = encoder.encode(s.image.data());
    if (need_depth) {
      if (!s.depth.defined()) {
        throw ValidationError("sample '" + s.id + "' of '" + manifest.name +
                              "' has no depth");
      }
      e.depth = s.depth;
      e.valid = s.valid;
    }
    if (need_aux) {
      switch (aux_task) {
        case TaskKind::kReconstruction:
          e.image = s.image;
          break;
        case TaskKind::kSegmentation:
          if (s.seg.size() == 0) {
            throw ValidationError("sample '" + s.id + "' has no segmentation");
          }
          e.seg = std::move(s.seg);
          break;
        default: {
          if (!entry.presence.empty()) {
            const DenseArray p = read_tensor(manifest.resolve(entry.presence));
            if (p.dtype() != DType::kU16 || p.shape != Shape{manifest.num_classes}) {
              throw FormatError("sample '" + s.id + "': presence must be u16 [K]");
            }
            for (std::uint16_t v : std::get<std::vector<std::uint16_t>>(p.values)) {
              e.presence.push_back(v);
            }
          } else if (s.seg.size() != 0) {
            e.presence = mldc_target(s.seg, manifest.num_classes);
          } else {
            throw ValidationError("sample '" + s.id +
                                  "' has neither presence labels nor segmentation");
          }
          if (entry.dominant) {
            e.dominant = *entry.dominant;
          } else if (s.seg.size() != 0) {
            e.dominant = dominant_class(s.seg, manifest.num_classes);
          }
          break;
        }
      }
      const bool empty_labels =
          (aux_task == TaskKind::kSegmentation &&
           std::all_of(e.seg.ids.begin(), e.seg.ids.end(),
                       [](std::uint16_t v) { return v == kIgnoreId; })) ||
          ((aux_task == TaskKind::kMldc || aux_task == TaskKind::kSlc) &&
           std::all_of(e.presence.begin(), e.presence.end(),
                       [](double v) { return v == 0.0; }));
      if (empty_labels) {
        spdlog::warn("dataset '{}': skipping sample '{}': every pixel is ignored",
                     manifest.name, s.id);
        continue;
      }
    }
    set.samples.push_back(std::move(e));
  }
  if (set.samples.empty()) {
    throw ValidationError("dataset '" + manifest.name + "' has no usable samples");
  }
  return set;
}

TrainingData load_training_data(const TrainConfig& config) {
  config.validate();
  if (config.depth_manifest.empty()) throw ValidationError("depth_manifest is required");
  DatasetManifest depth = read_manifest(config.depth_manifest);
  if (!depth.has_task("depth")) {
    throw ValidationError("manifest '" + depth.name + "' has no depth task");
  }
  depth = subset_fraction(depth, config.depth_fraction, config.subset_seed);

  EncoderConfig ec;
  ec.height = depth.height;
  ec.width = depth.width;
  ec.seed = config.encoder_seed;
  TrainingData data;
  data.encoder = std::make_shared<const FrozenEncoder>(ec);
  data.depth = encode_set(depth, *data.encoder, true, config.aux_task, false);
  if (config.joint()) {
    std::set<std::string> ids;
    for (const std::string& path : config.aux_manifests) {
      DatasetManifest aux = read_manifest(path);
      if (aux.height != depth.height || aux.width != depth.width) {
        throw ValidationError("auxiliary dataset '" + aux.name +
                              "' must match the depth image size");
      }
      if (!ids.insert(aux.name).second) {
        throw ValidationError("auxiliary dataset '" + aux.name + "' listed twice");
      }
      data.aux.push_back(encode_set(aux, *data.encoder, false, config.aux_task, true));
    }
  }
  return data;
}

ModelConfig model_config(const TrainConfig& config, const TrainingData& data) {
  ModelConfig mc;
  mc.encoder = data.encoder->config();
  mc.decoder_channels = config.decoder_channels;
  mc.depth_scale = config.depth_scale;
  if (config.joint()) {
    for (const EncodedSet& set : data.aux) {
      mc.aux_heads.push_back({config.aux_task, set.dataset_id, set.num_classes});
    }
  }
  return mc;
}

json model_config_to_json(const ModelConfig& mc) {
  json heads = json::array();
  for (const AuxHeadSpec& h : mc.aux_heads) {
    heads.push_back({{"kind", to_string(h.kind)},
                     {"dataset_id", h.dataset_id},
                     {"num_classes", h.num_classes}});
  }
  return {{"encoder",
           {{"patch_size", mc.encoder.patch_size},
            {"embed_dim", mc.encoder.embed_dim},
            {"channels", mc.encoder.channels},
            {"height", mc.encoder.height},
            {"width", mc.encoder.width},
            {"seed", mc.encoder.seed}}},
          {"decoder_channels", mc.decoder_channels},
          {"depth_scale", mc.depth_scale},
          {"aux_heads", heads}};
}

ModelConfig model_config_from_json(const json& doc) {
  try {
    ModelConfig mc;
    const json& e = doc.at("encoder");
    mc.encoder.patch_size = e.at("patch_size").get<std::size_t>();
    mc.encoder.embed_dim = e.at("embed_dim").get<std::size_t>();
    mc.encoder.channels = e.at("channels").get<std::size_t>();
    mc.encoder.height = e.at("height").get<std::size_t>();
    mc.encoder.width = e.at("width").get<std::size_t>();
    mc.encoder.seed = e.at("seed").get<std::uint64_t>();
    mc.decoder_channels = doc.at("decoder_channels").get<std::vector<std::size_t>>();
    mc.depth_scale = doc.at("depth_scale").get<double>();
    for (const json& h : doc.at("aux_heads")) {
      mc.aux_heads.push_back({parse_task_kind(h.at("kind").get<std::string>()),
                              h.at("dataset_id").get<std::string>(),
                              h.at("num_classes").get<std::size_t>()});
    }
    return mc;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model description: ") + e.what());
  }
}

std::string log_header() { return "step,phase,loss,decoder_lr,head_lr"; }

std::string format_log_row(const LogRow& row) {
  return std::to_string(row.step) + "," + std::string(to_string(row.phase)) + "," +
         format_double(row.loss) + "," + format_double(row.decoder_lr) + "," +
         format_double(row.head_lr);
}

StepLosses global_step(std::size_t t, const Schedule& schedule, const LRPlan& plan,
                       const std::function<Tensor()>& depth_loss, Optimizer& depth_opt,
                       const std::function<Tensor()>& aux_loss, Optimizer* aux_opt) {
  const double s = schedule.multiplier(t);
  auto clear_all = [&] {
    for (const OptimizerParameter& p : depth_opt.parameters()) p.tensor.impl()->grad.clear();
    if (aux_opt != nullptr) {
      for (const OptimizerParameter& p : aux_opt->parameters()) p.tensor.impl()->grad.clear();
    }
  };
  auto phase_step = [&](Phase phase, Component head, const std::function<Tensor()>& fn,
                        Optimizer& opt) {
    clear_all();
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = fn();
    }
    const double value = loss.item();
    if (!std::isfinite(value)) {
      throw NumericError(std::string(to_string(phase)) + " loss is not finite at step " +
                         std::to_string(t));
    }
    tape.backward(loss);
    opt.step(effective_lr(phase, Component::kDecoder, s, plan),
             effective_lr(phase, head, s, plan));
    return value;
  };

  StepLosses out;
  out.depth = phase_step(Phase::kDepth, Component::kDepthHead, depth_loss, depth_opt);
  if (aux_opt != nullptr) {
    if (!aux_loss) throw ValidationError("global_step: auxiliary loss missing");
    out.aux = phase_step(Phase::kAux, Component::kAuxHead, aux_loss, *aux_opt);
  }
  clear_all();
  return out;
}

fs::path checkpoint_path(const fs::path& run_dir) { return run_dir / "checkpoint.ckpt"; }
fs::path final_checkpoint_path(const fs::path& run_dir) { return run_dir / "final.ckpt"; }

Model load_model(const fs::path& checkpoint) {
  const Container c = read_checkpoint(checkpoint);
  const ModelConfig mc = model_config_from_json(c.header.at("model"));
  auto encoder = std::make_shared<const FrozenEncoder>(mc.encoder);
  if (c.header.value("encoder_fingerprint", "") != hex64(encoder->fingerprint())) {
    throw FormatError(checkpoint.string() + ": encoder fingerprint mismatch");
  }
  Model model = Model::init(mc, encoder, 0);
  model.load_parameters(take_entries(c, "param/"));
  return model;
}

namespace {

// State of one training run between steps.
class Run {
 public:
  Run(const TrainConfig& config, const TrainingData& data, const RunOptions& options)
      : config_(config), data_(data), options_(options) {
    config_.validate();
    if (config_.joint() && data_.aux.size() != config_.aux_manifests.size()) {
      throw ValidationError("training data does not match the auxiliary manifests");
    }
    model_ = Model::init(model_config(config_, data_), data_.encoder, config_.seed);
    plan_ = config_.lr_plan();
    if (config_.total_steps > 0) schedule_ = config_.schedule();

    std::vector<OptimizerParameter> depth_params;
    append_params(depth_params, model_.decoder_parameters(), true);
    append_params(depth_params, model_.depth_head().parameters(), false);
    auto store = config_.share_moments ? std::make_shared<MomentStore>() : nullptr;
    depth_opt_ = make_optimizer(config_, depth_params, store);
    if (config_.joint()) {
      std::vector<OptimizerParameter> aux_params;
      append_params(aux_params, model_.decoder_parameters(), true);
      for (const TaskHead& h : model_.aux_heads()) append_params(aux_params, h.parameters(), false);
      aux_opt_ = make_optimizer(config_, aux_params, store);
      std::vector<std::string> ids;
      std::vector<std::size_t> sizes;
      for (std::size_t i = 0; i < data_.aux.size(); ++i) {
        ids.push_back(data_.aux[i].dataset_id);
        sizes.push_back(data_.aux[i].samples.size());
        aux_streams_.emplace_back(sizes.back(),
                                  derive_seed(derive_seed(config_.seed, "aux-stream"),
                                              std::uint64_t{i}));
      }
      mixer_.emplace(ids, sizes, derive_seed(config_.seed, "aux-mix"));
    }
    depth_stream_ = BatchStream(data_.depth.samples.size(),
                                derive_seed(config_.seed, "depth-stream"));
    feature_shape_ = data_.encoder->output_shape();
  }

  RunRecord execute() {
    const auto started = std::chrono::steady_clock::now();
    const bool on_disk = !options_.run_dir.empty();
    if (on_disk) {
      if (options_.resume) {
        restore();
      } else {
        prepare_run_dir(options_.run_dir, options_.overwrite);
        atomic_write(options_.run_dir / "config.json", config_to_json(config_).dump(2) + "\n");
      }
    }
    const std::size_t last =
        options_.stop_after ? std::min(*options_.stop_after, config_.total_steps)
                            : config_.total_steps;
    for (std::size_t t = step_ + 1; t <= last; ++t) {
      one_step(t);
      step_ = t;
      if (on_disk && options_.checkpoint_every > 0 && t % options_.checkpoint_every == 0 &&
          t != last) {
        save();
      }
    }
    if (on_disk) {
      save();
      if (step_ == config_.total_steps) {
        atomic_write(final_checkpoint_path(options_.run_dir),
                     read_file(checkpoint_path(options_.run_dir)));
      }
    }
    RunRecord record;
    record.config = config_;
    record.log = log_;
    record.completed_steps = step_;
    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (on_disk) {
      atomic_write(options_.run_dir / "timing.json",
                   json{{"wall_seconds", record.wall_seconds},
                        {"completed_steps", step_}}.dump(2) + "\n");
    }
    record.model = std::move(model_);
    return record;
  }

 private:
  Tensor depth_loss(const std::vector<std::size_t>& idx) const {
    const Tensor out = model_.forward_features(
        stack_features(data_.depth, idx, feature_shape_), model_.depth_head());
    std::vector<Tensor> losses;
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const EncodedSample& s = data_.depth.samples[idx[b]];
      losses.push_back(
          auxstep::depth_loss(ops::index_batch(out, b), s.depth, s.valid, config_.depth_loss));
    }
    return mean_over_batch(losses);
  }

  Tensor aux_loss(std::size_t source, const std::vector<std::size_t>& idx) const {
    const EncodedSet& set = data_.aux[source];
    const Tensor out = model_.forward_features(stack_features(set, idx, feature_shape_),
                                               model_.aux_heads()[source]);
    std::vector<Tensor> losses;
    for (std::size_t b = 0; b < idx.size(); ++b) {
      losses.push_back(
          aux_sample_loss(config_.aux_task, ops::index_batch(out, b), set.samples[idx[b]]));
    }
    return mean_over_batch(losses);
  }

  void one_step(std::size_t t) {
    const std::vector<std::size_t> depth_idx = depth_stream_.next(config_.batch_size_depth);
    std::function<Tensor()> aux_fn;
    if (config_.joint()) {
      const std::size_t source = mixer_->draw(t);
      const std::vector<std::size_t> aux_idx =
          aux_streams_[source].next(config_.batch_size_aux);
      aux_fn = [this, source, aux_idx] { return aux_loss(source, aux_idx); };
    }
    const StepLosses losses =
        global_step(t, schedule_, plan_, [&] { return depth_loss(depth_idx); }, *depth_opt_,
                    aux_fn, aux_opt_.get());
    const double s = schedule_.multiplier(t);
    log_.push_back({t, Phase::kDepth, losses.depth,
                    effective_lr(Phase::kDepth, Component::kDecoder, s, plan_),
                    effective_lr(Phase::kDepth, Component::kDepthHead, s, plan_)});
    if (losses.aux) {
      log_.push_back({t, Phase::kAux, *losses.aux,
                      effective_lr(Phase::kAux, Component::kDecoder, s, plan_),
                      effective_lr(Phase::kAux, Component::kAuxHead, s, plan_)});
    }
  }

  json header() const {
    json aux = json::array();
    for (const BatchStream& s : aux_streams_) aux.push_back(stream_to_json(s.state()));
    return {{"format", kCheckpointFormat},
            {"version", kCheckpointVersion},
            {"step", step_},
            {"log_rows", log_.size()},
            {"config", config_to_json(config_)},
            {"model", model_config_to_json(model_.config())},
            {"encoder_fingerprint", hex64(data_.encoder->fingerprint())},
            {"depth_stream", stream_to_json(depth_stream_.state())},
            {"aux_streams", aux}};
  }

  void save() const {
    Container c;
    c.header = header();
    add_entries(c, "param/", model_.named_parameters());
    add_entries(c, "opt.depth/", depth_opt_->state());
    if (aux_opt_) add_entries(c, "opt.aux/", aux_opt_->state());
    // Log first: a crash between the two writes leaves a log at least as long
    // as the checkpoint needs.
    atomic_write(options_.run_dir / "log.csv", render_log(log_));
    write_container(checkpoint_path(options_.run_dir), c);
  }

  void restore() {
    const fs::path path = checkpoint_path(options_.run_dir);
    if (!fs::exists(path)) {
      throw ValidationError("nothing to resume: " + path.string() + " does not exist");
    }
    const Container c = read_checkpoint(path);
    const json& h = c.header;
    try {
      if (h.at("config") != config_to_json(config_)) {
        throw ValidationError("cannot resume " + options_.run_dir.string() +
                              ": checkpoint was written with a different config");
      }
      if (h.at("encoder_fingerprint").get<std::string>() !=
          hex64(data_.encoder->fingerprint())) {
        throw ValidationError("cannot resume: frozen encoder differs from the checkpoint");
      }
      step_ = h.at("step").get<std::size_t>();
      if (step_ > config_.total_steps) throw FormatError("checkpoint step beyond total_steps");
      model_.load_parameters(take_entries(c, "param/"));
      depth_opt_->load_state(take_entries(c, "opt.depth/"));
      if (aux_opt_) aux_opt_->load_state(take_entries(c, "opt.aux/"));
      depth_stream_.restore(stream_from_json(h.at("depth_stream")));
      const json& aux = h.at("aux_streams");
      if (aux.size() != aux_streams_.size()) throw FormatError("aux stream count mismatch");
      for (std::size_t i = 0; i < aux_streams_.size(); ++i) {
        aux_streams_[i].restore(stream_from_json(aux[i]));
      }
      const fs::path log_path = options_.run_dir / "log.csv";
      log_ = parse_log(read_file(log_path), h.at("log_rows").get<std::size_t>(), log_path);
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ": malformed checkpoint header: " + e.what());
    }
  }

  TrainConfig config_;
  const TrainingData& data_;
  RunOptions options_;
  Model model_;
  LRPlan plan_;
  Schedule schedule_;
  std::unique_ptr<Optimizer> depth_opt_;
  std::unique_ptr<Optimizer> aux_opt_;
  std::optional<AuxSourceMixer> mixer_;
  BatchStream depth_stream_;
  std::vector<BatchStream> aux_streams_;
  Shape feature_shape_;
  std::size_t step_ = 0;
  std::vector<LogRow> log_;
};

}  // namespace

RunRecord train(const TrainConfig& config, const TrainingData& data,
                const RunOptions& options) {
  return Run(config, data, options).execute();
}

RunRecord train_baseline(const TrainConfig& config, const TrainingData& data,
                         const RunOptions& options) {
  if (config.mode != TrainMode::kBaseline && config.mode != TrainMode::kGammaAblation) {
    throw ValidationError("train_baseline: mode must be baseline or gamma_ablation");
  }
  return train(config, data, options);
}

RunRecord train_joint(const TrainConfig& config, const TrainingData& data,
                      const RunOptions& options) {
  if (!config.joint()) {
    throw ValidationError("train_joint: mode must be joint or beta_ablation");
  }
  return train(config, data, options);
}

SeedSummary run_seeds(const TrainConfig& config, const std::vector<std::uint64_t>& seeds,
                      const TrainingData& data, const DatasetManifest& test,
                      const fs::path& run_root, std::size_t jobs, bool overwrite) {
  if (seeds.empty()) throw ValidationError("run_seeds: no seeds given");
  SeedSummary summary;
  summary.runs.resize(seeds.size());
  parallel_for(seeds.size(), jobs, [&](std::size_t i) {
    TrainConfig c = config;
    c.seed = seeds[i];
    RunOptions options;
    if (!run_root.empty()) {
      options.run_dir = run_root / ("seed_" + std::to_string(seeds[i]));
      options.overwrite = overwrite;
    }
    RunRecord record = train(c, data, options);
    EvalReport report = absrel_dataset(test, *record.model);
    report.seed = seeds[i];
    if (!run_root.empty()) write_report(options.run_dir / "report.json", report);
    summary.runs[i] = {seeds[i], std::move(report)};
  });
  std::vector<double> values;
  for (const SeedRun& r : summary.runs) values.push_back(r.report.absrel);
  if (values.size() >= 2) {
    summary.absrel = aggregate_seeds(values);
  } else {
    summary.absrel.values = values;
    summary.absrel.mean = values.front();
  }
  return summary;
}

}  // namespace auxstep
