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

// Baseline and joint training loops.
//
// A joint global step t is two consecutive optimizer steps on the shared
// decoder: a depth step at decoder rate alpha * eta * s(t), then an auxiliary
// step whose gradient is taken at the intermediate decoder parameters, at
// rate (1 - alpha) * eta * s(t). Heads always use their own unscaled rates.
// With alpha = 1 the auxiliary step cannot move the decoder and the depth
// trajectory is bit-identical to baseline training.

#ifndef AUXSTEP_TRAINER_H_
#define AUXSTEP_TRAINER_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "auxstep/data_io.h"
#include "auxstep/eval.h"
#include "auxstep/losses.h"
#include "auxstep/model.h"
#include "auxstep/optim.h"

namespace auxstep {

enum class TrainMode { kBaseline, kJoint, kBetaAblation, kGammaAblation };
enum class OptimizerKind { kAdamW, kPlainGradient };

std::string_view to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view name);
std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(std::string_view name);

struct TrainConfig {
  TrainMode mode = TrainMode::kBaseline;
  double alpha = 0.9;                 // joint only
  std::optional<double> beta;         // beta_ablation only
  std::optional<double> gamma;        // gamma_ablation only
  TaskKind aux_task = TaskKind::kMldc;
  std::size_t total_steps = 38400;
  std::size_t batch_size_depth = 4;
  std::size_t batch_size_aux = 4;
  double base_lr = 1e-4;
  double weight_decay = 0.01;
  double warmup_fraction = 1.0 / 3.0;
  std::uint64_t seed = 0;
  std::string depth_manifest;
  std::vector<std::string> aux_manifests;
  double depth_fraction = 1.0;
  // Seed of the depth subset; fixed across training seeds so every seed sees
  // the same labelled scenes.
  std::uint64_t subset_seed = 0;

  DepthLossKind depth_loss = DepthLossKind::kL1;
  OptimizerKind optimizer = OptimizerKind::kAdamW;
  // Let the two joint-mode optimizers share decoder moment estimates.
  bool share_moments = false;
  double depth_scale = 1.0;
  std::uint64_t encoder_seed = EncoderConfig{}.seed;
  std::vector<std::size_t> decoder_channels = {48, 40, 32};

  // Throws ValidationError on inconsistent fields.
  void validate() const;
  bool joint() const {
    return mode == TrainMode::kJoint || mode == TrainMode::kBetaAblation;
  }
  LRPlan lr_plan() const;
  Schedule schedule() const;
};

nlohmann::json config_to_json(const TrainConfig& config);
// Unknown keys are rejected so typos never pass silently.
TrainConfig config_from_json(const nlohmann::json& doc);

// A sample with its frozen-encoder features cached.
struct EncodedSample {
  std::string id;
  std::vector<double> features;  // [E, h, w]
  Tensor depth;                  // [1, H, W] when available
  Mask valid;
  LabelMap seg;
  Tensor image;                  // only kept for reconstruction targets
  std::vector<double> presence;  // MLDC target
  std::uint16_t dominant = 0;    // SLC target
};

struct EncodedSet {
  std::string dataset_id;
  std::size_t num_classes = 0;
  std::vector<EncodedSample> samples;
};

// Everything a run reads, loaded once and shareable across runs that use the
// same manifests, fraction and subset seed.
struct TrainingData {
  std::shared_ptr<const FrozenEncoder> encoder;
  EncodedSet depth;
  std::vector<EncodedSet> aux;
};

TrainingData load_training_data(const TrainConfig& config);
EncodedSet encode_set(const DatasetManifest& manifest, const FrozenEncoder& encoder,
                      bool need_depth, TaskKind aux_task, bool need_aux);

ModelConfig model_config(const TrainConfig& config, const TrainingData& data);

struct LogRow {
  std::size_t step = 0;
  Phase phase = Phase::kDepth;
  double loss = 0.0;
  double decoder_lr = 0.0;
  double head_lr = 0.0;
};

std::string log_header();
std::string format_log_row(const LogRow& row);

struct RunOptions {
  // Empty: train in memory only.
  std::filesystem::path run_dir;
  bool resume = false;
  bool overwrite = false;
  // Stop after this global step as if interrupted (checkpoint written).
  std::optional<std::size_t> stop_after;
  // 0 disables periodic checkpoints; one is always written at the end.
  std::size_t checkpoint_every = 0;
};

struct RunRecord {
  TrainConfig config;
  std::vector<LogRow> log;
  std::size_t completed_steps = 0;
  double wall_seconds = 0.0;
  std::optional<Model> model;
};

// Dispatches on config.mode.
RunRecord train(const TrainConfig& config, const TrainingData& data,
                const RunOptions& options = {});
RunRecord train_baseline(const TrainConfig& config, const TrainingData& data,
                         const RunOptions& options = {});
RunRecord train_joint(const TrainConfig& config, const TrainingData& data,
                      const RunOptions& options = {});

// Losses of one global step.
struct StepLosses {
  double depth = 0.0;
  std::optional<double> aux;
};

// One global step on arbitrary parameters, shared by the trainer and the
// closed-form tests. Clears the gradients of every optimizer parameter before
// each phase, records each loss on a fresh tape and steps the optimizer of
// that phase. `aux_loss` and `aux_opt` are absent for baseline steps.
StepLosses global_step(std::size_t t, const Schedule& schedule, const LRPlan& plan,
                       const std::function<Tensor()>& depth_loss, Optimizer& depth_opt,
                       const std::function<Tensor()>& aux_loss, Optimizer* aux_opt);

// Checkpoint file layout inside a run directory.
std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir);
std::filesystem::path final_checkpoint_path(const std::filesystem::path& run_dir);

// Restores the model parameters stored in a checkpoint. The checkpoint
// carries the architecture, so no training data is needed.
Model load_model(const std::filesystem::path& checkpoint);

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& doc);

struct SeedRun {
  std::uint64_t seed = 0;
  EvalReport report;
};

struct SeedSummary {
  std::vector<SeedRun> runs;
  SeedAggregate absrel;
};

// Trains and evaluates one run per seed. `run_root` may be empty; otherwise
// run i goes to run_root / "seed_<seed>". Runs are independent and may be
// executed by up to `jobs` threads.
SeedSummary run_seeds(const TrainConfig& config, const std::vector<std::uint64_t>& seeds,
                      const TrainingData& data, const DatasetManifest& test,
                      const std::filesystem::path& run_root = {},
                      std::size_t jobs = 1, bool overwrite = false);

}  // namespace auxstep

#endif  // AUXSTEP_TRAINER_H_
