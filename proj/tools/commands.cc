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

#include "commands.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "auxstep/data_io.h"
#include "auxstep/error.h"
#include "auxstep/eval.h"
#include "auxstep/parallel.h"
#include "auxstep/synthgen.h"
#include "auxstep/trainer.h"
#include "svg_plot.h"

namespace auxstep::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kSeedEnv = "AUXSTEP_SEED";

std::uint64_t parse_seed(const std::string& text, const std::string& where) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    if (!text.empty() && text[0] != '-') v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw ValidationError(where + ": '" + text + "' is not a non-negative integer seed");
  }
  return v;
}

// Explicit flag, then AUXSTEP_SEED, then `fallback`.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
  if (flag) return *flag;
  if (const char* env = std::getenv(kSeedEnv); env != nullptr && *env != '\0') {
    return parse_seed(env, kSeedEnv);
  }
  return fallback;
}

bool non_empty_dir(const fs::path& dir) {
  std::error_code ec;
  return fs::exists(dir, ec) && (!fs::is_directory(dir, ec) || !fs::is_empty(dir, ec));
}

// Refuses to touch an existing, non-empty output unless forced; when forced
// the old content is removed first so reruns start from a clean slate.
void claim_output_dir(const fs::path& dir, bool force) {
  if (non_empty_dir(dir)) {
    if (!force) {
      throw ValidationError("output " + dir.string() +
                            " already exists (use --force to overwrite)");
    }
    std::error_code ec;
    fs::remove_all(dir, ec);
    if (ec) throw IoError("cannot clear " + dir.string() + ": " + ec.message());
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void claim_output_file(const fs::path& file, bool force) {
  if (fs::exists(file) && !force) {
    throw ValidationError("output " + file.string() +
                          " already exists (use --force to overwrite)");
  }
}

json read_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
}

std::string resolve_against(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal().string();
}

// Training config plus optional sweep axes. A config file is either a bare
// training config or {"train": {...}, "alphas": [...], "seeds": [...],
// "tasks": [...], "fractions": [...], "test_manifest": "..."}. Relative paths
// resolve against the file's directory.
struct ExperimentSpec {
  TrainConfig train;
  bool seed_given = false;
  std::vector<double> alphas;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> tasks;
  std::vector<double> fractions;
  std::string test_manifest;
};

ExperimentSpec load_experiment(const fs::path& path) {
  const json doc = read_json(path);
  if (!doc.is_object()) throw ValidationError(path.string() + ": expected a JSON object");
  const fs::path base = fs::absolute(path).parent_path();
  ExperimentSpec spec;
  json train = doc;
  if (doc.contains("train")) {
    static const std::set<std::string> known = {"train", "alphas", "seeds", "tasks",
                                                "fractions", "test_manifest"};
    for (const auto& [key, value] : doc.items()) {
      if (!known.contains(key)) {
        throw ValidationError(path.string() + ": unknown key '" + key + "'");
      }
    }
    train = doc.at("train");
    try {
      if (doc.contains("alphas")) spec.alphas = doc.at("alphas").get<std::vector<double>>();
      if (doc.contains("seeds")) spec.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
      if (doc.contains("tasks")) spec.tasks = doc.at("tasks").get<std::vector<std::string>>();
      if (doc.contains("fractions")) {
        spec.fractions = doc.at("fractions").get<std::vector<double>>();
      }
      if (doc.contains("test_manifest")) {
        spec.test_manifest = resolve_against(base, doc.at("test_manifest").get<std::string>());
      }
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ": " + e.what());
    }
  }
  if (!train.is_object()) throw ValidationError(path.string() + ": 'train' must be an object");
  spec.seed_given = train.contains("seed");
  if (train.contains("depth_manifest") && train["depth_manifest"].is_string()) {
    train["depth_manifest"] = resolve_against(base, train["depth_manifest"].get<std::string>());
  }
  if (train.contains("aux_manifests") && train["aux_manifests"].is_array()) {
    for (json& m : train["aux_manifests"]) {
      if (m.is_string()) m = resolve_against(base, m.get<std::string>());
    }
  }
  spec.train = config_from_json(train);
  return spec;
}

template <typename T>
void require_unique(const std::vector<T>& values, const std::string& what) {
  std::vector<T> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ValidationError(what + " contain duplicates, which would share an output directory");
  }
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ValidationError(what + " is required");
  if (!fs::is_regular_file(path)) throw ValidationError(what + " " + path + " does not exist");
}

std::string alpha_dir(double alpha) { return "alpha_" + format_double(alpha); }
std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed); }
std::string fraction_dir(double f) { return "fraction_" + format_double(f); }

// One training run of a sweep, evaluated right after training.
struct SweepRun {
  TrainConfig config;
  const TrainingData* data = nullptr;
  fs::path dir;
};

void execute_runs(const std::vector<SweepRun>& runs, const DatasetManifest& test,
                  std::size_t jobs) {
  parallel_for(runs.size(), jobs, [&](std::size_t i) {
    const SweepRun& r = runs[i];
    RunOptions options;
    options.run_dir = r.dir;
    RunRecord record = train(r.config, *r.data, options);
    EvalReport report = absrel_dataset(test, *record.model);
    report.seed = r.config.seed;
    write_report(r.dir / "report.json", report);
    spdlog::info("run {}/{} done: {} (AbsRel {:.6f}, {:.1f}s)", i + 1, runs.size(),
                 r.dir.string(), report.absrel, record.wall_seconds);
  });
}

struct Aggregate {
  std::size_t n = 0;
  double mean = 0.0;
  double stderr_ = 0.0;
};

// Post-pass over completed run directories.
Aggregate aggregate_dirs(const fs::path& group, const std::vector<std::uint64_t>& seeds) {
  std::vector<double> values;
  for (std::uint64_t s : seeds) {
    values.push_back(read_report(group / seed_dir(s) / "report.json").absrel);
  }
  Aggregate a;
  a.n = values.size();
  if (values.size() >= 2) {
    const SeedAggregate agg = aggregate_seeds(values);
    a.mean = agg.mean;
    a.stderr_ = agg.standard_error;
  } else {
    a.mean = values.front();
  }
  return a;
}

std::vector<std::string> aggregate_cells(const Aggregate& a) {
  return {std::to_string(a.n), format_double(a.mean), format_double(a.stderr_),
          format_double(a.mean * 1e4), format_double(a.stderr_ * 1e4)};
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  fs::path out;
  std::size_t scenes = 500;
  std::optional<std::uint64_t> seed;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t classes = 12;
  std::optional<double> invalid_frac;
  double train_frac = 0.8;
  bool force = false;
  std::size_t jobs = 1;
};

void cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
  SceneSpec spec;
  spec.height = a.height;
  spec.width = a.width;
  spec.num_classes = a.classes;
  if (a.invalid_frac) {
    if (!(*a.invalid_frac >= 0.0 && *a.invalid_frac < 1.0)) {
      throw ValidationError("--invalid-frac must lie in [0, 1)");
    }
    spec.invalid_max = *a.invalid_frac;
    spec.invalid_min = std::min(spec.invalid_min, *a.invalid_frac);
  }
  spec.validate();
  if (a.scenes < 2) throw ValidationError("--scenes must be at least 2 to form a split");
  const auto n_train = static_cast<std::size_t>(
      std::llround(a.train_frac * static_cast<double>(a.scenes)));
  if (!(a.train_frac > 0.0 && a.train_frac < 1.0) || n_train == 0 || n_train == a.scenes) {
    throw ValidationError("--train-frac must leave both splits non-empty");
  }
  const std::uint64_t seed = resolve_seed(a.seed, 0);
  claim_output_dir(a.out, a.force);
  const DatasetManifest all = generate(spec, a.scenes, seed, a.out, a.jobs, true);
  auto [train, test] = split(all, a.train_frac, seed);
  write_manifest(a.out / "train.json", train);
  write_manifest(a.out / "test.json", test);
  out << "generated " << all.size() << " scenes (" << train.size() << " train, "
      << test.size() << " test) in " << a.out.string() << "\n";
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  fs::path config;
  fs::path out;
  std::optional<std::uint64_t> seed;
  bool resume = false;
  bool force = false;
  std::optional<std::size_t> stop_after;
  std::size_t checkpoint_every = 0;
  std::string test_manifest;
  std::size_t jobs = 1;
};

void cmd_train(const TrainArgs& a, std::ostream& out) {
  ExperimentSpec spec = load_experiment(a.config);
  TrainConfig config = spec.train;
  config.seed = resolve_seed(a.seed, config.seed);
  if (spec.seed_given && !a.seed) config.seed = spec.train.seed;
  if (!a.test_manifest.empty()) require_file(a.test_manifest, "--test-manifest");
  if (a.resume && a.force) throw ValidationError("--resume and --force are exclusive");
  const TrainingData data = load_training_data(config);
  RunOptions options;
  options.run_dir = a.out;
  options.resume = a.resume;
  options.overwrite = a.force;
  options.stop_after = a.stop_after;
  options.checkpoint_every = a.checkpoint_every;
  RunRecord record = train(config, data, options);
  out << "completed " << record.completed_steps << "/" << config.total_steps
      << " steps in " << a.out.string() << "\n";
  if (!a.test_manifest.empty() && record.completed_steps == config.total_steps) {
    EvalReport report = absrel_dataset(read_manifest(a.test_manifest), *record.model, a.jobs);
    report.seed = config.seed;
    write_report(a.out / "report.json", report);
    out << "AbsRel " << format_double(report.absrel) << " over " << report.n_images
        << " images\n";
  }
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  fs::path run;
  std::string test_manifest;
  fs::path out;
  bool force = false;
  std::size_t jobs = 1;
};

// Loads the final model of a run and checks it against the run's config.
Model load_run_model(const fs::path& run) {
  const fs::path final_ckpt = final_checkpoint_path(run);
  if (!fs::exists(final_ckpt)) {
    throw ValidationError("run " + run.string() + " has no final checkpoint (incomplete run?)");
  }
  const TrainConfig config = config_from_json(read_json(run / "config.json"));
  Model model = load_model(final_ckpt);
  if (model.encoder().config().seed != config.encoder_seed) {
    throw ValidationError("run " + run.string() +
                          ": frozen encoder in the checkpoint does not match config.json");
  }
  return model;
}

void cmd_eval(const EvalArgs& a, std::ostream& out) {
  require_file(a.test_manifest, "--test-manifest");
  const fs::path dest = a.out.empty() ? a.run / "report.json" : a.out;
  claim_output_file(dest, a.force);
  const Model model = load_run_model(a.run);
  const DatasetManifest test = read_manifest(a.test_manifest);
  const EncoderConfig& ec = model.encoder().config();
  if (test.height != ec.height || test.width != ec.width) {
    throw ValidationError("test images are " + std::to_string(test.height) + "x" +
                          std::to_string(test.width) + " but the model expects " +
                          std::to_string(ec.height) + "x" + std::to_string(ec.width));
  }
  EvalReport report = absrel_dataset(test, model, a.jobs);
  const json cfg = read_json(a.run / "config.json");
  if (cfg.contains("seed")) report.seed = cfg.at("seed").get<std::uint64_t>();
  write_report(dest, report);
  out << "AbsRel " << format_double(report.absrel) << " (x1e4: "
      << format_double(report.absrel_x1e4) << ") over " << report.n_images << " images\n";
}

// ------------------------------------------------------------- sweep-alpha

struct SweepArgs {
  fs::path config;
  std::vector<double> alphas;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> tasks;
  std::vector<double> fractions;
  std::optional<double> alpha;  // data-efficiency joint alpha
  std::string test_manifest;
  fs::path out;
  bool force = false;
  std::size_t jobs = 1;
};

std::vector<std::uint64_t> pick_seeds(const SweepArgs& a, const ExperimentSpec& spec) {
  std::vector<std::uint64_t> seeds = !a.seeds.empty()      ? a.seeds
                                     : !spec.seeds.empty() ? spec.seeds
                                                           : std::vector<std::uint64_t>{};
  if (seeds.empty()) {
    const std::uint64_t first = resolve_seed(std::nullopt, 0);
    for (std::uint64_t i = 0; i < 4; ++i) seeds.push_back(first + i);
  }
  require_unique(seeds, "--seeds");
  return seeds;
}

std::string pick_test_manifest(const SweepArgs& a, const ExperimentSpec& spec) {
  const std::string path = !a.test_manifest.empty() ? a.test_manifest : spec.test_manifest;
  require_file(path, "--test-manifest");
  return path;
}

void write_experiment(const fs::path& out, const TrainConfig& base, const json& axes) {
  json doc = axes;
  doc["train"] = config_to_json(base);
  atomic_write(out / "experiment.json", doc.dump(2) + "\n");
}

void cmd_sweep_alpha(const SweepArgs& a, std::ostream& out) {
  const ExperimentSpec spec = load_experiment(a.config);
  std::vector<double> alphas = !a.alphas.empty()      ? a.alphas
                               : !spec.alphas.empty() ? spec.alphas
                                                      : std::vector<double>{0.0, 0.5, 0.9, 1.0};
  for (double alpha : alphas) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
      throw ValidationError("alpha " + format_double(alpha) + " is outside [0, 1]");
    }
  }
  require_unique(alphas, "--alphas");
  std::sort(alphas.begin(), alphas.end());
  const std::vector<std::uint64_t> seeds = pick_seeds(a, spec);
  std::vector<std::string> task_names = !a.tasks.empty()      ? a.tasks
                                        : !spec.tasks.empty() ? spec.tasks
                                                              : std::vector<std::string>{"mldc"};
  require_unique(task_names, "--task");
  std::vector<TaskKind> tasks;
  for (const std::string& t : task_names) {
    const TaskKind k = parse_task_kind(t);
    if (k == TaskKind::kDepth) throw ValidationError("depth is not an auxiliary task");
    tasks.push_back(k);
  }
  const std::string test_path = pick_test_manifest(a, spec);
  if (spec.train.aux_manifests.empty()) {
    throw ValidationError("the config lists no aux_manifests for the joint runs");
  }
  TrainConfig base = spec.train;
  base.mode = TrainMode::kBaseline;
  base.beta.reset();
  base.gamma.reset();
  base.validate();
  const DatasetManifest test = read_manifest(test_path);

  const TrainingData base_data = load_training_data(base);
  std::vector<TrainingData> task_data;
  std::vector<TrainConfig> task_configs;
  for (TaskKind k : tasks) {
    TrainConfig c = base;
    c.mode = TrainMode::kJoint;
    c.aux_task = k;
    task_data.push_back(load_training_data(c));
    task_configs.push_back(c);
  }
  // Inputs are fully loaded before anything is written.
  claim_output_dir(a.out, a.force);
  write_experiment(a.out, base,
                   {{"alphas", alphas}, {"seeds", seeds}, {"tasks", task_names},
                    {"test_manifest", test_path}});
  std::vector<SweepRun> runs;
  for (std::uint64_t s : seeds) {
    TrainConfig c = base;
    c.seed = s;
    runs.push_back({c, &base_data, a.out / "baseline" / seed_dir(s)});
  }
  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    for (double alpha : alphas) {
      for (std::uint64_t s : seeds) {
        TrainConfig c = task_configs[ti];
        c.alpha = alpha;
        c.seed = s;
        runs.push_back({c, &task_data[ti], a.out / task_names[ti] / alpha_dir(alpha) / seed_dir(s)});
      }
    }
  }
  execute_runs(runs, test, a.jobs);

  std::vector<std::vector<std::string>> rows;
  const Aggregate baseline = aggregate_dirs(a.out / "baseline", seeds);
  std::vector<std::string> brow = {"baseline", ""};
  for (std::string& c : aggregate_cells(baseline)) brow.push_back(std::move(c));
  rows.push_back(brow);
  PlotSpec plot;
  plot.title = "AbsRel vs task-focusing parameter";
  plot.x_label = "alpha";
  plot.y_label = "AbsRel x 1e4";
  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    PlotSeries series;
    series.name = task_names[ti];
    for (double alpha : alphas) {
      const Aggregate agg = aggregate_dirs(a.out / task_names[ti] / alpha_dir(alpha), seeds);
      std::vector<std::string> row = {task_names[ti], format_double(alpha)};
      for (std::string& c : aggregate_cells(agg)) row.push_back(std::move(c));
      rows.push_back(row);
      series.x.push_back(alpha);
      series.y.push_back(agg.mean * 1e4);
      series.err.push_back(agg.stderr_ * 1e4);
    }
    plot.series.push_back(series);
  }
  plot.references.push_back({baseline.mean * 1e4, false, "baseline"});
  if (baseline.stderr_ > 0.0) {
    plot.references.push_back({(baseline.mean + baseline.stderr_) * 1e4, true, "baseline +/- s.e."});
    plot.references.push_back({(baseline.mean - baseline.stderr_) * 1e4, true, ""});
  }
  write_csv(a.out / "sweep.csv",
            {"series", "alpha", "n_seeds", "mean_absrel", "stderr_absrel",
             "mean_absrel_x1e4", "stderr_absrel_x1e4"},
            rows);
  atomic_write(a.out / "sweep.svg", render_svg(plot));
  out << "wrote " << (a.out / "sweep.csv").string() << " and "
      << (a.out / "sweep.svg").string() << " (" << runs.size() << " runs)\n";
}

// --------------------------------------------------------- data-efficiency

void cmd_data_efficiency(const SweepArgs& a, std::ostream& out) {
  const ExperimentSpec spec = load_experiment(a.config);
  std::vector<double> fractions =
      !a.fractions.empty()      ? a.fractions
      : !spec.fractions.empty() ? spec.fractions
                                : std::vector<double>{0.01, 0.05, 0.1, 0.2, 1.0};
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) {
      throw ValidationError("fraction " + format_double(f) + " is outside (0, 1]");
    }
  }
  require_unique(fractions, "--fractions");
  std::sort(fractions.begin(), fractions.end());
  const std::vector<std::uint64_t> seeds = pick_seeds(a, spec);
  const double alpha = a.alpha.value_or(0.9);
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("--alpha must lie in [0, 1]");
  const std::string task_name = !a.tasks.empty() ? a.tasks.front() : "mldc";
  const TaskKind task = parse_task_kind(task_name);
  if (task == TaskKind::kDepth) throw ValidationError("depth is not an auxiliary task");
  const std::string test_path = pick_test_manifest(a, spec);
  if (spec.train.aux_manifests.empty()) {
    throw ValidationError("the config lists no aux_manifests for the joint runs");
  }
  TrainConfig base = spec.train;
  base.mode = TrainMode::kBaseline;
  base.beta.reset();
  base.gamma.reset();
  base.validate();
  const DatasetManifest depth_all = read_manifest(base.depth_manifest);
  std::vector<DatasetManifest> subsets;
  for (double f : fractions) {
    subsets.push_back(subset_fraction(depth_all, f, base.subset_seed));
    if (subsets.back().size() == 0) {
      throw ValidationError("fraction " + format_double(f) + " selects no depth samples");
    }
  }
  const DatasetManifest test = read_manifest(test_path);

  std::vector<TrainingData> data;  // baseline, joint per fraction
  std::vector<TrainConfig> configs;
  data.reserve(2 * fractions.size());
  for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
    TrainConfig b = base;
    b.depth_fraction = fractions[fi];
    TrainConfig j = b;
    j.mode = TrainMode::kJoint;
    j.alpha = alpha;
    j.aux_task = task;
    data.push_back(load_training_data(b));
    data.push_back(load_training_data(j));
    configs.push_back(b);
    configs.push_back(j);
  }
  // Inputs are fully loaded before anything is written.
  claim_output_dir(a.out, a.force);
  write_experiment(a.out, base,
                   {{"fractions", fractions}, {"seeds", seeds}, {"alpha", alpha},
                    {"task", task_name}, {"test_manifest", test_path}});
  for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
    json ids = json::array();
    for (const SampleEntry& e : subsets[fi].samples) ids.push_back(e.id);
    fs::create_directories(a.out / fraction_dir(fractions[fi]));
    atomic_write(a.out / fraction_dir(fractions[fi]) / "subset.json",
                 json{{"fraction", fractions[fi]},
                      {"subset_seed", base.subset_seed},
                      {"n", ids.size()},
                      {"ids", ids}}.dump(2) + "\n");
  }
  std::vector<SweepRun> runs;
  for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
    for (int m = 0; m < 2; ++m) {
      for (std::uint64_t s : seeds) {
        TrainConfig c = configs[2 * fi + m];
        c.seed = s;
        runs.push_back({c, &data[2 * fi + m],
                        a.out / fraction_dir(fractions[fi]) / (m == 0 ? "baseline" : "joint") /
                            seed_dir(s)});
      }
    }
  }
  execute_runs(runs, test, a.jobs);

  std::vector<std::vector<std::string>> rows;
  PlotSpec plot;
  plot.title = "AbsRel vs fraction of depth labels";
  plot.x_label = "fraction of depth training data";
  plot.y_label = "AbsRel x 1e4";
  plot.log_x = fractions.back() / fractions.front() >= 10.0;
  PlotSeries curves[2];
  curves[0].name = "baseline";
  curves[1].name = "joint (" + task_name + ", alpha " + format_double(alpha) + ")";
  for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
    for (int m = 0; m < 2; ++m) {
      const Aggregate agg = aggregate_dirs(
          a.out / fraction_dir(fractions[fi]) / (m == 0 ? "baseline" : "joint"), seeds);
      std::vector<std::string> row = {format_double(fractions[fi]),
                                      std::to_string(subsets[fi].size()),
                                      m == 0 ? "baseline" : "joint"};
      for (std::string& c : aggregate_cells(agg)) row.push_back(std::move(c));
      rows.push_back(row);
      curves[m].x.push_back(fractions[fi]);
      curves[m].y.push_back(agg.mean * 1e4);
      curves[m].err.push_back(agg.stderr_ * 1e4);
    }
  }
  plot.series = {curves[0], curves[1]};
  write_csv(a.out / "data_efficiency.csv",
            {"fraction", "n_depth", "method", "n_seeds", "mean_absrel", "stderr_absrel",
             "mean_absrel_x1e4", "stderr_absrel_x1e4"},
            rows);
  atomic_write(a.out / "data_efficiency.svg", render_svg(plot));
  out << "wrote " << (a.out / "data_efficiency.csv").string() << " and "
      << (a.out / "data_efficiency.svg").string() << " (" << runs.size() << " runs)\n";
}

// ------------------------------------------------------------- mldc-export

struct ExportArgs {
  std::string seg_manifest;
  fs::path out;
  bool force = false;
};

void cmd_mldc_export(const ExportArgs& a, std::ostream& out) {
  require_file(a.seg_manifest, "--seg-manifest");
  const DatasetManifest seg = read_manifest(a.seg_manifest);
  if (non_empty_dir(a.out) && !a.force) {
    throw ValidationError("output " + a.out.string() +
                          " already exists (use --force to overwrite)");
  }
  if (a.force) claim_output_dir(a.out, true);
  const DatasetManifest exported = mldc_export(seg, a.out, a.force);
  out << "exported " << exported.size() << " presence vectors ("
      << exported.excluded.size() << " excluded) to " << a.out.string() << "\n";
}

// -------------------------------------------------------------------- plot

struct PlotArgs {
  std::vector<std::string> reports;
  fs::path out;
  std::string title = "AbsRel per report";
  fs::path diff_baseline;
  fs::path diff_ours;
  std::string test_manifest;
  std::string sample;
  bool force = false;
};

void cmd_plot(const PlotArgs& a, std::ostream& out) {
  const bool diff = !a.diff_baseline.empty() || !a.diff_ours.empty();
  if (diff && !a.reports.empty()) {
    throw ValidationError("--report and --diff-* are exclusive");
  }
  if (a.out.empty()) throw ValidationError("--out is required");
  if (diff) {
    if (a.diff_baseline.empty() || a.diff_ours.empty() || a.sample.empty()) {
      throw ValidationError("diff maps need --diff-baseline, --diff-ours and --sample");
    }
    require_file(a.test_manifest, "--test-manifest");
    claim_output_file(a.out, a.force);
    const Model baseline = load_run_model(a.diff_baseline);
    const Model ours = load_run_model(a.diff_ours);
    const DatasetManifest m = read_manifest(a.test_manifest);
    std::optional<std::size_t> index;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m.samples[i].id == a.sample) index = i;
    }
    if (!index) throw ValidationError("sample '" + a.sample + "' is not in the manifest");
    const Sample s = load_sample(m, *index);
    if (!s.depth.defined()) throw ValidationError("sample '" + a.sample + "' has no depth");
    const ErrorMap eb = error_map(baseline.predict(s.image, "depth"), s.depth, s.valid);
    const ErrorMap eo = error_map(ours.predict(s.image, "depth"), s.depth, s.valid);
    const ErrorMap d = error_diff_map(eb, eo);
    write_diff_ppm(a.out, d);
    std::size_t better = 0;
    std::size_t valid = 0;
    for (std::size_t i = 0; i < d.values.size(); ++i) {
      if (!d.valid[i]) continue;
      ++valid;
      if (d.values[i] > 0.0) ++better;
    }
    out << "wrote " << a.out.string() << ": ours closer at " << better << " of " << valid
        << " valid pixels\n";
    return;
  }
  if (a.reports.empty()) throw ValidationError("plot needs at least one --report");
  // Reports sharing a label are aggregated into one point (mean +/- s.e.).
  std::vector<std::string> labels;
  std::map<std::string, std::vector<double>> values;
  for (const std::string& arg : a.reports) {
    const auto eq = arg.find('=');
    const std::string path = eq == std::string::npos ? arg : arg.substr(eq + 1);
    std::string label = eq == std::string::npos ? "" : arg.substr(0, eq);
    const EvalReport r = read_report(path);
    if (label.empty()) label = fs::path(path).parent_path().filename().string();
    if (label.empty()) label = fs::path(path).stem().string();
    if (!values.contains(label)) labels.push_back(label);
    values[label].push_back(r.absrel);
  }
  claim_output_file(a.out, a.force);
  PlotSpec plot;
  plot.title = a.title;
  plot.x_label = "report";
  plot.y_label = "AbsRel x 1e4";
  plot.categories = labels;
  PlotSeries series;
  series.name = "AbsRel";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::vector<double>& v = values[labels[i]];
    series.x.push_back(static_cast<double>(i));
    if (v.size() >= 2) {
      const SeedAggregate agg = aggregate_seeds(v);
      series.y.push_back(agg.mean * 1e4);
      series.err.push_back(agg.standard_error * 1e4);
    } else {
      series.y.push_back(v.front() * 1e4);
      series.err.push_back(0.0);
    }
  }
  plot.series.push_back(series);
  atomic_write(a.out, render_svg(plot));
  out << "wrote " << a.out.string() << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"auxstep: auxiliary-task training for dense depth prediction", "auxstep"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  auto jobs_opt = [](CLI::App* cmd, std::size_t& jobs) {
    cmd->add_option("--jobs", jobs, "Worker threads (runs or images in parallel)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  };
  auto seed_opt = [](CLI::App* cmd, std::optional<std::uint64_t>& seed) {
    cmd->add_option("--seed", seed,
                    std::string("Seed; falls back to $") + kSeedEnv + ", then 0");
  };

  GenDataArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic benchmark with train/test manifests");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--scenes", gen.scenes, "Number of scenes")->capture_default_str();
  seed_opt(gen_cmd, gen.seed);
  gen_cmd->add_option("--height", gen.height, "Image height")->capture_default_str();
  gen_cmd->add_option("--width", gen.width, "Image width")->capture_default_str();
  gen_cmd->add_option("--classes", gen.classes, "Number of semantic classes")->capture_default_str();
  gen_cmd->add_option("--invalid-frac", gen.invalid_frac,
                      "Largest fraction of invalid depth pixels per scene (default 0.10)");
  gen_cmd->add_option("--train-frac", gen.train_frac, "Fraction of scenes in the train split")
      ->capture_default_str();
  gen_cmd->add_flag("--force", gen.force, "Replace an existing output directory");
  jobs_opt(gen_cmd, gen.jobs);

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "Train one run from a config file");
  train_cmd->add_option("--config", tr.config, "Training config (JSON)")->required();
  train_cmd->add_option("--out", tr.out, "Run directory")->required();
  seed_opt(train_cmd, tr.seed);
  train_cmd->add_flag("--resume", tr.resume, "Continue from the run directory's checkpoint");
  train_cmd->add_flag("--force", tr.force, "Replace an existing run directory");
  train_cmd->add_option("--stop-after", tr.stop_after, "Stop after this global step");
  train_cmd->add_option("--checkpoint-every", tr.checkpoint_every,
                        "Checkpoint period in global steps (0: only at the end)")
      ->capture_default_str();
  train_cmd->add_option("--test-manifest", tr.test_manifest, "Evaluate on this manifest when done");
  jobs_opt(train_cmd, tr.jobs);

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a completed run");
  eval_cmd->add_option("--run", ev.run, "Run directory")->required();
  eval_cmd->add_option("--test-manifest", ev.test_manifest, "Test manifest")->required();
  eval_cmd->add_option("--out", ev.out, "Report path (default <run>/report.json)");
  eval_cmd->add_flag("--force", ev.force, "Replace an existing report");
  jobs_opt(eval_cmd, ev.jobs);

  SweepArgs sw;
  CLI::App* sweep_cmd = app.add_subcommand("sweep-alpha", "Baseline plus joint runs over alpha, seeds and tasks");
  sweep_cmd->add_option("--config", sw.config, "Base config or experiment file (JSON)")->required();
  sweep_cmd->add_option("--alphas", sw.alphas, "Comma-separated alphas (default 0,0.5,0.9,1)")
      ->delimiter(',');
  sweep_cmd->add_option("--seeds", sw.seeds, "Comma-separated seeds (default 4 seeds)")
      ->delimiter(',');
  sweep_cmd->add_option("--task", sw.tasks, "Auxiliary task(s): segmentation, mldc, slc, reconstruction")
      ->delimiter(',');
  sweep_cmd->add_option("--test-manifest", sw.test_manifest, "Test manifest");
  sweep_cmd->add_option("--out", sw.out, "Output directory")->required();
  sweep_cmd->add_flag("--force", sw.force, "Replace an existing output directory");
  jobs_opt(sweep_cmd, sw.jobs);

  SweepArgs de;
  CLI::App* de_cmd = app.add_subcommand("data-efficiency", "Baseline and joint runs over depth-label fractions");
  de_cmd->add_option("--config", de.config, "Base config or experiment file (JSON)")->required();
  de_cmd->add_option("--fractions", de.fractions,
                     "Comma-separated fractions (default 0.01,0.05,0.1,0.2,1)")
      ->delimiter(',');
  de_cmd->add_option("--seeds", de.seeds, "Comma-separated seeds (default 4 seeds)")->delimiter(',');
  de_cmd->add_option("--alpha", de.alpha, "Alpha of the joint runs (default 0.9)");
  de_cmd->add_option("--task", de.tasks, "Auxiliary task of the joint runs (default mldc)");
  de_cmd->add_option("--test-manifest", de.test_manifest, "Test manifest");
  de_cmd->add_option("--out", de.out, "Output directory")->required();
  de_cmd->add_flag("--force", de.force, "Replace an existing output directory");
  jobs_opt(de_cmd, de.jobs);

  ExportArgs ex;
  CLI::App* ex_cmd = app.add_subcommand("mldc-export", "Derive presence labels from a segmentation manifest");
  ex_cmd->add_option("--seg-manifest", ex.seg_manifest, "Segmentation manifest")->required();
  ex_cmd->add_option("--out", ex.out, "Output directory")->required();
  ex_cmd->add_flag("--force", ex.force, "Replace an existing output directory");

  PlotArgs pl;
  CLI::App* plot_cmd = app.add_subcommand("plot", "Plot reports (SVG) or an error-difference raster (PPM)");
  plot_cmd->add_option("--report", pl.reports, "[label=]report.json; repeatable");
  plot_cmd->add_option("--out", pl.out, "Output file")->required();
  plot_cmd->add_option("--title", pl.title, "Plot title")->capture_default_str();
  plot_cmd->add_option("--diff-baseline", pl.diff_baseline, "Baseline run directory");
  plot_cmd->add_option("--diff-ours", pl.diff_ours, "Compared run directory");
  plot_cmd->add_option("--test-manifest", pl.test_manifest, "Manifest holding the sample");
  plot_cmd->add_option("--sample", pl.sample, "Sample id for the difference map");
  plot_cmd->add_flag("--force", pl.force, "Replace an existing output file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (gen_cmd->parsed()) cmd_gen_data(gen, out);
    if (train_cmd->parsed()) cmd_train(tr, out);
    if (eval_cmd->parsed()) cmd_eval(ev, out);
    if (sweep_cmd->parsed()) cmd_sweep_alpha(sw, out);
    if (de_cmd->parsed()) cmd_data_efficiency(de, out);
    if (ex_cmd->parsed()) cmd_mldc_export(ex, out);
    if (plot_cmd->parsed()) cmd_plot(pl, out);
  } catch (const ValidationError& e) {
    err << "auxstep: error: validation: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ShapeError& e) {
    err << "auxstep: error: shape: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const NumericError& e) {
    err << "auxstep: error: numeric: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const FormatError& e) {
    err << "auxstep: error: format: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const IoError& e) {
    err << "auxstep: error: io: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "auxstep: error: runtime: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace auxstep::cli
