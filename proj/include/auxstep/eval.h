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


// Depth metrics, error maps, gains and report files.

#ifndef AUXSTEP_EVAL_H_
#define AUXSTEP_EVAL_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "auxstep/data_io.h"
#include "auxstep/model.h"
#include "auxstep/tensor.h"

namespace auxstep {

// Mean over valid pixels of |pred - gt| / gt, summed in row-major order.
// Throws ValidationError on an empty mask or gt <= 0 at a valid pixel.
double absrel_image(const Tensor& pred, const Tensor& gt, const Mask& mask);

// Per-pixel |pred - gt| / gt; only entries with valid != 0 are meaningful.
struct ErrorMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;
};

ErrorMap error_map(const Tensor& pred, const Tensor& gt, const Mask& mask);

// baseline - ours at each valid pixel; positive where ours is closer.
ErrorMap error_diff_map(const ErrorMap& baseline, const ErrorMap& ours);

// Binary PPM (P6, maxval 255): positive values in green, negative in red,
// both scaled linearly by the largest magnitude; invalid pixels black.
std::string encode_diff_ppm(const ErrorMap& diff);
void write_diff_ppm(const std::filesystem::path& path, const ErrorMap& diff);

// (baseline - ours) / baseline * 100, unrounded. Throws for baseline <= 0.
double gain_percent(double baseline, double ours);
// One decimal, e.g. "13.9" or "-0.6".
std::string format_gain(double gain);

struct ImageResult {
  std::string id;
  double absrel = 0.0;
};

struct EvalReport {
  std::string dataset;
  std::optional<std::uint64_t> seed;
  double absrel = 0.0;
  double absrel_x1e4 = 0.0;
  std::size_t n_images = 0;
  std::vector<ImageResult> images;
};

// Unweighted mean of per-image AbsRel over the manifest in order. Images are
// evaluated by up to `jobs` threads; the reduction is always sequential.
EvalReport absrel_dataset(const DatasetManifest& manifest, const Model& model,
                          std::size_t jobs = 1);
EvalReport make_report(std::string dataset, std::vector<ImageResult> images);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& doc);
void write_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_report(const std::filesystem::path& path);

struct SeedAggregate {
  std::vector<double> values;
  double mean = 0.0;
  // Sample standard deviation (n - 1) divided by sqrt(n).
  double standard_error = 0.0;
};

// Requires at least two values.
SeedAggregate aggregate_seeds(std::vector<double> values);

// Shortest round-trip decimal form of a double.
std::string format_double(double value);

// Writes rows under a header; every row must match the header width.
void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace auxstep

#endif  // AUXSTEP_EVAL_H_
