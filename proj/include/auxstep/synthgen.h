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


// Deterministic synthetic scenes with correlated image, depth and
// segmentation. Every class k has a characteristic depth mu_k, and image
// shading falls off with depth, so both semantics and appearance carry depth
// information.

#ifndef AUXSTEP_SYNTHGEN_H_
#define AUXSTEP_SYNTHGEN_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "json.hpp"

#include "auxstep/data_io.h"

namespace auxstep {

struct SceneSpec {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t num_classes = 12;  // class 0 is the background plane
  std::size_t min_objects = 3;
  std::size_t max_objects = 8;
  double depth_min = 0.5;
  double depth_max = 10.0;
  double noise_sigma = 0.02;
  double invalid_min = 0.02;  // fraction of depth pixels inside invalid blobs
  double invalid_max = 0.10;
  // Per-object depth is mu_k * U(1 - jitter, 1 + jitter).
  double depth_jitter = 0.15;
  // Per-scene brightness multiplier range; decouples shading from depth.
  double exposure_min = 0.7;
  double exposure_max = 1.3;
  // Empty means default_class_depths(num_classes).
  std::vector<double> class_depths;

  // Throws ValidationError on inconsistent fields.
  void validate() const;
  double class_depth(std::size_t k) const;
};

// mu_0 = 8 for the background; objects spread geometrically over [0.8, 7.0].
std::vector<double> default_class_depths(std::size_t num_classes);

nlohmann::json spec_to_json(const SceneSpec& spec);
SceneSpec spec_from_json(const nlohmann::json& doc);

// One scene. Depth is [1, H, W] with invalid pixels set to 0; the image is
// [3, H, W] in [0, 1]; brightness (channel mean) is affine in 1/depth up to
// exposure and noise.
struct Scene {
  Tensor image;
  Tensor depth;
  LabelMap seg;
};

Scene render_scene(const SceneSpec& spec, std::uint64_t scene_seed);

// Writes n scenes plus manifest.json and scene_spec.json under out_dir.
// Scene i uses derive_seed(seed, i), so output is independent of `jobs`.
DatasetManifest generate(const SceneSpec& spec, std::size_t n, std::uint64_t seed,
                         const std::filesystem::path& out_dir,
                         std::size_t jobs = 1, bool overwrite = false);

// Disjoint, covering split; train gets round(train_fraction * N) samples.
std::pair<DatasetManifest, DatasetManifest> split(const DatasetManifest& manifest,
                                                  double train_fraction,
                                                  std::uint64_t seed);

}  // namespace auxstep

#endif  // AUXSTEP_SYNTHGEN_H_
