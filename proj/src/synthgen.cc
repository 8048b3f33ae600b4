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

#include "auxstep/synthgen.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "auxstep/error.h"
#include "auxstep/parallel.h"
#include "auxstep/rng.h"

namespace auxstep {
namespace fs = std::filesystem;

namespace {

constexpr double kBackgroundDepth = 8.0;
constexpr double kNearestObject = 0.8;
constexpr double kFarthestObject = 7.0;
constexpr double kSaturation = 0.5;
// Brightness = exposure * (kShadeBase + kShadeGain / depth).
constexpr double kShadeBase = 0.12;
constexpr double kShadeGain = 0.22;

struct Object {
  std::uint16_t cls;
  double depth;
  bool ellipse;
  double cy, cx, ry, rx;
};

bool covers(const Object& o, double y, double x) {
  const double dy = (y - o.cy) / o.ry;
  const double dx = (x - o.cx) / o.rx;
  if (o.ellipse) return dy * dy + dx * dx <= 1.0;
  return std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
}

// Channel gains for class k; their mean is exactly 1 so hue never changes
// brightness.
std::array<double, 3> class_color(std::size_t k, std::size_t num_classes) {
  const double hue = 2.0 * std::numbers::pi * static_cast<double>(k) /
                     static_cast<double>(num_classes);
  std::array<double, 3> c{};
  for (std::size_t i = 0; i < 3; ++i) {
    c[i] = 1.0 + kSaturation * std::cos(hue - 2.0 * std::numbers::pi * i / 3.0);
  }
  return c;
}

std::string sample_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return buf;
}

}  // namespace

std::vector<double> default_class_depths(std::size_t num_classes) {
  std::vector<double> mu(num_classes, kBackgroundDepth);
  if (num_classes < 2) return mu;
  const double ratio = kFarthestObject / kNearestObject;
  for (std::size_t k = 1; k < num_classes; ++k) {
    const double f = num_classes == 2 ? 0.0
                                      : static_cast<double>(k - 1) /
                                            static_cast<double>(num_classes - 2);
    mu[k] = kNearestObject * std::pow(ratio, f);
  }
  return mu;
}

void SceneSpec::validate() const {
  if (height == 0 || width == 0) throw ValidationError("scene spec: empty image size");
  if (num_classes < 2 || num_classes > kIgnoreId) {
    throw ValidationError("scene spec: num_classes must lie in [2, 65535)");
  }
  if (min_objects > max_objects) {
    throw ValidationError("scene spec: min_objects exceeds max_objects");
  }
  if (!(depth_min > 0.0 && depth_min < depth_max)) {
    throw ValidationError("scene spec: need 0 < depth_min < depth_max");
  }
  if (!(noise_sigma >= 0.0)) throw ValidationError("scene spec: negative noise");
  if (!(invalid_min >= 0.0 && invalid_min <= invalid_max && invalid_max < 1.0)) {
    throw ValidationError("scene spec: need 0 <= invalid_min <= invalid_max < 1");
  }
  if (!(depth_jitter >= 0.0 && depth_jitter < 1.0)) {
    throw ValidationError("scene spec: depth_jitter must lie in [0, 1)");
  }
  if (!(exposure_min > 0.0 && exposure_min <= exposure_max)) {
    throw ValidationError("scene spec: need 0 < exposure_min <= exposure_max");
  }
  if (!class_depths.empty() && class_depths.size() != num_classes) {
    throw ValidationError("scene spec: class_depths needs one entry per class");
  }
  for (double mu : class_depths) {
    if (!(mu >= depth_min && mu <= depth_max)) {
      throw ValidationError("scene spec: class depth outside the depth range");
    }
  }
}

double SceneSpec::class_depth(std::size_t k) const {
  if (!class_depths.empty()) return class_depths.at(k);
  return default_class_depths(num_classes).at(k);
}

nlohmann::json spec_to_json(const SceneSpec& s) {
  std::vector<double> mu = s.class_depths.empty()
                               ? default_class_depths(s.num_classes)
                               : s.class_depths;
  return {{"height", s.height},           {"width", s.width},
          {"num_classes", s.num_classes}, {"min_objects", s.min_objects},
          {"max_objects", s.max_objects}, {"depth_min", s.depth_min},
          {"depth_max", s.depth_max},     {"noise_sigma", s.noise_sigma},
          {"invalid_min", s.invalid_min}, {"invalid_max", s.invalid_max},
          {"depth_jitter", s.depth_jitter}, {"exposure_min", s.exposure_min},
          {"exposure_max", s.exposure_max}, {"class_depths", mu}};
}

SceneSpec spec_from_json(const nlohmann::json& doc) {
  SceneSpec s;
  try {
    s.height = doc.value("height", s.height);
    s.width = doc.value("width", s.width);
    s.num_classes = doc.value("num_classes", s.num_classes);
    s.min_objects = doc.value("min_objects", s.min_objects);
    s.max_objects = doc.value("max_objects", s.max_objects);
    s.depth_min = doc.value("depth_min", s.depth_min);
    s.depth_max = doc.value("depth_max", s.depth_max);
    s.noise_sigma = doc.value("noise_sigma", s.noise_sigma);
    s.invalid_min = doc.value("invalid_min", s.invalid_min);
    s.invalid_max = doc.value("invalid_max", s.invalid_max);
    s.depth_jitter = doc.value("depth_jitter", s.depth_jitter);
    s.exposure_min = doc.value("exposure_min", s.exposure_min);
    s.exposure_max = doc.value("exposure_max", s.exposure_max);
    s.class_depths = doc.value("class_depths", s.class_depths);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("scene spec: ") + e.what());
  }
  s.validate();
  return s;
}

Scene render_scene(const SceneSpec& spec, std::uint64_t scene_seed) {
  spec.validate();
  const std::size_t h = spec.height;
  const std::size_t w = spec.width;
  const std::size_t k = spec.num_classes;
  Engine rng(scene_seed);

  // Background plane: farther at the top, with a random tilt.
  const double mu0 = spec.class_depth(0);
  const double slope_y = uniform(rng, 0.2, 0.4);
  const double slope_x = uniform(rng, -0.05, 0.05);
  std::vector<double> depth(h * w);
  std::vector<std::uint16_t> seg(h * w, 0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double fy = (static_cast<double>(y) + 0.5) / static_cast<double>(h);
      const double fx = (static_cast<double>(x) + 0.5) / static_cast<double>(w);
      depth[y * w + x] =
          mu0 * (1.0 + slope_y * (0.5 - fy) + slope_x * (fx - 0.5));
    }
  }

  const std::size_t count =
      spec.min_objects + uniform_index(rng, spec.max_objects - spec.min_objects + 1);
  std::vector<Object> objects(count);
  const double min_side = static_cast<double>(std::min(h, w));
  for (Object& o : objects) {
    o.cls = static_cast<std::uint16_t>(1 + uniform_index(rng, k - 1));
    o.depth = spec.class_depth(o.cls) *
              uniform(rng, 1.0 - spec.depth_jitter, 1.0 + spec.depth_jitter);
    o.ellipse = uniform01(rng) < 0.5;
    o.cy = uniform(rng, 0.0, static_cast<double>(h));
    o.cx = uniform(rng, 0.0, static_cast<double>(w));
    o.ry = uniform(rng, 0.06, 0.22) * min_side;
    o.rx = uniform(rng, 0.06, 0.22) * min_side;
  }
  // Painter's order: far objects first so nearer ones occlude them.
  std::stable_sort(objects.begin(), objects.end(),
                   [](const Object& a, const Object& b) { return a.depth > b.depth; });
  for (const Object& o : objects) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        if (!covers(o, static_cast<double>(y) + 0.5, static_cast<double>(x) + 0.5)) {
          continue;
        }
        depth[y * w + x] = o.depth;
        seg[y * w + x] = o.cls;
      }
    }
  }
  for (double& d : depth) d = std::clamp(d, spec.depth_min, spec.depth_max);

  // Image from the clean depth, before invalid blobs are stamped.
  const double exposure = uniform(rng, spec.exposure_min, spec.exposure_max);
  std::vector<std::array<double, 3>> palette(k);
  for (std::size_t c = 0; c < k; ++c) palette[c] = class_color(c, k);
  std::vector<double> image(3 * h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    const double shade = exposure * (kShadeBase + kShadeGain / depth[i]);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double v = shade * palette[seg[i]][ch] + spec.noise_sigma * normal(rng);
      image[ch * h * w + i] = std::clamp(v, 0.0, 1.0);
    }
  }

  // Invalid blobs: discs added while coverage stays within invalid_max.
  if (spec.invalid_max > 0.0) {
    const double target = uniform(rng, spec.invalid_min, spec.invalid_max);
    const double limit = spec.invalid_max * static_cast<double>(h * w);
    std::vector<std::uint8_t> invalid(h * w, 0);
    std::size_t covered = 0;
    for (int attempt = 0; attempt < 1000 &&
                          static_cast<double>(covered) < target * static_cast<double>(h * w);
         ++attempt) {
      const double r = uniform(rng, 0.03, 0.09) * min_side;
      const double cy = uniform(rng, 0.0, static_cast<double>(h));
      const double cx = uniform(rng, 0.0, static_cast<double>(w));
      std::vector<std::size_t> fresh;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const double dy = static_cast<double>(y) + 0.5 - cy;
          const double dx = static_cast<double>(x) + 0.5 - cx;
          if (dy * dy + dx * dx <= r * r && !invalid[y * w + x]) {
            fresh.push_back(y * w + x);
          }
        }
      }
      if (static_cast<double>(covered + fresh.size()) > limit) continue;
      for (std::size_t i : fresh) invalid[i] = 1;
      covered += fresh.size();
    }
    for (std::size_t i = 0; i < h * w; ++i) {
      if (invalid[i]) depth[i] = 0.0;
    }
  }

  Scene scene;
  scene.image = Tensor({3, h, w}, std::move(image));
  scene.depth = Tensor({1, h, w}, std::move(depth));
  scene.seg = LabelMap{h, w, std::move(seg)};
  return scene;
}

DatasetManifest generate(const SceneSpec& spec, std::size_t n, std::uint64_t seed,
                         const fs::path& out_dir, std::size_t jobs,
                         bool overwrite) {
  spec.validate();
  if (n == 0) throw ValidationError("generate: need at least one scene");
  const fs::path manifest_path = out_dir / "manifest.json";
  if (fs::exists(manifest_path) && !overwrite) {
    throw ValidationError("generate: " + manifest_path.string() +
                          " exists (use --force to overwrite)");
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  DatasetManifest m;
  m.name = "synthetic";
  m.role = DatasetRole::kDepth;
  m.tasks = {"depth", "segmentation"};
  m.num_classes = spec.num_classes;
  m.height = spec.height;
  m.width = spec.width;
  m.base_dir = fs::absolute(out_dir);
  m.samples.resize(n);

  parallel_for(n, jobs, [&](std::size_t i) {
    const Scene scene = render_scene(spec, derive_seed(seed, std::uint64_t{i}));
    const std::string id = sample_id(i);
    SampleEntry e{id, "images/" + id + ".dten", "depth/" + id + ".dten",
                  "seg/" + id + ".dten", "", std::nullopt};
    write_tensor(m.base_dir / e.image, from_tensor(scene.image, DType::kF32));
    Tensor depth2d({spec.height, spec.width},
                   std::vector<double>(scene.depth.data().begin(),
                                       scene.depth.data().end()));
    write_tensor(m.base_dir / e.depth, from_tensor(depth2d, DType::kF32));
    write_tensor(m.base_dir / e.seg,
                 DenseArray::u16({spec.height, spec.width}, scene.seg.ids));
    m.samples[i] = std::move(e);
  });

  atomic_write(out_dir / "scene_spec.json",
               spec_to_json(spec).dump(2) + "\n");
  write_manifest(manifest_path, m);
  return m;
}

std::pair<DatasetManifest, DatasetManifest> split(const DatasetManifest& manifest,
                                                  double train_fraction,
                                                  std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError("split: train fraction must lie in (0, 1)");
  }
  const std::size_t n = manifest.size();
  const auto n_train = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train == n) {
    throw ValidationError("split: fraction " + std::to_string(train_fraction) +
                          " leaves an empty split of " + std::to_string(n) +
                          " samples");
  }
  std::vector<std::size_t> order = permutation(n, derive_seed(seed, "split"));
  std::vector<std::size_t> train(order.begin(), order.begin() + n_train);
  std::vector<std::size_t> test(order.begin() + n_train, order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  auto pick = [&](const std::vector<std::size_t>& idx, const char* name) {
    DatasetManifest out = manifest;
    out.split = name;
    out.samples.clear();
    for (std::size_t i : idx) out.samples.push_back(manifest.samples[i]);
    return out;
  };
  return {pick(train, "train"), pick(test, "test")};
}

}  // namespace auxstep
