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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "auxstep/error.h"
#include "auxstep/rng.h"

namespace auxstep {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::path(testing::TempDir()) / ("auxstep_synth_" + name);
  fs::remove_all(dir);
  return dir;
}

TEST(SceneTest, RangesAndLabels) {
  SceneSpec spec;
  for (std::uint64_t s = 0; s < 50; ++s) {
    Scene scene = render_scene(spec, s);
    ASSERT_EQ(scene.image.shape(), (Shape{3, 64, 64}));
    ASSERT_EQ(scene.depth.shape(), (Shape{1, 64, 64}));
    std::size_t invalid = 0;
    for (double d : scene.depth.data()) {
      if (d == 0.0) {
        ++invalid;
        continue;
      }
      EXPECT_GE(d, 0.5);
      EXPECT_LE(d, 10.0);
    }
    const double frac = static_cast<double>(invalid) / 4096.0;
    EXPECT_GE(frac, 0.02);
    EXPECT_LE(frac, 0.10);
    for (double v : scene.image.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    for (auto id : scene.seg.ids) EXPECT_LT(id, 12);
  }
}

TEST(SceneTest, NoInvalidBlobsWhenDisabled) {
  SceneSpec spec;
  spec.invalid_min = spec.invalid_max = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Scene scene = render_scene(spec, s);
    for (double d : scene.depth.data()) EXPECT_GT(d, 0.0);
  }
}

TEST(SceneTest, Deterministic) {
  SceneSpec spec;
  Scene a = render_scene(spec, 77);
  Scene b = render_scene(spec, 77);
  EXPECT_TRUE(std::equal(a.image.data().begin(), a.image.data().end(),
                         b.image.data().begin()));
  EXPECT_EQ(a.seg.ids, b.seg.ids);
  Scene c = render_scene(spec, 78);
  EXPECT_NE(a.seg.ids, c.seg.ids);
}

TEST(SceneTest, BrightnessTracksInverseDepth) {
  SceneSpec spec;
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  double n = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Scene scene = render_scene(spec, derive_seed(123, s));
    const auto img = scene.image.data();
    const auto d = scene.depth.data();
    for (std::size_t i = 0; i < 4096; ++i) {
      if (d[i] <= 0.0) continue;
      const double b = (img[i] + img[4096 + i] + img[2 * 4096 + i]) / 3.0;
      const double inv = 1.0 / d[i];
      sx += b;
      sy += inv;
      sxx += b * b;
      syy += inv * inv;
      sxy += b * inv;
      n += 1;
    }
  }
  const double cov = sxy / n - sx / n * sy / n;
  const double r = cov / std::sqrt((sxx / n - sx * sx / n / n) *
                                   (syy / n - sy * sy / n / n));
  EXPECT_GT(r, 0.5);
}

TEST(SceneTest, ClassMeanDepthNearPrior) {
  SceneSpec spec;
  std::vector<double> sum(12, 0.0), count(12, 0.0);
  for (std::uint64_t s = 0; s < 400; ++s) {
    Scene scene = render_scene(spec, derive_seed(9, s));
    const auto d = scene.depth.data();
    for (std::size_t i = 0; i < 4096; ++i) {
      if (d[i] <= 0.0) continue;
      sum[scene.seg.ids[i]] += d[i];
      count[scene.seg.ids[i]] += 1;
    }
  }
  for (std::size_t k = 0; k < 12; ++k) {
    ASSERT_GT(count[k], 0) << "class " << k;
    const double mean = sum[k] / count[k];
    EXPECT_NEAR(mean, spec.class_depth(k), 0.15 * spec.class_depth(k))
        << "class " << k;
  }
}

TEST(SceneTest, SegmentationBoundariesAreDepthEdges) {
  SceneSpec spec;
  spec.invalid_min = spec.invalid_max = 0.0;
  Scene scene = render_scene(spec, 5);
  const auto d = scene.depth.data();
  for (std::size_t y = 0; y < 64; ++y) {
    for (std::size_t x = 0; x + 1 < 64; ++x) {
      const std::size_t i = y * 64 + x;
      if (scene.seg.ids[i] != scene.seg.ids[i + 1] &&
          scene.seg.ids[i] != 0 && scene.seg.ids[i + 1] != 0) {
        EXPECT_NE(d[i], d[i + 1]);
      }
    }
  }
}

TEST(SpecTest, JsonRoundTripAndValidation) {
  SceneSpec spec;
  spec.num_classes = 5;
  SceneSpec back = spec_from_json(spec_to_json(spec));
  EXPECT_EQ(back.num_classes, 5u);
  EXPECT_EQ(back.class_depths, default_class_depths(5));
  SceneSpec bad;
  bad.min_objects = 9;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = SceneSpec{};
  bad.invalid_min = 0.2;
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(GenerateTest, DirectoriesAreIdenticalAcrossRunsAndJobs) {
  SceneSpec spec;
  spec.height = spec.width = 16;
  const fs::path a = fresh_dir("a");
  const fs::path b = fresh_dir("b");
  DatasetManifest ma = generate(spec, 6, 42, a, 1);
  DatasetManifest mb = generate(spec, 6, 42, b, 3);
  EXPECT_EQ(ma.samples, mb.samples);
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    EXPECT_EQ(read_file(entry.path()), read_file(b / rel)) << rel;
  }
  validate_manifest(read_manifest(a / "manifest.json"));
  EXPECT_THROW(generate(spec, 6, 42, a), ValidationError);
  EXPECT_NO_THROW(generate(spec, 6, 42, a, 1, true));
  EXPECT_THROW(generate(spec, 0, 42, fresh_dir("c")), ValidationError);
}

TEST(SplitTest, DisjointCoveringDeterministic) {
  DatasetManifest m;
  m.name = "n";
  m.height = m.width = 1;
  for (int i = 0; i < 100; ++i) {
    m.samples.push_back({std::to_string(i), "x", "y", "", "", std::nullopt});
  }
  auto [train, test] = split(m, 0.8, 3);
  EXPECT_EQ(train.size(), 80u);
  EXPECT_EQ(test.size(), 20u);
  EXPECT_EQ(train.split, "train");
  std::set<std::string> ids;
  for (const auto& s : train.samples) ids.insert(s.id);
  for (const auto& s : test.samples) EXPECT_TRUE(ids.insert(s.id).second);
  EXPECT_EQ(ids.size(), 100u);
  EXPECT_EQ(split(m, 0.8, 3).first.samples, train.samples);
  EXPECT_THROW(split(m, 0.0, 3), ValidationError);
  EXPECT_THROW(split(m, 0.999, 3), ValidationError);
}

}  // namespace
}  // namespace auxstep
