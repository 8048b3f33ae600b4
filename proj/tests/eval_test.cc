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

#include "auxstep/eval.h"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "auxstep/error.h"
#include "auxstep/rng.h"

namespace auxstep {
namespace {

namespace fs = std::filesystem;

Tensor map(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({1, 1, n}, std::move(v));
}

TEST(AbsRelTest, Examples) {
  Tensor gt = map({1.0, 2.0, 4.0});
  EXPECT_EQ(absrel_image(gt, gt, Mask::all({3})), 0.0);
  EXPECT_EQ(absrel_image(map({2.0, 9.0}), map({1.0, 1.0}), Mask{{2}, {1, 0}}), 1.0);
  EXPECT_NEAR(absrel_image(map({1.1, 0.9}), map({1.0, 1.0}), Mask::all({2})), 0.1,
              1e-15);
}

TEST(AbsRelTest, Errors) {
  EXPECT_THROW(absrel_image(map({1.0}), map({1.0}), Mask{{1}, {0}}), ValidationError);
  EXPECT_THROW(absrel_image(map({1.0}), map({0.0}), Mask::all({1})), ValidationError);
  EXPECT_THROW(absrel_image(map({1.0, 1.0}), map({1.0}), Mask::all({1})), ShapeError);
}

TEST(AbsRelTest, ScaleCovariantAndMaskInvariant) {
  Engine engine(6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> g(20), r(20);
    Mask mask{{20}, std::vector<std::uint8_t>(20)};
    for (std::size_t i = 0; i < 20; ++i) {
      g[i] = uniform(engine, 0.5, 10.0);
      r[i] = uniform(engine, -1.0, 1.0);
      mask.values[i] = uniform01(engine) < 0.7;
    }
    mask.values[0] = 1;
    const double c = uniform(engine, 0.0, 5.0);
    std::vector<double> p1(20), p2(20);
    for (std::size_t i = 0; i < 20; ++i) {
      p1[i] = g[i] + r[i];
      p2[i] = g[i] + c * r[i];
    }
    const double a1 = absrel_image(map(p1), map(g), mask);
    const double a2 = absrel_image(map(p2), map(g), mask);
    EXPECT_NEAR(a2, c * a1, 1e-12 * (1 + a2));
    std::vector<double> p3 = p1;
    std::vector<double> g3 = g;
    for (std::size_t i = 0; i < 20; ++i) {
      if (!mask.values[i]) {
        p3[i] = 1e6;
        g3[i] = -5.0;
      }
    }
    EXPECT_EQ(absrel_image(map(p3), map(g3), mask), a1);
  }
}

TEST(ErrorMapTest, DiffAndRaster) {
  Tensor gt({1, 1, 3}, {1.0, 2.0, 4.0});
  Mask mask{{3}, {1, 1, 0}};
  ErrorMap base = error_map(Tensor({1, 1, 3}, {1.5, 3.0, 4.0}), gt, mask);
  ErrorMap same = error_diff_map(base, base);
  for (double v : same.values) EXPECT_EQ(v, 0.0);
  ErrorMap perfect = error_map(gt, gt, mask);
  ErrorMap diff = error_diff_map(base, perfect);
  EXPECT_EQ(diff.values[0], 0.5);
  EXPECT_EQ(diff.values[1], 0.5);
  ErrorMap worse = error_diff_map(perfect, base);
  const std::string ppm = encode_diff_ppm(worse);
  const std::string header = "P6\n3 1\n255\n";
  ASSERT_EQ(ppm.size(), header.size() + 9);
  EXPECT_EQ(ppm.substr(0, header.size()), header);
  const auto px = [&](std::size_t i, std::size_t c) {
    return static_cast<unsigned char>(ppm[header.size() + 3 * i + c]);
  };
  EXPECT_EQ(px(0, 0), 255);  // ours worse -> red
  EXPECT_EQ(px(0, 1), 0);
  EXPECT_EQ(px(2, 0), 0);    // invalid -> black
  EXPECT_EQ(px(2, 1), 0);
  EXPECT_EQ(px(2, 2), 0);
  const std::string good = encode_diff_ppm(diff);
  EXPECT_EQ(static_cast<unsigned char>(good[header.size() + 1]), 255);
  ErrorMap other = perfect;
  other.valid[2] = 1;
  EXPECT_THROW(error_diff_map(base, other), ValidationError);
}

struct GainCell {
  const char* row;
  double baseline;
  double best;
  double cell;
};

// AbsRel x 1e4 columns and the printed gain of the main results table.
constexpr GainCell kMainTable[] = {
    {"NYUv2", 809, 696, 13.9},       {"SUN RGBD", 1128, 1024, 9.2},
    {"Matterport3D", 1874, 1728, 7.8}, {"Taskonomy", 1506, 1481, 1.7},
    {"DIODE In", 3588, 3239, 9.7},   {"DIODE Out", 5820, 4530, 22.2},
    {"KITTI", 605, 609, -0.6},
};

TEST(GainTest, Examples) {
  EXPECT_EQ(format_gain(gain_percent(5820, 4530)), "22.2");
  EXPECT_EQ(format_gain(gain_percent(605, 609)), "-0.7");
  EXPECT_EQ(gain_percent(3, 3), 0.0);
  EXPECT_EQ(format_gain(gain_percent(3, 3)), "0.0");
  EXPECT_THROW(gain_percent(0, 1), ValidationError);
  EXPECT_THROW(gain_percent(-1, 1), ValidationError);
}

TEST(GainTest, MainTableCellsWithinOneTenth) {
  for (const GainCell& c : kMainTable) {
    EXPECT_LE(std::abs(gain_percent(c.baseline, c.best) - c.cell), 0.1 + 1e-9)
        << c.row;
  }
}

TEST(GainTest, BackboneSwapTable) {
  constexpr GainCell cells[] = {{"NYUv2", 736, 721, 2.1},
                                {"SUN RGBD", 1028, 1018, 1.0},
                                {"Matterport3D", 1885, 1843, 2.3},
                                {"Taskonomy", 1741, 1687, 3.1},
                                {"DIODE Out", 3835, 3574, 6.8}};
  for (const GainCell& c : cells) {
    EXPECT_LE(std::abs(gain_percent(c.baseline, c.best) - c.cell), 0.1 + 1e-9)
        << c.row;
  }
  // The printed DIODE In cell (-0.4) disagrees with its own columns.
  const double diode_in = gain_percent(1993, 2073);
  EXPECT_NEAR(diode_in, -4.0, 0.05);
  EXPECT_GT(std::abs(diode_in - (-0.4)), 0.1);
}

TEST(AggregateTest, StandardError) {
  SeedAggregate a = aggregate_seeds({1, 2, 3, 4});
  EXPECT_EQ(a.mean, 2.5);
  EXPECT_NEAR(a.standard_error, std::sqrt(5.0 / 3.0) / 2.0, 1e-15);
  EXPECT_NEAR(a.standard_error, 0.6455, 1e-4);
  EXPECT_EQ(aggregate_seeds({0.3, 0.3, 0.3}).standard_error, 0.0);
  EXPECT_THROW(aggregate_seeds({1.0}), ValidationError);
}

TEST(ReportTest, RoundTripAndKeys) {
  EvalReport r = make_report("synthetic", {{"a", 0.1}, {"b", 0.3}});
  EXPECT_NEAR(r.absrel, 0.2, 1e-15);
  r.seed = 3;
  const nlohmann::json doc = report_to_json(r);
  for (const char* key : {"dataset", "seed", "absrel", "absrel_x1e4", "n_images"}) {
    EXPECT_TRUE(doc.contains(key)) << key;
  }
  const fs::path path = fs::path(testing::TempDir()) / "auxstep_report.json";
  write_report(path, r);
  EvalReport back = read_report(path);
  EXPECT_EQ(back.absrel, r.absrel);
  EXPECT_EQ(back.seed, r.seed);
  EXPECT_EQ(back.images.size(), 2u);
  EXPECT_EQ(read_file(path), report_to_json(back).dump(2) + "\n");
  EXPECT_THROW(make_report("x", {}), ValidationError);
}

TEST(CsvTest, FormatsAndRejectsRagged) {
  const fs::path path = fs::path(testing::TempDir()) / "auxstep_table.csv";
  write_csv(path, {"a", "b"}, {{"1", format_double(0.1)}});
  EXPECT_EQ(read_file(path), "a,b\n1,0.1\n");
  EXPECT_THROW(write_csv(path, {"a"}, {{"1", "2"}}), ValidationError);
}

}  // namespace
}  // namespace auxstep
