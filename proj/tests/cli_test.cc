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

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "svg_plot.h"

#include "auxstep/data_io.h"
#include "auxstep/error.h"
#include "auxstep/eval.h"

namespace auxstep::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  Result r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(fs::path(testing::TempDir()) / "auxstep_cli");
    fs::remove_all(*root_);
    fs::create_directories(*root_);
    const Result r = run({"gen-data", "--out", (*root_ / "world").string(), "--scenes", "20",
                          "--seed", "5", "--height", "16", "--width", "16"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    // Relative manifest paths resolve against the config file's directory.
    std::ofstream(*root_ / "cfg.json")
        << json{{"train",
                 {{"total_steps", 12},
                  {"base_lr", 0.01},
                  {"depth_manifest", "world/train.json"},
                  {"aux_manifests", {"world/train.json"}},
                  {"decoder_channels", {8, 8, 8}}}},
                {"test_manifest", "world/test.json"}}
               .dump();
  }
  static void TearDownTestSuite() {
    fs::remove_all(*root_);
    delete root_;
  }
  static std::string path(const std::string& rel) { return (*root_ / rel).string(); }

  static fs::path* root_;
};

fs::path* CliTest::root_ = nullptr;

TEST_F(CliTest, HelpExitsZeroAndListsSubcommands) {
  const Result r = run({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  for (const char* cmd : {"gen-data", "train", "eval", "sweep-alpha", "data-efficiency",
                          "mldc-export", "plot"}) {
    EXPECT_NE(r.out.find(cmd), std::string::npos) << cmd;
  }
}

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(run({}).code, kExitValidation);
  EXPECT_EQ(run({"frobnicate"}).code, kExitValidation);
  EXPECT_EQ(run({"train", "--out", path("x")}).code, kExitValidation);
  EXPECT_EQ(run({"gen-data", "--out", path("x"), "--scenes", "many"}).code, kExitValidation);
}

TEST_F(CliTest, GenDataWritesSplitAndRefusesToOverwrite) {
  const DatasetManifest train = read_manifest(path("world/train.json"));
  const DatasetManifest test = read_manifest(path("world/test.json"));
  EXPECT_EQ(train.size(), 16u);
  EXPECT_EQ(test.size(), 4u);
  const Result again = run({"gen-data", "--out", path("world"), "--scenes", "20"});
  EXPECT_EQ(again.code, kExitValidation);
  EXPECT_NE(again.err.find("auxstep: error: validation:"), std::string::npos);
  EXPECT_NE(again.err.find("--force"), std::string::npos);
}

TEST_F(CliTest, GenDataValidatesBeforeWriting) {
  const std::string out = path("never");
  EXPECT_EQ(run({"gen-data", "--out", out, "--train-frac", "1.0"}).code, kExitValidation);
  EXPECT_EQ(run({"gen-data", "--out", out, "--invalid-frac", "2"}).code, kExitValidation);
  EXPECT_EQ(run({"gen-data", "--out", out, "--classes", "1"}).code, kExitValidation);
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(CliTest, SeedFallsBackToEnvironment) {
  ::setenv("AUXSTEP_SEED", "5", 1);
  Result r = run({"gen-data", "--out", path("env_world"), "--scenes", "20", "--height", "16",
                  "--width", "16"});
  ::unsetenv("AUXSTEP_SEED");
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(slurp(path("env_world/images/000003.dten")),
            slurp(path("world/images/000003.dten")));
  ::setenv("AUXSTEP_SEED", "-3", 1);
  r = run({"gen-data", "--out", path("bad_env"), "--scenes", "20"});
  ::unsetenv("AUXSTEP_SEED");
  EXPECT_EQ(r.code, kExitValidation);
}

TEST_F(CliTest, TrainEvalAndResumeAgree) {
  Result r = run({"train", "--config", path("cfg.json"), "--out", path("run_a"),
                  "--test-manifest", path("world/test.json")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const EvalReport trained = read_report(path("run_a/report.json"));

  r = run({"eval", "--run", path("run_a"), "--test-manifest", path("world/test.json"),
           "--out", path("run_a/again.json")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(read_report(path("run_a/again.json")).absrel, trained.absrel);

  ASSERT_EQ(run({"train", "--config", path("cfg.json"), "--out", path("run_b"),
                 "--stop-after", "5", "--checkpoint-every", "2"}).code,
            kExitOk);
  EXPECT_FALSE(fs::exists(path("run_b/final.ckpt")));
  EXPECT_EQ(run({"eval", "--run", path("run_b"), "--test-manifest", path("world/test.json")})
                .code,
            kExitValidation);
  ASSERT_EQ(run({"train", "--config", path("cfg.json"), "--out", path("run_b"), "--resume"})
                .code,
            kExitOk);
  EXPECT_EQ(slurp(path("run_a/log.csv")), slurp(path("run_b/log.csv")));
  EXPECT_EQ(slurp(path("run_a/final.ckpt")), slurp(path("run_b/final.ckpt")));

  EXPECT_EQ(run({"train", "--config", path("cfg.json"), "--out", path("run_a")}).code,
            kExitValidation);
  EXPECT_EQ(run({"eval", "--run", path("run_a"), "--test-manifest", path("world/test.json"),
                 "--out", path("run_a/again.json")}).code,
            kExitValidation);
}

TEST_F(CliTest, BadConfigIsAValidationError) {
  std::ofstream(path("bad.json")) << R"({"train": {"total_steps": 3, "colour": 1}})";
  const Result r = run({"train", "--config", path("bad.json"), "--out", path("bad_run")});
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_NE(r.err.find("colour"), std::string::npos);
  std::ofstream(path("broken.json")) << "{";
  EXPECT_EQ(run({"train", "--config", path("broken.json"), "--out", path("bad_run")}).code,
            kExitValidation);
}

TEST_F(CliTest, SweepAlphaLayoutAndTable) {
  const Result r = run({"sweep-alpha", "--config", path("cfg.json"), "--alphas", "1,0",
                        "--seeds", "0,1", "--out", path("sweep")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* f : {"experiment.json", "sweep.csv", "sweep.svg", "baseline/seed_1/report.json",
                        "mldc/alpha_0/seed_0/report.json", "mldc/alpha_1/seed_1/final.ckpt"}) {
    EXPECT_TRUE(fs::exists(path("sweep/" + std::string(f)))) << f;
  }
  const std::string csv = slurp(path("sweep/sweep.csv"));
  std::istringstream lines(csv);
  std::string header, base, a0, a1;
  std::getline(lines, header);
  std::getline(lines, base);
  std::getline(lines, a0);
  std::getline(lines, a1);
  EXPECT_EQ(header,
            "series,alpha,n_seeds,mean_absrel,stderr_absrel,mean_absrel_x1e4,stderr_absrel_x1e4");
  EXPECT_EQ(base.rfind("baseline,,2,", 0), 0u);
  EXPECT_EQ(a0.rfind("mldc,0,2,", 0), 0u);
  EXPECT_EQ(a1.rfind("mldc,1,2,", 0), 0u);
  // alpha = 1 never takes an auxiliary step, so it reproduces the baseline.
  EXPECT_EQ(base.substr(base.find(",2,")), a1.substr(a1.find(",2,")));
}

TEST_F(CliTest, SweepRejectsDuplicatesBeforeRunning) {
  EXPECT_EQ(run({"sweep-alpha", "--config", path("cfg.json"), "--alphas", "0.5,0.5",
                 "--out", path("dup")}).code,
            kExitValidation);
  EXPECT_EQ(run({"sweep-alpha", "--config", path("cfg.json"), "--seeds", "1,1",
                 "--out", path("dup")}).code,
            kExitValidation);
  EXPECT_EQ(run({"sweep-alpha", "--config", path("cfg.json"), "--alphas", "1.5",
                 "--out", path("dup")}).code,
            kExitValidation);
  EXPECT_EQ(run({"sweep-alpha", "--config", path("cfg.json"), "--task", "depth",
                 "--out", path("dup")}).code,
            kExitValidation);
  EXPECT_FALSE(fs::exists(path("dup")));
}

TEST_F(CliTest, DataEfficiencyWritesNestedSubsets) {
  const Result r = run({"data-efficiency", "--config", path("cfg.json"), "--fractions",
                        "1,0.25", "--seeds", "0,1", "--out", path("eff")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const json small = json::parse(slurp(path("eff/fraction_0.25/subset.json")));
  const json full = json::parse(slurp(path("eff/fraction_1/subset.json")));
  EXPECT_EQ(small.at("n").get<int>(), 4);
  for (const json& id : small.at("ids")) {
    EXPECT_NE(std::find(full.at("ids").begin(), full.at("ids").end(), id), full.at("ids").end());
  }
  const std::string csv = slurp(path("eff/data_efficiency.csv"));
  EXPECT_LT(csv.find("\n0.25,4,baseline"), csv.find("\n1,16,baseline"));
  EXPECT_NE(csv.find("\n0.25,4,joint"), std::string::npos);
}

TEST_F(CliTest, MldcExportAndPlots) {
  Result r = run({"mldc-export", "--seg-manifest", path("world/train.json"), "--out",
                  path("presence")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(read_manifest(path("presence/manifest.json")).size(), 16u);

  ASSERT_EQ(run({"train", "--config", path("cfg.json"), "--out", path("plot_run"),
                 "--test-manifest", path("world/test.json")}).code,
            kExitOk);
  r = run({"plot", "--report", "base=" + path("plot_run/report.json"), "--report",
           path("plot_run/report.json"), "--out", path("reports.svg")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(slurp(path("reports.svg")).find("base"), std::string::npos);
  EXPECT_EQ(run({"plot", "--out", path("empty.svg")}).code, kExitValidation);

  const std::string id = read_manifest(path("world/test.json")).samples.at(0).id;
  r = run({"plot", "--diff-baseline", path("plot_run"), "--diff-ours", path("plot_run"),
           "--test-manifest", path("world/test.json"), "--sample", id, "--out",
           path("diff.ppm")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(slurp(path("diff.ppm")).rfind("P6\n16 16\n255\n", 0), 0u);
  EXPECT_EQ(run({"plot", "--diff-baseline", path("plot_run"), "--diff-ours", path("plot_run"),
                 "--test-manifest", path("world/test.json"), "--sample", "missing", "--out",
                 path("diff2.ppm")}).code,
            kExitValidation);
}

TEST(SvgPlot, EscapesAndValidates) {
  EXPECT_EQ(xml_escape("a<b & \"c\">"), "a&lt;b &amp; &quot;c&quot;&gt;");
  PlotSpec spec;
  spec.title = "t & u";
  spec.series.push_back({"s", {0.0, 1.0}, {2.0, 3.0}, {0.1, 0.2}});
  const std::string svg = render_svg(spec);
  EXPECT_EQ(svg.rfind("<?xml", 0), 0u);
  EXPECT_NE(svg.find("t &amp; u"), std::string::npos);
  spec.series[0].y.pop_back();
  EXPECT_THROW(render_svg(spec), ValidationError);
  spec.series[0].y.push_back(std::nan(""));
  EXPECT_THROW(render_svg(spec), ValidationError);
  PlotSpec logx;
  logx.log_x = true;
  logx.series.push_back({"s", {0.0, 1.0}, {1.0, 1.0}, {}});
  EXPECT_THROW(render_svg(logx), ValidationError);
  EXPECT_THROW(render_svg(PlotSpec{}), ValidationError);
}

}  // namespace
}  // namespace auxstep::cli
