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

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "auxstep/error.h"
#include "auxstep/parallel.h"

namespace auxstep {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_pair(const Tensor& pred, const Tensor& gt, const Mask& mask,
                const char* op) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError(std::string(op) + ": prediction " + shape_string(pred.shape()) +
                     " vs ground truth " + shape_string(gt.shape()));
  }
  if (mask.size() != gt.numel()) {
    throw ShapeError(std::string(op) + ": mask has " + std::to_string(mask.size()) +
                     " entries for " + shape_string(gt.shape()));
  }
}

}  // namespace

double absrel_image(const Tensor& pred, const Tensor& gt, const Mask& mask) {
  check_pair(pred, gt, mask, "absrel_image");
  const auto p = pred.data();
  const auto g = gt.data();
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!mask.values[i]) continue;
    if (!(g[i] > 0.0) || !std::isfinite(g[i])) {
      throw ValidationError("absrel_image: ground truth must be positive at valid pixel " +
                            std::to_string(i));
    }
    total += std::abs(p[i] - g[i]) / g[i];
    ++n;
  }
  if (n == 0) throw ValidationError("absrel_image: no valid pixels");
  return total / static_cast<double>(n);
}

ErrorMap error_map(const Tensor& pred, const Tensor& gt, const Mask& mask) {
  check_pair(pred, gt, mask, "error_map");
  const Shape& s = gt.shape();
  ErrorMap m;
  m.height = s.size() >= 2 ? s[s.size() - 2] : 1;
  m.width = s.empty() ? 1 : s.back();
  if (m.height * m.width != gt.numel()) {
    throw ShapeError("error_map: expected a single-channel map, got " + shape_string(s));
  }
  m.values.assign(gt.numel(), 0.0);
  m.valid = mask.values;
  const auto p = pred.data();
  const auto g = gt.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!m.valid[i]) continue;
    if (!(g[i] > 0.0)) {
      throw ValidationError("error_map: ground truth must be positive at valid pixels");
    }
    m.values[i] = std::abs(p[i] - g[i]) / g[i];
  }
  return m;
}

ErrorMap error_diff_map(const ErrorMap& baseline, const ErrorMap& ours) {
  if (baseline.height != ours.height || baseline.width != ours.width ||
      baseline.valid != ours.valid) {
    throw ValidationError("error_diff_map: validity masks differ");
  }
  ErrorMap d = baseline;
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    d.values[i] = d.valid[i] ? baseline.values[i] - ours.values[i] : 0.0;
  }
  return d;
}

std::string encode_diff_ppm(const ErrorMap& diff) {
  double peak = 0.0;
  for (std::size_t i = 0; i < diff.values.size(); ++i) {
    if (diff.valid[i]) peak = std::max(peak, std::abs(diff.values[i]));
  }
  std::string out = "P6\n" + std::to_string(diff.width) + " " +
                    std::to_string(diff.height) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + 3 * diff.values.size(), '\0');
  for (std::size_t i = 0; i < diff.values.size(); ++i) {
    if (!diff.valid[i] || peak == 0.0) continue;
    const double v = diff.values[i];
    const auto level = static_cast<unsigned char>(std::lround(255.0 * std::abs(v) / peak));
    out[header + 3 * i + (v > 0.0 ? 1 : 0)] = static_cast<char>(v == 0.0 ? 0 : level);
  }
  return out;
}

void write_diff_ppm(const fs::path& path, const ErrorMap& diff) {
  atomic_write(path, encode_diff_ppm(diff));
}

double gain_percent(double baseline, double ours) {
  if (!(baseline > 0.0)) {
    throw ValidationError("gain_percent: baseline must be positive");
  }
  return (baseline - ours) / baseline * 100.0;
}

std::string format_gain(double gain) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", gain);
  std::string s = buf;
  return s == "-0.0" ? "0.0" : s;
}

EvalReport make_report(std::string dataset, std::vector<ImageResult> images) {
  if (images.empty()) throw ValidationError("evaluation: no images");
  EvalReport r;
  r.dataset = std::move(dataset);
  double total = 0.0;
  for (const ImageResult& img : images) total += img.absrel;
  r.absrel = total / static_cast<double>(images.size());
  r.absrel_x1e4 = r.absrel * 1e4;
  r.n_images = images.size();
  r.images = std::move(images);
  return r;
}

EvalReport absrel_dataset(const DatasetManifest& manifest, const Model& model,
                          std::size_t jobs) {
  if (manifest.size() == 0) throw ValidationError("absrel_dataset: empty manifest");
  std::vector<ImageResult> results(manifest.size());
  parallel_for(manifest.size(), jobs, [&](std::size_t i) {
    const Sample s = load_sample(manifest, i);
    if (!s.depth.defined()) {
      throw ValidationError("absrel_dataset: sample '" + s.id + "' has no depth");
    }
    const Tensor pred = model.predict(s.image, "depth");
    results[i] = {s.id, absrel_image(pred, s.depth, s.valid)};
  });
  return make_report(manifest.name, std::move(results));
}

json report_to_json(const EvalReport& r) {
  json images = json::array();
  for (const ImageResult& img : r.images) {
    images.push_back({{"id", img.id}, {"absrel", img.absrel}});
  }
  json doc = {{"dataset", r.dataset},
              {"seed", r.seed ? json(*r.seed) : json(nullptr)},
              {"absrel", r.absrel},
              {"absrel_x1e4", r.absrel_x1e4},
              {"n_images", r.n_images},
              {"images", std::move(images)}};
  return doc;
}

EvalReport report_from_json(const json& doc) {
  EvalReport r;
  try {
    r.dataset = doc.at("dataset").get<std::string>();
    if (!doc.at("seed").is_null()) r.seed = doc.at("seed").get<std::uint64_t>();
    r.absrel = doc.at("absrel").get<double>();
    r.absrel_x1e4 = doc.at("absrel_x1e4").get<double>();
    r.n_images = doc.at("n_images").get<std::size_t>();
    for (const json& img : doc.value("images", json::array())) {
      r.images.push_back({img.at("id").get<std::string>(), img.at("absrel").get<double>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
  return r;
}

void write_report(const fs::path& path, const EvalReport& report) {
  atomic_write(path, report_to_json(report).dump(2) + "\n");
}

EvalReport read_report(const fs::path& path) {
  try {
    return report_from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

SeedAggregate aggregate_seeds(std::vector<double> values) {
  if (values.size() < 2) {
    throw ValidationError("aggregate: standard error needs at least two seeds");
  }
  SeedAggregate a;
  const double n = static_cast<double>(values.size());
  double total = 0.0;
  for (double v : values) total += v;
  a.mean = total / n;
  double ss = 0.0;
  for (double v : values) ss += (v - a.mean) * (v - a.mean);
  a.standard_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  a.values = std::move(values);
  return a;
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, end);
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  auto join = [](const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].find_first_of(",\"\n") != std::string::npos) {
        throw ValidationError("write_csv: cell needs quoting: " + cells[i]);
      }
      if (i) line += ',';
      line += cells[i];
    }
    return line + "\n";
  };
  std::string out = join(header);
  for (const auto& row : rows) {
    if (row.size() != header.size()) {
      throw ValidationError("write_csv: row width differs from header");
    }
    out += join(row);
  }
  atomic_write(path, out);
}

}  // namespace auxstep
