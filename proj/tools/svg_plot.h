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

// Line charts with error bars, written as standalone SVG documents.

#ifndef AUXSTEP_TOOLS_SVG_PLOT_H_
#define AUXSTEP_TOOLS_SVG_PLOT_H_

#include <optional>
#include <string>
#include <vector>

namespace auxstep::cli {

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> err;  // empty or one half-width per point
};

// Horizontal reference line, e.g. a baseline mean (solid) and its standard
// error band edges (dashed).
struct ReferenceLine {
  double y = 0.0;
  bool dashed = false;
  std::string label;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
  std::vector<ReferenceLine> references;
  bool log_x = false;
  // Category names for x = 0, 1, ...; replaces numeric x ticks when set.
  std::vector<std::string> categories;
};

// Throws ValidationError when there is nothing to draw, on mismatched
// lengths, non-finite values, or non-positive x with log_x.
std::string render_svg(const PlotSpec& spec);

std::string xml_escape(const std::string& text);

}  // namespace auxstep::cli

#endif  // AUXSTEP_TOOLS_SVG_PLOT_H_
