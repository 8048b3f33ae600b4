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

#include "svg_plot.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "auxstep/error.h"

namespace auxstep::cli {
namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 170.0;  // legend column
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// Roughly five round tick values covering [lo, hi].
std::vector<double> nice_ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  }
  std::vector<double> out;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) {
    out.push_back(std::abs(t) < 1e-12 * span ? 0.0 : t);
  }
  return out;
}

}  // namespace

std::string xml_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string render_svg(const PlotSpec& spec) {
  if (spec.series.empty()) throw ValidationError("plot: no series to draw");
  double xmin = std::numeric_limits<double>::infinity();
  double xmax = -xmin;
  double ymin = xmin;
  double ymax = -xmin;
  for (const PlotSeries& s : spec.series) {
    if (s.x.empty() || s.x.size() != s.y.size() ||
        (!s.err.empty() && s.err.size() != s.y.size())) {
      throw ValidationError("plot: series '" + s.name + "' has mismatched lengths");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double e = s.err.empty() ? 0.0 : s.err[i];
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || !std::isfinite(e)) {
        throw ValidationError("plot: series '" + s.name + "' has non-finite values");
      }
      if (spec.log_x && s.x[i] <= 0.0) {
        throw ValidationError("plot: log x axis needs positive x values");
      }
      const double x = spec.log_x ? std::log10(s.x[i]) : s.x[i];
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, s.y[i] - std::abs(e));
      ymax = std::max(ymax, s.y[i] + std::abs(e));
    }
  }
  for (const ReferenceLine& r : spec.references) {
    if (!std::isfinite(r.y)) throw ValidationError("plot: non-finite reference line");
    ymin = std::min(ymin, r.y);
    ymax = std::max(ymax, r.y);
  }
  if (!spec.categories.empty()) {
    xmin = -0.5;
    xmax = static_cast<double>(spec.categories.size()) - 0.5;
  }
  if (xmax - xmin <= 0.0) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax - ymin <= 0.0) {
    const double pad = std::max(std::abs(ymax) * 0.05, 1e-6);
    ymin -= pad;
    ymax += pad;
  }
  const double ypad = 0.08 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;
  const double xpad = spec.categories.empty() ? 0.05 * (xmax - xmin) : 0.0;
  xmin -= xpad;
  xmax += xpad;

  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double x) {
    const double v = spec.log_x && spec.categories.empty() ? std::log10(x) : x;
    return kLeft + (v - xmin) / (xmax - xmin) * pw;
  };
  auto py = [&](double y) { return kTop + (ymax - y) / (ymax - ymin) * ph; };

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) +
         "\" height=\"" + num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " +
         num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "  <rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" +
         num(kHeight) + "\" fill=\"white\"/>\n";
  out += "  <text x=\"" + num(kLeft + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" "
         "font-size=\"14\">" + xml_escape(spec.title) + "</text>\n";

  // Axes and ticks.
  out += "  <g stroke=\"black\" fill=\"none\">\n";
  out += "    <line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" +
         num(kLeft + pw) + "\" y2=\"" + num(kTop + ph) + "\"/>\n";
  out += "    <line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" +
         num(kLeft) + "\" y2=\"" + num(kTop + ph) + "\"/>\n";
  out += "  </g>\n";
  out += "  <g font-size=\"11\">\n";
  for (double t : nice_ticks(ymin, ymax)) {
    out += "    <line x1=\"" + num(kLeft - 4) + "\" y1=\"" + num(py(t)) + "\" x2=\"" +
           num(kLeft) + "\" y2=\"" + num(py(t)) + "\" stroke=\"black\"/>\n";
    out += "    <text x=\"" + num(kLeft - 7) + "\" y=\"" + num(py(t) + 4) +
           "\" text-anchor=\"end\">" + tick_label(t) + "</text>\n";
  }
  std::vector<std::pair<double, std::string>> xticks;
  if (!spec.categories.empty()) {
    for (std::size_t i = 0; i < spec.categories.size(); ++i) {
      xticks.emplace_back(static_cast<double>(i), spec.categories[i]);
    }
  } else {
    std::vector<double> xs;
    for (const PlotSeries& s : spec.series) xs.insert(xs.end(), s.x.begin(), s.x.end());
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    if (xs.size() > 12) {
      xs = spec.log_x ? std::vector<double>{} : nice_ticks(xmin, xmax);
    }
    for (double x : xs) xticks.emplace_back(x, tick_label(x));
  }
  for (const auto& [x, label] : xticks) {
    const double X = spec.categories.empty() ? px(x) : kLeft + (x - xmin) / (xmax - xmin) * pw;
    out += "    <line x1=\"" + num(X) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" + num(X) +
           "\" y2=\"" + num(kTop + ph + 4) + "\" stroke=\"black\"/>\n";
    out += "    <text x=\"" + num(X) + "\" y=\"" + num(kTop + ph + 17) +
           "\" text-anchor=\"middle\">" + xml_escape(label) + "</text>\n";
  }
  out += "  </g>\n";
  out += "  <text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kHeight - 15) +
         "\" text-anchor=\"middle\">" + xml_escape(spec.x_label) + "</text>\n";
  out += "  <text x=\"18\" y=\"" + num(kTop + ph / 2) +
         "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " + num(kTop + ph / 2) +
         ")\">" + xml_escape(spec.y_label) + "</text>\n";

  double legend_y = kTop + 10;
  const double legend_x = kLeft + pw + 15;
  for (const ReferenceLine& r : spec.references) {
    out += "  <line x1=\"" + num(kLeft) + "\" y1=\"" + num(py(r.y)) + "\" x2=\"" +
           num(kLeft + pw) + "\" y2=\"" + num(py(r.y)) + "\" stroke=\"black\"" +
           (r.dashed ? " stroke-dasharray=\"6 4\"" : "") + "/>\n";
    if (!r.label.empty()) {
      out += "  <line x1=\"" + num(legend_x) + "\" y1=\"" + num(legend_y) + "\" x2=\"" +
             num(legend_x + 20) + "\" y2=\"" + num(legend_y) + "\" stroke=\"black\"" +
             (r.dashed ? " stroke-dasharray=\"6 4\"" : "") + "/>\n";
      out += "  <text x=\"" + num(legend_x + 26) + "\" y=\"" + num(legend_y + 4) + "\">" +
             xml_escape(r.label) + "</text>\n";
      legend_y += 18;
    }
  }
  for (std::size_t si = 0; si < spec.series.size(); ++si) {
    const PlotSeries& s = spec.series[si];
    const std::string color = kPalette[si % std::size(kPalette)];
    std::vector<std::size_t> order(s.x.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return s.x[a] < s.x[b]; });
    auto sx = [&](std::size_t i) {
      return spec.categories.empty() ? px(s.x[i]) : kLeft + (s.x[i] - xmin) / (xmax - xmin) * pw;
    };
    out += "  <g stroke=\"" + color + "\" fill=\"" + color + "\">\n";
    std::string points;
    for (std::size_t i : order) {
      if (!points.empty()) points += ' ';
      points += num(sx(i)) + "," + num(py(s.y[i]));
    }
    out += "    <polyline fill=\"none\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
    for (std::size_t i : order) {
      const double X = sx(i);
      if (!s.err.empty() && s.err[i] > 0.0) {
        const double lo = py(s.y[i] - s.err[i]);
        const double hi = py(s.y[i] + s.err[i]);
        out += "    <line x1=\"" + num(X) + "\" y1=\"" + num(lo) + "\" x2=\"" + num(X) +
               "\" y2=\"" + num(hi) + "\"/>\n";
        out += "    <line x1=\"" + num(X - 4) + "\" y1=\"" + num(lo) + "\" x2=\"" +
               num(X + 4) + "\" y2=\"" + num(lo) + "\"/>\n";
        out += "    <line x1=\"" + num(X - 4) + "\" y1=\"" + num(hi) + "\" x2=\"" +
               num(X + 4) + "\" y2=\"" + num(hi) + "\"/>\n";
      }
      out += "    <circle cx=\"" + num(X) + "\" cy=\"" + num(py(s.y[i])) + "\" r=\"3\"/>\n";
    }
    out += "  </g>\n";
    out += "  <line x1=\"" + num(legend_x) + "\" y1=\"" + num(legend_y) + "\" x2=\"" +
           num(legend_x + 20) + "\" y2=\"" + num(legend_y) + "\" stroke=\"" + color +
           "\" stroke-width=\"1.5\"/>\n";
    out += "  <text x=\"" + num(legend_x + 26) + "\" y=\"" + num(legend_y + 4) + "\">" +
           xml_escape(s.name) + "</text>\n";
    legend_y += 18;
  }
  out += "</svg>\n";
  return out;
}

}  // namespace auxstep::cli
