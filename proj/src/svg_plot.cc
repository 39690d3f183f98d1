// Copyright 2026 The FRMD Authors
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

#include "frmd/svg_plot.h"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "frmd/errors.h"

namespace frmd {
namespace {

std::string Fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.5f", v);
  return buf;
}

std::string Escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string RenderTraceSvg(const TracePlot& plot) {
  const Eigen::MatrixXd& tr = plot.trace;
  if (tr.rows() == 0 || tr.cols() != 2) {
    throw ConfigError("plot needs a non-empty 2-D trace");
  }
  for (int i : plot.nonsmooth_indices) {
    if (i < 0 || i >= tr.rows()) {
      throw ConfigError("non-smooth index " + std::to_string(i) +
                        " is outside the trace");
    }
  }
  double extent = plot.extent;
  extent = std::max(extent, tr.cwiseAbs().maxCoeff());
  if (plot.goal) extent = std::max(extent, plot.goal->cwiseAbs().maxCoeff());
  const double pad = 0.05 * extent;
  const double lo = -extent - pad;
  const double size = 2.0 * (extent + pad);
  const double stroke = size / 400.0;
  const double r = size / 100.0;

  // SVG y grows downward; flip so the plot uses the usual orientation.
  auto X = [](double x) { return Fmt(x); };
  auto Y = [](double y) { return Fmt(-y); };

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" "
       "height=\"600\" viewBox=\"" +
       Fmt(lo) + " " + Fmt(lo) + " " + Fmt(size) + " " + Fmt(size) + "\">\n";
  if (!plot.title.empty()) s += "  <title>" + Escape(plot.title) + "</title>\n";
  s += "  <rect x=\"" + Fmt(-extent) + "\" y=\"" + Fmt(-extent) +
       "\" width=\"" + Fmt(2 * extent) + "\" height=\"" + Fmt(2 * extent) +
       "\" fill=\"none\" stroke=\"#bbbbbb\" stroke-width=\"" + Fmt(stroke) +
       "\"/>\n";
  s += "  <polyline class=\"trace\" fill=\"none\" stroke=\"#1f4e9c\" "
       "stroke-width=\"" +
       Fmt(stroke) + "\" points=\"";
  for (Eigen::Index i = 0; i < tr.rows(); ++i) {
    if (i) s += " ";
    s += X(tr(i, 0)) + "," + Y(tr(i, 1));
  }
  s += "\"/>\n";

  const double h = r;
  s += "  <rect class=\"start\" x=\"" + Fmt(tr(0, 0) - h) + "\" y=\"" +
       Fmt(-tr(0, 1) - h) + "\" width=\"" + Fmt(2 * h) + "\" height=\"" +
       Fmt(2 * h) + "\" fill=\"#2a9d2a\"/>\n";
  if (plot.goal) {
    const double gx = plot.goal->x();
    const double gy = -plot.goal->y();
    s += "  <polygon class=\"goal\" points=\"" + Fmt(gx) + "," + Fmt(gy - h) +
         " " + Fmt(gx + h) + "," + Fmt(gy) + " " + Fmt(gx) + "," +
         Fmt(gy + h) + " " + Fmt(gx - h) + "," + Fmt(gy) +
         "\" fill=\"#c0392b\"/>\n";
  }
  for (int i : plot.nonsmooth_indices) {
    s += "  <circle class=\"nonsmooth\" cx=\"" + X(tr(i, 0)) + "\" cy=\"" +
         Y(tr(i, 1)) + "\" r=\"" + Fmt(1.5 * r) +
         "\" fill=\"none\" stroke=\"#27ae60\" stroke-width=\"" + Fmt(stroke) +
         "\"/>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace frmd
