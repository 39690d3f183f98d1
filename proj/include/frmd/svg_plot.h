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

// Standalone SVG of one executed trace. The only <circle> elements are the
// markers at non-smooth points; start and goal use square and diamond
// glyphs.

#ifndef FRMD_SVG_PLOT_H_
#define FRMD_SVG_PLOT_H_

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace frmd {

struct TracePlot {
  Eigen::MatrixXd trace;  // rows are 2-D points
  std::vector<int> nonsmooth_indices;
  std::optional<Eigen::Vector2d> goal;
  std::string title;
  // Half-width of the square workspace shown; grows to fit the trace.
  double extent = 1.0;
};

// Throws ConfigError for an empty trace or an index outside it.
std::string RenderTraceSvg(const TracePlot& plot);

}  // namespace frmd

#endif  // FRMD_SVG_PLOT_H_
