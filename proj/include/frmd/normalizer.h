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

#ifndef FRMD_NORMALIZER_H_
#define FRMD_NORMALIZER_H_

#include <Eigen/Dense>

namespace frmd {

// Per-dimension affine map of action coordinates onto [-1, 1]:
// normalized = (world - center) / half_range.
struct Normalizer {
  Eigen::VectorXd center;
  Eigen::VectorXd half_range;

  static Normalizer Identity(int dim) {
    return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
  }

  // Fits to the rows of `samples` (one point per row). Degenerate
  // dimensions keep unit scale.
  static Normalizer Fit(const Eigen::MatrixXd& samples) {
    const Eigen::VectorXd lo = samples.colwise().minCoeff().transpose();
    const Eigen::VectorXd hi = samples.colwise().maxCoeff().transpose();
    Normalizer n;
    n.center = 0.5 * (lo + hi);
    n.half_range = 0.5 * (hi - lo);
    for (Eigen::Index i = 0; i < n.half_range.size(); ++i) {
      if (!(n.half_range(i) > 1e-12)) n.half_range(i) = 1.0;
    }
    return n;
  }

  int dim() const { return static_cast<int>(center.size()); }

  Eigen::VectorXd Position(const Eigen::VectorXd& world) const {
    return (world - center).cwiseQuotient(half_range);
  }
  Eigen::VectorXd Velocity(const Eigen::VectorXd& world) const {
    return world.cwiseQuotient(half_range);
  }
  Eigen::VectorXd WorldPosition(const Eigen::VectorXd& normalized) const {
    return normalized.cwiseProduct(half_range) + center;
  }
  // Rows are points.
  Eigen::MatrixXd PositionRows(const Eigen::MatrixXd& world) const {
    Eigen::MatrixXd out(world.rows(), world.cols());
    for (Eigen::Index r = 0; r < world.rows(); ++r) {
      out.row(r) = Position(world.row(r).transpose()).transpose();
    }
    return out;
  }
  Eigen::MatrixXd WorldPositionRows(const Eigen::MatrixXd& normalized) const {
    Eigen::MatrixXd out(normalized.rows(), normalized.cols());
    for (Eigen::Index r = 0; r < normalized.rows(); ++r) {
      out.row(r) = WorldPosition(normalized.row(r).transpose()).transpose();
    }
    return out;
  }
};

}  // namespace frmd

#endif  // FRMD_NORMALIZER_H_
