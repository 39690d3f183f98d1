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

// Probabilistic dynamic movement primitives (ProDMP).
//
// A trajectory of the critically damped second-order system
//
//   y'' + 2 lambda y' + lambda^2 y = lambda^2 g + x(t) sum_i psi_i(x) w_i
//
// with lambda = alpha / (2 tau_s) is written in closed form as
//
//   y(t)  = c1 y1(t)  + c2 y2(t)  + Phi(t)^T w
//   y'(t) = c1 y1'(t) + c2 y2'(t) + dPhi(t)^T w
//
// where y1 = exp(-lambda t) and y2 = t exp(-lambda t) span the homogeneous
// solutions, Phi/dPhi are particular solutions tabulated once per
// configuration, and (c1, c2) absorb a position/velocity boundary condition.
// psi_i are normalized Gaussian bumps. The goal weight g is the attractor in
// position units; a basis weight is a raw acceleration, so a weight of 1
// shifts the path by roughly 1 / lambda^2.

#ifndef FRMD_MP_CORE_H_
#define FRMD_MP_CORE_H_

#include <optional>

#include <Eigen/Dense>

namespace frmd::mp {

struct MPConfig {
  int dof = 2;
  int n_basis = 8;
  double alpha = 25.0;
  double tau_s = 1.0;
  double alpha_x = 1.0;
  int grid_points = 1000;
  // Gaussian std of each basis bump as a fraction of the center spacing.
  double basis_width = 0.5;
  // Trapezoid sub-intervals per grid interval for the basis integrals.
  int quad_substeps = 16;

  // Throws ConfigError on any non-positive field.
  void Validate() const;

  int weights_per_dof() const { return n_basis + 1; }
  double lambda() const { return alpha / (2.0 * tau_s); }
  double stiffness() const { return lambda() * lambda(); }
};

// Phase value x(t) = exp(-alpha_x t / tau_s).
double Phase(const MPConfig& config, double t);

// Forcing terms of the ODE at time t, one entry per weight (goal last):
// x psi_i(x) / sum_j psi_j(x) for the bumps and lambda^2 for g.
Eigen::VectorXd ForcingBasis(const MPConfig& config, double t);

struct BasisTables {
  MPConfig config;
  Eigen::VectorXd grid;
  Eigen::VectorXd y1, y2, dy1, dy2;
  // grid_points x (n_basis + 1); the last column belongs to the goal.
  Eigen::MatrixXd phi;
  Eigen::MatrixXd dphi;

  double lambda() const { return config.lambda(); }
  double duration() const { return grid(grid.size() - 1); }
};

// Tabulates complementary functions and basis matrices. Throws
// NumericalError naming the column when an integral becomes non-finite.
BasisTables BuildBasis(const MPConfig& config);

// Tables linearly interpolated at one time instant.
struct BasisSample {
  double y1 = 0, y2 = 0, dy1 = 0, dy2 = 0;
  Eigen::RowVectorXd phi;
  Eigen::RowVectorXd dphi;
};

// Throws RangeError for t outside [0, duration].
BasisSample SampleBasis(const BasisTables& tables, double t);

struct MPWeights {
  // dof x (n_basis + 1); row-major flattening gives vec(w).
  Eigen::MatrixXd w;

  static MPWeights Zero(const MPConfig& config) {
    return {Eigen::MatrixXd::Zero(config.dof, config.weights_per_dof())};
  }
};

struct BoundaryState {
  double t_b = 0.0;
  Eigen::VectorXd y0;
  Eigen::VectorXd dy0;

  static BoundaryState AtRest(const Eigen::VectorXd& y0, double t_b = 0.0) {
    return {t_b, y0, Eigen::VectorXd::Zero(y0.size())};
  }
};

struct Trajectory {
  Eigen::VectorXd times;
  // n x dof
  Eigen::MatrixXd positions;
  std::optional<Eigen::MatrixXd> velocities;
};

// Returns dof x 2 coefficients (c1, c2) per row.
Eigen::MatrixXd SolveBoundary(const BasisTables& tables,
                              const BoundaryState& bc, const MPWeights& w);

// Evaluates positions and velocities at `times` (must lie in
// [t_b, duration]).
Trajectory Decode(const BasisTables& tables, const BoundaryState& bc,
                  const MPWeights& w, const Eigen::VectorXd& times);

// Per-DoF linear decode operator on a fixed time vector:
//   positions_d = weights * w_d + boundary * [y0_d; dy0_d]
//   velocities_d = d_weights * w_d + d_boundary * [y0_d; dy0_d]
// All DoFs share it since the tables are scalar.
struct DecodeOperator {
  Eigen::VectorXd times;
  double t_b = 0.0;
  Eigen::MatrixXd weights;     // n x (n_basis + 1)
  Eigen::MatrixXd boundary;    // n x 2
  Eigen::MatrixXd d_weights;   // n x (n_basis + 1)
  Eigen::MatrixXd d_boundary;  // n x 2
};

DecodeOperator MakeDecodeOperator(const BasisTables& tables, double t_b,
                                  const Eigen::VectorXd& times);

// Full affine map decode(w) = H vec(w) + b with the trajectory flattened
// time-major ([t0 d0, t0 d1, ..., t1 d0, ...]) and vec(w) row-major.
struct AffineMap {
  Eigen::MatrixXd H;
  Eigen::VectorXd b;
};

AffineMap DecodeAffineMap(const BasisTables& tables, const BoundaryState& bc,
                          const Eigen::VectorXd& times);

// RK4 integration of the forced ODE from the boundary state, step at most
// tau_s / 2000. Slow; used as a reference for Decode.
Trajectory ReferenceIntegrate(const MPConfig& config, const BoundaryState& bc,
                              const MPWeights& w,
                              const Eigen::VectorXd& times);

// Flattens an n x dof matrix time-major and back.
Eigen::VectorXd FlattenTimeMajor(const Eigen::MatrixXd& positions);
Eigen::MatrixXd UnflattenTimeMajor(const Eigen::VectorXd& flat, int dof);

}  // namespace frmd::mp

#endif  // FRMD_MP_CORE_H_
