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

#include "frmd/mp_core.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "frmd/errors.h"

namespace frmd::mp {
namespace {

constexpr double kTimeSlack = 1e-12;

// Centers equally spaced in phase between x(0) = 1 and x(tau_s).
Eigen::VectorXd BasisCenters(const MPConfig& config) {
  const double x_end = std::exp(-config.alpha_x);
  if (config.n_basis == 1) {
    return Eigen::VectorXd::Constant(1, 0.5 * (1.0 + x_end));
  }
  return Eigen::VectorXd::LinSpaced(config.n_basis, 1.0, x_end);
}

double BasisStd(const MPConfig& config) {
  const double x_end = std::exp(-config.alpha_x);
  const double spacing =
      config.n_basis == 1 ? 1.0 - x_end
                          : (1.0 - x_end) / (config.n_basis - 1);
  return config.basis_width * spacing;
}

// Cumulative trapezoid along rows for each column.
Eigen::MatrixXd CumulativeTrapezoid(const Eigen::VectorXd& t,
                                    const Eigen::MatrixXd& f) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(f.rows(), f.cols());
  for (Eigen::Index i = 1; i < f.rows(); ++i) {
    const double h = t(i) - t(i - 1);
    out.row(i) = out.row(i - 1) + 0.5 * h * (f.row(i) + f.row(i - 1));
  }
  return out;
}

void CheckFinite(const Eigen::MatrixXd& m, const char* what, int n_basis) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    if (!m.col(c).allFinite()) {
      const std::string column = c == n_basis
                                     ? std::string("goal")
                                     : "basis " + std::to_string(c);
      throw NumericalError(std::string("non-finite ") + what +
                           " in column " + column);
    }
  }
}

}  // namespace

void MPConfig::Validate() const {
  if (dof <= 0) throw ConfigError("mp.dof must be positive");
  if (n_basis <= 0) throw ConfigError("mp.n_basis must be positive");
  if (!(alpha > 0)) throw ConfigError("mp.alpha must be positive");
  if (!(tau_s > 0)) throw ConfigError("mp.tau_s must be positive");
  if (!(alpha_x > 0)) throw ConfigError("mp.alpha_x must be positive");
  if (grid_points < 2) throw ConfigError("mp.grid_points must be at least 2");
  if (!(basis_width > 0)) throw ConfigError("mp.basis_width must be positive");
  if (quad_substeps <= 0) {
    throw ConfigError("mp.quad_substeps must be positive");
  }
}

double Phase(const MPConfig& config, double t) {
  return std::exp(-config.alpha_x * t / config.tau_s);
}

Eigen::VectorXd ForcingBasis(const MPConfig& config, double t) {
  const double x = Phase(config, t);
  const Eigen::VectorXd centers = BasisCenters(config);
  const double sd = BasisStd(config);
  Eigen::VectorXd out(config.weights_per_dof());
  double total = 0.0;
  for (int i = 0; i < config.n_basis; ++i) {
    const double z = (x - centers(i)) / sd;
    out(i) = std::exp(-0.5 * z * z);
    total += out(i);
  }
  out.head(config.n_basis) *= x / total;
  out(config.n_basis) = config.stiffness();
  return out;
}

BasisTables BuildBasis(const MPConfig& config) {
  config.Validate();
  const int grid_n = config.grid_points;
  const int sub = config.quad_substeps;
  const int fine_n = (grid_n - 1) * sub + 1;
  const int cols = config.weights_per_dof();
  const double lambda = config.lambda();

  const Eigen::VectorXd fine_t =
      Eigen::VectorXd::LinSpaced(fine_n, 0.0, config.tau_s);
  // Variation of parameters with Wronskian exp(-2 lambda t):
  //   y_p = y2 * int exp(lambda s) F ds - y1 * int s exp(lambda s) F ds.
  Eigen::MatrixXd integrand2(fine_n, cols);
  Eigen::MatrixXd integrand1(fine_n, cols);
  for (int i = 0; i < fine_n; ++i) {
    const double s = fine_t(i);
    const Eigen::VectorXd forcing = ForcingBasis(config, s);
    const double e = std::exp(lambda * s);
    integrand2.row(i) = e * forcing.transpose();
    integrand1.row(i) = (s * e) * forcing.transpose();
  }
  const Eigen::MatrixXd p2 = CumulativeTrapezoid(fine_t, integrand2);
  const Eigen::MatrixXd p1 = CumulativeTrapezoid(fine_t, integrand1);
  CheckFinite(p2, "integral p2", config.n_basis);
  CheckFinite(p1, "integral p1", config.n_basis);

  BasisTables tables;
  tables.config = config;
  tables.grid.resize(grid_n);
  tables.y1.resize(grid_n);
  tables.y2.resize(grid_n);
  tables.dy1.resize(grid_n);
  tables.dy2.resize(grid_n);
  tables.phi.resize(grid_n, cols);
  tables.dphi.resize(grid_n, cols);
  for (int g = 0; g < grid_n; ++g) {
    const int f = g * sub;
    const double t = fine_t(f);
    const double e = std::exp(-lambda * t);
    tables.grid(g) = t;
    tables.y1(g) = e;
    tables.y2(g) = t * e;
    tables.dy1(g) = -lambda * e;
    tables.dy2(g) = (1.0 - lambda * t) * e;
    tables.phi.row(g) = tables.y2(g) * p2.row(f) - tables.y1(g) * p1.row(f);
    // The y2 p2' - y1 p1' terms cancel identically.
    tables.dphi.row(g) =
        tables.dy2(g) * p2.row(f) - tables.dy1(g) * p1.row(f);
  }
  CheckFinite(tables.phi, "position basis", config.n_basis);
  CheckFinite(tables.dphi, "velocity basis", config.n_basis);
  return tables;
}

BasisSample SampleBasis(const BasisTables& tables, double t) {
  const double duration = tables.duration();
  if (!(t >= -kTimeSlack && t <= duration + kTimeSlack)) {
    throw RangeError("time " + std::to_string(t) + " outside basis span [0, " +
                     std::to_string(duration) + "]");
  }
  const Eigen::Index last = tables.grid.size() - 1;
  const double h = duration / static_cast<double>(last);
  const double clamped = std::clamp(t, 0.0, duration);
  Eigen::Index i = static_cast<Eigen::Index>(std::floor(clamped / h));
  i = std::clamp<Eigen::Index>(i, 0, last - 1);
  const double a = (clamped - tables.grid(i)) / h;
  const double b = 1.0 - a;

  BasisSample s;
  s.y1 = b * tables.y1(i) + a * tables.y1(i + 1);
  s.y2 = b * tables.y2(i) + a * tables.y2(i + 1);
  s.dy1 = b * tables.dy1(i) + a * tables.dy1(i + 1);
  s.dy2 = b * tables.dy2(i) + a * tables.dy2(i + 1);
  s.phi = b * tables.phi.row(i) + a * tables.phi.row(i + 1);
  s.dphi = b * tables.dphi.row(i) + a * tables.dphi.row(i + 1);
  return s;
}

Eigen::MatrixXd SolveBoundary(const BasisTables& tables,
                              const BoundaryState& bc, const MPWeights& w) {
  const MPConfig& config = tables.config;
  if (bc.y0.size() != config.dof || bc.dy0.size() != config.dof) {
    throw LayoutError("boundary state dimension does not match dof");
  }
  if (w.w.rows() != config.dof || w.w.cols() != config.weights_per_dof()) {
    throw LayoutError("weight matrix shape does not match MP configuration");
  }
  const BasisSample s = SampleBasis(tables, bc.t_b);
  const double det = s.y1 * s.dy2 - s.y2 * s.dy1;
  if (!std::isfinite(det) || std::abs(det) < 1e-300) {
    throw NumericalError("singular boundary system at t_b = " +
                         std::to_string(bc.t_b));
  }
  Eigen::MatrixXd c(config.dof, 2);
  for (int d = 0; d < config.dof; ++d) {
    const double r0 = bc.y0(d) - s.phi.dot(w.w.row(d));
    const double r1 = bc.dy0(d) - s.dphi.dot(w.w.row(d));
    c(d, 0) = (s.dy2 * r0 - s.y2 * r1) / det;
    c(d, 1) = (s.y1 * r1 - s.dy1 * r0) / det;
  }
  return c;
}

Trajectory Decode(const BasisTables& tables, const BoundaryState& bc,
                  const MPWeights& w, const Eigen::VectorXd& times) {
  const Eigen::MatrixXd c = SolveBoundary(tables, bc, w);
  const int dof = tables.config.dof;
  Trajectory traj;
  traj.times = times;
  traj.positions.resize(times.size(), dof);
  Eigen::MatrixXd vel(times.size(), dof);
  for (Eigen::Index j = 0; j < times.size(); ++j) {
    if (times(j) < bc.t_b - kTimeSlack) {
      throw RangeError("decode time precedes the boundary time");
    }
    const BasisSample s = SampleBasis(tables, times(j));
    for (int d = 0; d < dof; ++d) {
      traj.positions(j, d) =
          c(d, 0) * s.y1 + c(d, 1) * s.y2 + s.phi.dot(w.w.row(d));
      vel(j, d) = c(d, 0) * s.dy1 + c(d, 1) * s.dy2 + s.dphi.dot(w.w.row(d));
    }
  }
  traj.velocities = std::move(vel);
  return traj;
}

DecodeOperator MakeDecodeOperator(const BasisTables& tables, double t_b,
                                  const Eigen::VectorXd& times) {
  const BasisSample s0 = SampleBasis(tables, t_b);
  const double det = s0.y1 * s0.dy2 - s0.y2 * s0.dy1;
  if (!std::isfinite(det) || std::abs(det) < 1e-300) {
    throw NumericalError("singular boundary system at t_b = " +
                         std::to_string(t_b));
  }
  Eigen::Matrix2d m_inv;
  m_inv << s0.dy2, -s0.y2, -s0.dy1, s0.y1;
  m_inv /= det;
  Eigen::MatrixXd at_boundary(2, tables.config.weights_per_dof());
  at_boundary.row(0) = s0.phi;
  at_boundary.row(1) = s0.dphi;

  const Eigen::Index n = times.size();
  const int cols = tables.config.weights_per_dof();
  DecodeOperator op;
  op.times = times;
  op.t_b = t_b;
  op.weights.resize(n, cols);
  op.boundary.resize(n, 2);
  op.d_weights.resize(n, cols);
  op.d_boundary.resize(n, 2);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (times(j) < t_b - kTimeSlack) {
      throw RangeError("decode time precedes the boundary time");
    }
    const BasisSample s = SampleBasis(tables, times(j));
    const Eigen::RowVector2d hom = Eigen::RowVector2d(s.y1, s.y2) * m_inv;
    const Eigen::RowVector2d d_hom = Eigen::RowVector2d(s.dy1, s.dy2) * m_inv;
    op.boundary.row(j) = hom;
    op.d_boundary.row(j) = d_hom;
    op.weights.row(j) = s.phi - hom * at_boundary;
    op.d_weights.row(j) = s.dphi - d_hom * at_boundary;
  }
  return op;
}

AffineMap DecodeAffineMap(const BasisTables& tables, const BoundaryState& bc,
                          const Eigen::VectorXd& times) {
  const int dof = tables.config.dof;
  const int cols = tables.config.weights_per_dof();
  if (bc.y0.size() != dof || bc.dy0.size() != dof) {
    throw LayoutError("boundary state dimension does not match dof");
  }
  const DecodeOperator op = MakeDecodeOperator(tables, bc.t_b, times);
  const Eigen::Index n = times.size();
  AffineMap map;
  map.H = Eigen::MatrixXd::Zero(n * dof, dof * cols);
  map.b.resize(n * dof);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (int d = 0; d < dof; ++d) {
      map.H.block(j * dof + d, d * cols, 1, cols) = op.weights.row(j);
      map.b(j * dof + d) =
          op.boundary(j, 0) * bc.y0(d) + op.boundary(j, 1) * bc.dy0(d);
    }
  }
  return map;
}

Trajectory ReferenceIntegrate(const MPConfig& config, const BoundaryState& bc,
                              const MPWeights& w,
                              const Eigen::VectorXd& times) {
  config.Validate();
  const int dof = config.dof;
  const double lambda = config.lambda();
  const double k = config.stiffness();
  const double h_max = config.tau_s / 2000.0;

  Eigen::VectorXd y = bc.y0;
  Eigen::VectorXd v = bc.dy0;
  double t = bc.t_b;
  auto accel = [&](double s, const Eigen::VectorXd& yy,
                   const Eigen::VectorXd& vv) {
    const Eigen::VectorXd forcing = ForcingBasis(config, s);
    Eigen::VectorXd a(dof);
    for (int d = 0; d < dof; ++d) {
      a(d) = -2.0 * lambda * vv(d) - k * yy(d) + w.w.row(d).dot(forcing);
    }
    return a;
  };

  Trajectory traj;
  traj.times = times;
  traj.positions.resize(times.size(), dof);
  Eigen::MatrixXd vel(times.size(), dof);
  for (Eigen::Index j = 0; j < times.size(); ++j) {
    const double target = times(j);
    if (target < t - kTimeSlack) {
      throw RangeError("reference integration times must be non-decreasing "
                       "and not precede t_b");
    }
    while (t < target - kTimeSlack) {
      const double h = std::min(h_max, target - t);
      const Eigen::VectorXd k1y = v;
      const Eigen::VectorXd k1v = accel(t, y, v);
      const Eigen::VectorXd k2y = v + 0.5 * h * k1v;
      const Eigen::VectorXd k2v =
          accel(t + 0.5 * h, y + 0.5 * h * k1y, v + 0.5 * h * k1v);
      const Eigen::VectorXd k3y = v + 0.5 * h * k2v;
      const Eigen::VectorXd k3v =
          accel(t + 0.5 * h, y + 0.5 * h * k2y, v + 0.5 * h * k2v);
      const Eigen::VectorXd k4y = v + h * k3v;
      const Eigen::VectorXd k4v = accel(t + h, y + h * k3y, v + h * k3v);
      y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
      v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
      t += h;
    }
    traj.positions.row(j) = y.transpose();
    vel.row(j) = v.transpose();
  }
  traj.velocities = std::move(vel);
  return traj;
}

Eigen::VectorXd FlattenTimeMajor(const Eigen::MatrixXd& positions) {
  Eigen::VectorXd flat(positions.size());
  for (Eigen::Index j = 0; j < positions.rows(); ++j) {
    flat.segment(j * positions.cols(), positions.cols()) =
        positions.row(j).transpose();
  }
  return flat;
}

Eigen::MatrixXd UnflattenTimeMajor(const Eigen::VectorXd& flat, int dof) {
  if (dof <= 0 || flat.size() % dof != 0) {
    throw LayoutError("flattened trajectory size is not a multiple of dof");
  }
  const Eigen::Index n = flat.size() / dof;
  Eigen::MatrixXd out(n, dof);
  for (Eigen::Index j = 0; j < n; ++j) {
    out.row(j) = flat.segment(j * dof, dof).transpose();
  }
  return out;
}

}  // namespace frmd::mp
