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

// One-step student trained by consistency distillation from a teacher.
//
// The consistency function is
//
//   f(tau, o, t) = c_skip(t) tau + c_out(t) F(tau, o, t)
//   c_skip(t) = gamma_d^2 / (beta^2 t^2 + gamma_d^2)
//   c_out(t)  = 1 - c_skip(t)                         (convex, default)
//   c_out(t)  = beta t / sqrt(beta^2 t^2 + gamma_d^2)  (scaled)
//
// so f(tau, o, 0) = tau for any parameters. The convex form keeps f an
// affine combination of tau and F. With the scaled form c_skip + c_out
// exceeds 1 at intermediate t, and an MP-decoded F (which always meets the
// boundary state) cannot absorb the excess. Training pairs a noisy window at
// a level t_hi with the teacher's k-step PF-ODE estimate at the next-lower
// level t_lo and pulls the online output toward the EMA target's output:
//
//   L = lambda(t_lo) d(f_online(tau_hi, t_hi), stopgrad f_target(tau_lo, t_lo))

#ifndef FRMD_CONSISTENCY_DISTILL_H_
#define FRMD_CONSISTENCY_DISTILL_H_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "frmd/diffusion_teacher.h"
#include "frmd/tensor_core.h"

namespace frmd::consistency {

using diffusion::BoundaryBatch;
using diffusion::Rng;

enum class Metric { kSquaredL2 = 0, kPseudoHuber = 1 };
enum class Weighting { kUniform = 0, kInverseGap = 1 };
enum class COutMode { kConvex = 0, kScaled = 1 };

std::string ToString(Metric metric);
Metric ParseMetric(const std::string& text);
std::string ToString(Weighting weighting);
Weighting ParseWeighting(const std::string& text);
std::string ToString(COutMode mode);
COutMode ParseCOutMode(const std::string& text);

struct ConsistencyConfig {
  int k = 1;
  double mu = 0.95;
  double gamma_d = 0.02;
  double beta = 1.0;
  COutMode c_out = COutMode::kConvex;
  Metric metric = Metric::kPseudoHuber;
  Weighting weighting = Weighting::kUniform;
  int64_t steps = 2000;
  // Sample with the EMA target network (otherwise the online one).
  bool deploy_target = true;

  // Throws ConfigError; k must be below the schedule length.
  void Validate(int schedule_size) const;
  bool operator==(const ConsistencyConfig&) const = default;
};

double CSkip(double t, const ConsistencyConfig& config);
double COut(double t, const ConsistencyConfig& config);

struct StudentModel {
  diffusion::DenoisePipeline pipeline;
  nn::DenoiserNet online;
  nn::DenoiserNet target;
  ConsistencyConfig config;

  const nn::DenoiserNet& deployed() const {
    return config.deploy_target ? target : online;
  }
};

enum class Branch { kOnline, kTarget };

// Starts online and target from the teacher's weights.
StudentModel InitStudent(const diffusion::TeacherModel& teacher,
                         const ConsistencyConfig& config);

// Skip-connection consistency function. Columns with t == 0 return their
// input exactly without touching the network.
Eigen::MatrixXd ConsistencyF(const StudentModel& student,
                             const Eigen::MatrixXd& noisy,
                             const Eigen::MatrixXd& obs,
                             const Eigen::VectorXd& t, const BoundaryBatch& bc,
                             Branch which);

// Same for an arbitrary network (for finite-difference checks).
Eigen::MatrixXd ConsistencyFWith(const StudentModel& student,
                                 const nn::DenoiserNet& net,
                                 const Eigen::MatrixXd& noisy,
                                 const Eigen::MatrixXd& obs,
                                 const Eigen::VectorXd& t,
                                 const BoundaryBatch& bc);

// Parameter gradient of sum(weights .* f_online) for a given upstream
// gradient; requires all t > 0.
nn::ParameterBlocks ConsistencyFGradient(const StudentModel& student,
                                         const Eigen::MatrixXd& noisy,
                                         const Eigen::MatrixXd& obs,
                                         const Eigen::VectorXd& t,
                                         const BoundaryBatch& bc,
                                         const Eigen::MatrixXd& upstream);

// Distance per column and its gradient with respect to the first argument.
Eigen::VectorXd Distance(Metric metric, const Eigen::MatrixXd& a,
                         const Eigen::MatrixXd& b);
Eigen::MatrixXd DistanceGrad(Metric metric, const Eigen::MatrixXd& a,
                             const Eigen::MatrixXd& b);

// Draws made by one distillation step, exposed for tests.
struct DistillDraw {
  std::vector<int> hi_index;  // schedule index of t_hi per column (0-based)
  Eigen::MatrixXd noise;      // standard normal, traj_size x B
};

DistillDraw DrawDistill(const StudentModel& student, Eigen::Index batch,
                        Rng& rng);

struct DistillStepResult {
  double loss = 0.0;
  // Gradient with respect to the online parameters only; the target
  // branch is evaluated without a tape.
  nn::ParameterBlocks online_grads;
};

// Teacher and student must share the noise schedule (ConfigError
// otherwise).
DistillStepResult DistillStep(const diffusion::TeacherModel& teacher,
                              const StudentModel& student,
                              const diffusion::WindowSet& batch, Rng& rng,
                              diffusion::Solver solver =
                                  diffusion::Solver::kEuler);

DistillStepResult DistillStepWith(const diffusion::TeacherModel& teacher,
                                  const StudentModel& student,
                                  const diffusion::WindowSet& batch,
                                  const DistillDraw& draw,
                                  diffusion::Solver solver);

// target <- mu target + (1 - mu) online, elementwise.
void EmaUpdate(StudentModel& student, double mu);

struct DistillConfig {
  ConsistencyConfig consistency;
  int batch_size = 128;
  int log_every = 100;
  nn::AdamWHyper optimizer;
  diffusion::Solver teacher_solver = diffusion::Solver::kEuler;
  uint64_t seed = 0;
};

struct DistillResult {
  StudentModel student;
  std::vector<diffusion::LossRecord> curve;
};

DistillResult Distill(const diffusion::WindowSet& data,
                      const diffusion::TeacherModel& teacher,
                      const DistillConfig& config);

// One network evaluation: tau_T ~ t_max N(0, I), then the MP-decoded
// denoiser branch of f at t_max for the MP head (which keeps the boundary
// state and the ProDMP shape), or the full f for the raw head.
Eigen::MatrixXd SampleStudent(const StudentModel& student,
                              const Eigen::MatrixXd& obs,
                              const BoundaryBatch& bc, Rng& rng);

// Full f(tau_T, o, t_max) including the skip term.
Eigen::MatrixXd SampleStudentWithSkip(const StudentModel& student,
                                      const Eigen::MatrixXd& obs,
                                      const BoundaryBatch& bc, Rng& rng);

}  // namespace frmd::consistency

#endif  // FRMD_CONSISTENCY_DISTILL_H_
