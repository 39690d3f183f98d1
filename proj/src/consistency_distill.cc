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

#include "frmd/consistency_distill.h"

#include <cmath>

#include "frmd/errors.h"

namespace frmd::consistency {
namespace {

using diffusion::DenoiseF;
using diffusion::WindowSet;

Eigen::MatrixXd StandardNormal(Eigen::Index rows, Eigen::Index cols,
                               Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) out(r, c) = normal(rng);
  }
  return out;
}

// Euler/Heun step where every column has its own pair of levels.
Eigen::MatrixXd TeacherStep(const diffusion::TeacherModel& teacher,
                            const Eigen::MatrixXd& x,
                            const Eigen::VectorXd& t_from,
                            const Eigen::VectorXd& t_to,
                            const Eigen::MatrixXd& obs,
                            const BoundaryBatch& bc,
                            diffusion::Solver solver) {
  const auto slope = [&](const Eigen::MatrixXd& at, const Eigen::VectorXd& t) {
    Eigen::MatrixXd d =
        at - DenoiseF(teacher.pipeline, teacher.net, at, obs, t, bc);
    for (Eigen::Index b = 0; b < d.cols(); ++b) d.col(b) /= t(b);
    return d;
  };
  const Eigen::VectorXd dt = t_to - t_from;
  const Eigen::MatrixXd s0 = slope(x, t_from);
  Eigen::MatrixXd next = x;
  for (Eigen::Index b = 0; b < x.cols(); ++b) next.col(b) += dt(b) * s0.col(b);
  if (solver == diffusion::Solver::kHeun) {
    const Eigen::MatrixXd s1 = slope(next, t_to);
    next = x;
    for (Eigen::Index b = 0; b < x.cols(); ++b) {
      next.col(b) += 0.5 * dt(b) * (s0.col(b) + s1.col(b));
    }
  }
  return next;
}

double LossWeight(Weighting weighting, double t_hi, double t_lo) {
  return weighting == Weighting::kUniform ? 1.0 : 1.0 / (t_hi - t_lo);
}

double HuberScale(Eigen::Index dim) {
  return 0.00054 * std::sqrt(static_cast<double>(dim));
}

}  // namespace

std::string ToString(Metric metric) {
  return metric == Metric::kSquaredL2 ? "l2" : "pseudo_huber";
}

Metric ParseMetric(const std::string& text) {
  if (text == "l2") return Metric::kSquaredL2;
  if (text == "pseudo_huber") return Metric::kPseudoHuber;
  throw ConfigError("unknown distance '" + text + "' (expected l2|pseudo_huber)");
}

std::string ToString(Weighting weighting) {
  return weighting == Weighting::kUniform ? "uniform" : "inverse_gap";
}

Weighting ParseWeighting(const std::string& text) {
  if (text == "uniform") return Weighting::kUniform;
  if (text == "inverse_gap") return Weighting::kInverseGap;
  throw ConfigError("unknown weighting '" + text +
                    "' (expected uniform|inverse_gap)");
}

std::string ToString(COutMode mode) {
  return mode == COutMode::kConvex ? "convex" : "scaled";
}

COutMode ParseCOutMode(const std::string& text) {
  if (text == "convex") return COutMode::kConvex;
  if (text == "scaled") return COutMode::kScaled;
  throw ConfigError("unknown c_out mode '" + text +
                    "' (expected convex|scaled)");
}

void ConsistencyConfig::Validate(int schedule_size) const {
  if (k < 1) throw ConfigError("distill.k must be at least 1");
  if (k >= schedule_size) {
    throw ConfigError("distill.k must be smaller than the schedule length");
  }
  if (!(mu >= 0.0 && mu < 1.0)) throw ConfigError("distill.mu must be in [0, 1)");
  if (!(gamma_d > 0)) throw ConfigError("distill.gamma_d must be positive");
  if (!(beta > 0)) throw ConfigError("distill.beta must be positive");
  if (steps < 0) throw ConfigError("distill.steps must be non-negative");
}

double CSkip(double t, const ConsistencyConfig& config) {
  const double g2 = config.gamma_d * config.gamma_d;
  return g2 / (config.beta * config.beta * t * t + g2);
}

double COut(double t, const ConsistencyConfig& config) {
  if (config.c_out == COutMode::kConvex) return 1.0 - CSkip(t, config);
  const double bt = config.beta * t;
  return bt / std::sqrt(bt * bt + config.gamma_d * config.gamma_d);
}

StudentModel InitStudent(const diffusion::TeacherModel& teacher,
                         const ConsistencyConfig& config) {
  config.Validate(teacher.pipeline.schedule.size());
  StudentModel student;
  student.pipeline = teacher.pipeline;
  student.online = teacher.net;
  student.target = teacher.net;
  student.config = config;
  return student;
}

Eigen::MatrixXd ConsistencyFWith(const StudentModel& student,
                                 const nn::DenoiserNet& net,
                                 const Eigen::MatrixXd& noisy,
                                 const Eigen::MatrixXd& obs,
                                 const Eigen::VectorXd& t,
                                 const BoundaryBatch& bc) {
  if (t.size() != noisy.cols()) {
    throw LayoutError("noise level vector does not match batch size");
  }
  std::vector<Eigen::Index> active;
  for (Eigen::Index b = 0; b < t.size(); ++b) {
    if (t(b) < 0) throw ConfigError("consistency function needs t >= 0");
    if (t(b) > 0) active.push_back(b);
  }
  Eigen::MatrixXd out = noisy;
  if (active.empty()) return out;

  WindowSet sub;
  sub.traj = noisy;
  sub.obs = obs;
  sub.bc = bc;
  if (static_cast<Eigen::Index>(active.size()) != t.size()) sub = sub.Select(active);
  Eigen::VectorXd t_sub(active.size());
  for (size_t i = 0; i < active.size(); ++i) t_sub(i) = t(active[i]);
  const Eigen::MatrixXd f =
      DenoiseF(student.pipeline, net, sub.traj, sub.obs, t_sub, sub.bc);
  for (size_t i = 0; i < active.size(); ++i) {
    const Eigen::Index b = active[i];
    out.col(b) = CSkip(t(b), student.config) * noisy.col(b) +
                 COut(t(b), student.config) * f.col(i);
  }
  return out;
}

Eigen::MatrixXd ConsistencyF(const StudentModel& student,
                             const Eigen::MatrixXd& noisy,
                             const Eigen::MatrixXd& obs,
                             const Eigen::VectorXd& t, const BoundaryBatch& bc,
                             Branch which) {
  return ConsistencyFWith(
      student, which == Branch::kOnline ? student.online : student.target,
      noisy, obs, t, bc);
}

nn::ParameterBlocks ConsistencyFGradient(const StudentModel& student,
                                         const Eigen::MatrixXd& noisy,
                                         const Eigen::MatrixXd& obs,
                                         const Eigen::VectorXd& t,
                                         const BoundaryBatch& bc,
                                         const Eigen::MatrixXd& upstream) {
  diffusion::DenoiseForward fwd = diffusion::DenoiseFRecorded(
      student.pipeline, student.online, noisy, obs, t, bc);
  Eigen::MatrixXd grad = upstream;
  for (Eigen::Index b = 0; b < grad.cols(); ++b) {
    grad.col(b) *= COut(t(b), student.config);
  }
  return diffusion::DenoiseBackward(student.pipeline, fwd.tape, grad);
}

Eigen::VectorXd Distance(Metric metric, const Eigen::MatrixXd& a,
                         const Eigen::MatrixXd& b) {
  const Eigen::VectorXd sq = (a - b).colwise().squaredNorm().transpose();
  if (metric == Metric::kSquaredL2) return sq;
  const double c = HuberScale(a.rows());
  return ((sq.array() + c * c).sqrt() - c).matrix();
}

Eigen::MatrixXd DistanceGrad(Metric metric, const Eigen::MatrixXd& a,
                             const Eigen::MatrixXd& b) {
  const Eigen::MatrixXd diff = a - b;
  if (metric == Metric::kSquaredL2) return 2.0 * diff;
  const double c = HuberScale(a.rows());
  Eigen::MatrixXd g = diff;
  for (Eigen::Index col = 0; col < g.cols(); ++col) {
    g.col(col) /= std::sqrt(diff.col(col).squaredNorm() + c * c);
  }
  return g;
}

DistillDraw DrawDistill(const StudentModel& student, Eigen::Index batch,
                        Rng& rng) {
  const int n_levels = student.pipeline.schedule.size();
  std::uniform_int_distribution<int> pick(0, n_levels - 1 - student.config.k);
  DistillDraw draw;
  draw.hi_index.resize(batch);
  for (Eigen::Index b = 0; b < batch; ++b) draw.hi_index[b] = pick(rng);
  draw.noise = StandardNormal(student.pipeline.traj_size(), batch, rng);
  return draw;
}

DistillStepResult DistillStepWith(const diffusion::TeacherModel& teacher,
                                  const StudentModel& student,
                                  const WindowSet& batch,
                                  const DistillDraw& draw,
                                  diffusion::Solver solver) {
  if (!(teacher.pipeline.schedule == student.pipeline.schedule)) {
    throw ConfigError("teacher and student noise schedules differ");
  }
  const std::vector<double>& levels = student.pipeline.schedule.levels;
  const int k = student.config.k;
  const Eigen::Index b_n = batch.size();
  if (b_n == 0) throw ConfigError("empty distillation batch");

  Eigen::VectorXd t_hi(b_n), t_lo(b_n);
  Eigen::MatrixXd x_hi = batch.traj;
  for (Eigen::Index b = 0; b < b_n; ++b) {
    t_hi(b) = levels[draw.hi_index[b]];
    t_lo(b) = levels[draw.hi_index[b] + k];
    x_hi.col(b) += t_hi(b) * draw.noise.col(b);
  }

  // k chained teacher steps down the schedule.
  Eigen::MatrixXd x_lo = x_hi;
  for (int s = 0; s < k; ++s) {
    Eigen::VectorXd from(b_n), to(b_n);
    for (Eigen::Index b = 0; b < b_n; ++b) {
      from(b) = levels[draw.hi_index[b] + s];
      to(b) = levels[draw.hi_index[b] + s + 1];
    }
    x_lo = TeacherStep(teacher, x_lo, from, to, batch.obs, batch.bc, solver);
  }

  const Eigen::MatrixXd f_target = ConsistencyFWith(
      student, student.target, x_lo, batch.obs, t_lo, batch.bc);

  diffusion::DenoiseForward online = diffusion::DenoiseFRecorded(
      student.pipeline, student.online, x_hi, batch.obs, t_hi, batch.bc);
  Eigen::MatrixXd f_online(x_hi.rows(), b_n);
  for (Eigen::Index b = 0; b < b_n; ++b) {
    f_online.col(b) = CSkip(t_hi(b), student.config) * x_hi.col(b) +
                      COut(t_hi(b), student.config) * online.output.col(b);
  }

  const Metric metric = student.config.metric;
  const Eigen::VectorXd dist = Distance(metric, f_online, f_target);
  const Eigen::MatrixXd d_grad = DistanceGrad(metric, f_online, f_target);
  DistillStepResult result;
  Eigen::MatrixXd upstream(x_hi.rows(), b_n);
  for (Eigen::Index b = 0; b < b_n; ++b) {
    const double w = LossWeight(student.config.weighting, t_hi(b), t_lo(b));
    result.loss += w * dist(b);
    upstream.col(b) = (w * COut(t_hi(b), student.config) /
                       static_cast<double>(b_n)) *
                      d_grad.col(b);
  }
  result.loss /= static_cast<double>(b_n);
  if (!std::isfinite(result.loss)) {
    throw TrainingError("non-finite distillation loss");
  }
  result.online_grads =
      diffusion::DenoiseBackward(student.pipeline, online.tape, upstream);
  return result;
}

DistillStepResult DistillStep(const diffusion::TeacherModel& teacher,
                              const StudentModel& student,
                              const WindowSet& batch, Rng& rng,
                              diffusion::Solver solver) {
  const DistillDraw draw = DrawDistill(student, batch.size(), rng);
  return DistillStepWith(teacher, student, batch, draw, solver);
}

void EmaUpdate(StudentModel& student, double mu) {
  if (student.online.layers.size() != student.target.layers.size()) {
    throw LayoutError("online and target networks differ in depth");
  }
  for (size_t l = 0; l < student.online.layers.size(); ++l) {
    nn::DenseLayer& tgt = student.target.layers[l];
    const nn::DenseLayer& src = student.online.layers[l];
    if (tgt.weight.rows() != src.weight.rows() ||
        tgt.weight.cols() != src.weight.cols()) {
      throw LayoutError("online and target layer shapes differ");
    }
    tgt.weight = mu * tgt.weight + (1.0 - mu) * src.weight;
    tgt.bias = mu * tgt.bias + (1.0 - mu) * src.bias;
  }
}

DistillResult Distill(const WindowSet& data,
                      const diffusion::TeacherModel& teacher,
                      const DistillConfig& config) {
  if (data.size() == 0) throw ConfigError("distillation dataset is empty");
  if (config.log_every <= 0) throw ConfigError("log interval must be positive");
  DistillResult result;
  result.student = InitStudent(teacher, config.consistency);
  StudentModel& student = result.student;

  nn::AdamWHyper hyper = config.optimizer;
  if (hyper.total_steps == 0) hyper.total_steps = config.consistency.steps;
  nn::OptimizerState opt = nn::OptimizerState::For(student.online);
  diffusion::BatchSampler sampler(data.size(), config.batch_size,
                                  config.seed + 1);
  Rng rng(config.seed + 2);
  double interval_loss = 0.0;
  int interval_count = 0;
  const int64_t steps = config.consistency.steps;
  for (int64_t step = 1; step <= steps; ++step) {
    const WindowSet batch = data.Select(sampler.Next());
    DistillStepResult r;
    try {
      r = DistillStep(teacher, student, batch, rng, config.teacher_solver);
      nn::OptimizerStep(student.online, r.online_grads, opt, hyper);
    } catch (const TrainingError& e) {
      throw TrainingError(std::string("distillation diverged: ") + e.what(),
                          step);
    }
    EmaUpdate(student, config.consistency.mu);
    interval_loss += r.loss;
    ++interval_count;
    if (step % config.log_every == 0 || step == steps) {
      result.curve.push_back({step, interval_loss / interval_count,
                              nn::LearningRate(hyper, step)});
      interval_loss = 0.0;
      interval_count = 0;
    }
  }
  return result;
}

Eigen::MatrixXd SampleStudent(const StudentModel& student,
                              const Eigen::MatrixXd& obs,
                              const BoundaryBatch& bc, Rng& rng) {
  if (student.pipeline.head == nn::HeadMode::kRaw) {
    return SampleStudentWithSkip(student, obs, bc, rng);
  }
  const double t_max = student.pipeline.schedule.t_max;
  const Eigen::MatrixXd x =
      t_max * StandardNormal(student.pipeline.traj_size(), obs.cols(), rng);
  return DenoiseF(student.pipeline, student.deployed(), x, obs,
                  diffusion::Levels(t_max, obs.cols()), bc);
}

Eigen::MatrixXd SampleStudentWithSkip(const StudentModel& student,
                                      const Eigen::MatrixXd& obs,
                                      const BoundaryBatch& bc, Rng& rng) {
  const double t_max = student.pipeline.schedule.t_max;
  const Eigen::MatrixXd x =
      t_max * StandardNormal(student.pipeline.traj_size(), obs.cols(), rng);
  return ConsistencyFWith(student, student.deployed(), x, obs,
                          diffusion::Levels(t_max, obs.cols()), bc);
}

}  // namespace frmd::consistency
