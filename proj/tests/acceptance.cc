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

// End-to-end acceptance gate. Runs every acceptance criterion at its
// stated tolerance and prints one PASS/FAIL line per criterion. Exits
// nonzero when any criterion fails.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "frmd/checkpoint.h"
#include "frmd/commands.h"
#include "frmd/errors.h"
#include "frmd/eval_metrics.h"
#include "frmd/policies.h"
#include "test_util.h"

namespace frmd {
namespace {

namespace fs = std::filesystem;
using testing::RandomMatrix;

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       since)
      .count();
}

struct Gate {
  int failures = 0;
  void Report(int id, bool pass, const std::string& detail) {
    std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id,
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  }
};

std::string Format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

void Info(const std::string& text) {
  std::printf("  info: %s\n", text.c_str());
  std::fflush(stdout);
}

double NormRelative(const Eigen::VectorXd& analytic,
                    const Eigen::VectorXd& numeric) {
  return (analytic - numeric).norm() / std::max(numeric.norm(), 1e-300);
}

// 1. Decode against an RK4 reference, boundary exactness, affinity.
void DecodeOracle(Gate& gate) {
  const auto start = std::chrono::steady_clock::now();
  const mp::MPConfig c;
  const mp::BasisTables tables = mp::BuildBasis(c);
  const double gain = diffusion::HeadWeightGain(c);
  std::mt19937_64 rng(2026);
  std::uniform_real_distribution<double> tb(0.0, 0.5);
  double decode_err = 0.0, boundary_err = 0.0, affine_err = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    mp::MPWeights w = mp::MPWeights::Zero(c);
    w.w = RandomMatrix(c.dof, c.weights_per_dof(), rng);
    w.w.leftCols(c.n_basis) *= gain;
    const mp::BoundaryState bc{tb(rng), RandomMatrix(c.dof, 1, rng),
                               RandomMatrix(c.dof, 1, rng)};
    const Eigen::VectorXd times =
        Eigen::VectorXd::LinSpaced(60, bc.t_b, tables.duration());
    const mp::Trajectory got = mp::Decode(tables, bc, w, times);
    const mp::Trajectory ref = mp::ReferenceIntegrate(c, bc, w, times);
    decode_err = std::max(
        decode_err, (got.positions - ref.positions).cwiseAbs().maxCoeff());
    const Eigen::VectorXd at_tb = Eigen::VectorXd::Constant(1, bc.t_b);
    const mp::Trajectory b = mp::Decode(tables, bc, w, at_tb);
    boundary_err = std::max(
        {boundary_err,
         (b.positions.row(0).transpose() - bc.y0).cwiseAbs().maxCoeff(),
         (b.velocities->row(0).transpose() - bc.dy0).cwiseAbs().maxCoeff()});
    const mp::AffineMap map = mp::DecodeAffineMap(tables, bc, times);
    Eigen::VectorXd vec(c.dof * c.weights_per_dof());
    for (int d = 0; d < c.dof; ++d) {
      vec.segment(d * c.weights_per_dof(), c.weights_per_dof()) =
          w.w.row(d).transpose();
    }
    affine_err = std::max(
        affine_err, (map.H * vec + map.b - mp::FlattenTimeMajor(got.positions))
                        .cwiseAbs()
                        .maxCoeff());
  }
  const double elapsed = Seconds(start);
  gate.Report(1,
              decode_err < 1e-3 && boundary_err < 1e-9 && affine_err < 1e-10 &&
                  elapsed < 10.0,
              Format("decode vs RK4 max abs %.2e (<1e-3), boundary %.2e "
                     "(<1e-9), affine %.2e (<1e-10), %.2fs (<10s)",
                     decode_err, boundary_err, affine_err, elapsed));
}

// Random MP-head teacher with every parameter perturbed off its init.
diffusion::TeacherModel RandomTeacher(uint64_t seed) {
  constexpr int kHorizon = 12, kObs = 21;
  const mp::MPConfig c;
  diffusion::TeacherModel m;
  m.pipeline = diffusion::MakePipeline(
      c, nn::HeadMode::kMovementPrimitive, kHorizon, kObs,
      diffusion::KarrasLevels(40, 0.002, 10.0, 7.0), Normalizer::Identity(2));
  m.net = nn::InitNet(nn::MakeLayout(nn::HeadMode::kMovementPrimitive,
                                     kHorizon, c.dof, c.n_basis, kObs, 8),
                      {24, 24}, seed);
  std::mt19937_64 rng(seed + 100);
  Eigen::VectorXd p = nn::FlattenParameters(m.net);
  p += RandomMatrix(p.size(), 1, rng, 0.2);
  nn::SetParameters(m.net, p);
  return m;
}

// 2. Composed denoiser and consistency function gradients vs central
// differences.
void GradientSuite(Gate& gate) {
  const auto start = std::chrono::steady_clock::now();
  double worst_f = 0.0, worst_c = 0.0;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const diffusion::TeacherModel m = RandomTeacher(seed);
    const diffusion::DenoisePipeline& p = m.pipeline;
    std::mt19937_64 rng(seed + 7);
    const int batch = 3;
    const Eigen::MatrixXd x = RandomMatrix(p.traj_size(), batch, rng, 0.8);
    const Eigen::MatrixXd obs = RandomMatrix(p.obs_size, batch, rng, 0.5);
    const diffusion::BoundaryBatch bc{RandomMatrix(2, batch, rng, 0.3),
                                      RandomMatrix(2, batch, rng, 0.3)};
    Eigen::VectorXd t(batch);
    t << 0.01, 0.4, 3.0;
    const Eigen::MatrixXd up = RandomMatrix(p.traj_size(), batch, rng);
    const Eigen::VectorXd theta = nn::FlattenParameters(m.net);

    diffusion::DenoiseForward fwd =
        diffusion::DenoiseFRecorded(p, m.net, x, obs, t, bc);
    const Eigen::VectorXd analytic_f =
        nn::FlattenBlocks(diffusion::DenoiseBackward(p, fwd.tape, up));
    const Eigen::VectorXd numeric_f = testing::NumericGradient(
        [&](const Eigen::VectorXd& q) {
          nn::DenoiserNet net = m.net;
          nn::SetParameters(net, q);
          return (diffusion::DenoiseF(p, net, x, obs, t, bc).array() *
                  up.array())
              .sum();
        },
        theta);
    worst_f = std::max(worst_f, NormRelative(analytic_f, numeric_f));

    const consistency::StudentModel s =
        consistency::InitStudent(m, consistency::ConsistencyConfig{});
    const Eigen::VectorXd analytic_c = nn::FlattenBlocks(
        consistency::ConsistencyFGradient(s, x, obs, t, bc, up));
    const Eigen::VectorXd numeric_c = testing::NumericGradient(
        [&](const Eigen::VectorXd& q) {
          nn::DenoiserNet net = s.online;
          nn::SetParameters(net, q);
          return (consistency::ConsistencyFWith(s, net, x, obs, t, bc)
                      .array() *
                  up.array())
              .sum();
        },
        nn::FlattenParameters(s.online));
    worst_c = std::max(worst_c, NormRelative(analytic_c, numeric_c));
  }
  const double elapsed = Seconds(start);
  gate.Report(2, worst_f < 1e-4 && worst_c < 1e-4 && elapsed < 30.0,
              Format("F relative error %.2e, consistency f relative error "
                     "%.2e (<1e-4 on 5 nets), %.2fs (<30s)",
                     worst_f, worst_c, elapsed));
}

// 3. f(x, 0) = x for arbitrary parameters and exact skip coefficients.
void BoundaryCondition(Gate& gate) {
  double worst = 0.0;
  bool coefficients = true;
  for (consistency::COutMode mode :
       {consistency::COutMode::kConvex, consistency::COutMode::kScaled}) {
    consistency::ConsistencyConfig cc;
    cc.c_out = mode;
    coefficients = coefficients && consistency::CSkip(0.0, cc) == 1.0 &&
                   consistency::COut(0.0, cc) == 0.0;
    for (uint64_t seed = 0; seed < 5; ++seed) {
      diffusion::TeacherModel m = RandomTeacher(seed + 50);
      std::mt19937_64 rng(seed);
      Eigen::VectorXd p = nn::FlattenParameters(m.net);
      p = RandomMatrix(p.size(), 1, rng, 3.0);
      nn::SetParameters(m.net, p);
      const consistency::StudentModel s = consistency::InitStudent(m, cc);
      const int batch = 4;
      const Eigen::MatrixXd x =
          RandomMatrix(m.pipeline.traj_size(), batch, rng, 5.0);
      const Eigen::MatrixXd obs =
          RandomMatrix(m.pipeline.obs_size, batch, rng);
      const diffusion::BoundaryBatch bc{RandomMatrix(2, batch, rng),
                                        RandomMatrix(2, batch, rng)};
      for (consistency::Branch branch :
           {consistency::Branch::kOnline, consistency::Branch::kTarget}) {
        const Eigen::MatrixXd f = consistency::ConsistencyF(
            s, x, obs, Eigen::VectorXd::Zero(batch), bc, branch);
        worst = std::max(worst, (f - x).cwiseAbs().maxCoeff());
      }
    }
  }
  gate.Report(3, worst <= 1e-12 && coefficients,
              Format("max |f(x,0) - x| %.2e (<=1e-12), c_skip(0)=1 and "
                     "c_out(0)=0 exact: %s",
                     worst, coefficients ? "yes" : "no"));
}

double SolveFlow(const diffusion::DenoiserFn& denoiser, double x_t, int n,
                 diffusion::Solver solver) {
  const diffusion::NoiseSchedule sch =
      diffusion::KarrasLevels(n, 0.002, 10.0, 7.0);
  Eigen::MatrixXd x = Eigen::MatrixXd::Constant(1, 1, x_t);
  for (int i = 0; i + 1 < sch.size(); ++i) {
    x = diffusion::OdeStep(denoiser, x, sch.levels[i], sch.levels[i + 1],
                           solver);
  }
  return x(0, 0);
}

// 4. PF-ODE solvers against analytic Gaussian flows.
void GaussianClosedForm(Gate& gate) {
  const double mu = 0.3, te = 0.002, tt = 10.0;
  // Exact denoiser F = mu: closed form mu + (t / T)(x_T - mu).
  const diffusion::DenoiserFn point = [&](const Eigen::MatrixXd& x, double) {
    return Eigen::MatrixXd::Constant(x.rows(), x.cols(), mu);
  };
  double euler_err = 0.0;
  for (double x_t : {-25.0, -7.0, 0.0, 4.0, 18.0}) {
    const double exact = mu + (te / tt) * (x_t - mu);
    euler_err = std::max(
        euler_err,
        std::abs(SolveFlow(point, x_t, 40, diffusion::Solver::kEuler) -
                 exact));
  }
  // Data N(mu, s^2): denoiser mu + s^2/(s^2+t^2)(x - mu), flow
  // x(t) = mu + (x_T - mu) sqrt((s^2+t^2)/(s^2+T^2)).
  const double s = 0.5, x_t = 7.0;
  const diffusion::DenoiserFn gauss = [&](const Eigen::MatrixXd& x, double t) {
    return ((x.array() - mu) * (s * s / (s * s + t * t)) + mu).matrix();
  };
  const double exact =
      mu + (x_t - mu) * std::sqrt((s * s + te * te) / (s * s + tt * tt));
  auto gap = [&](int n, diffusion::Solver solver) {
    return std::abs(SolveFlow(gauss, x_t, n, solver) - exact);
  };
  const double heun20 = gap(20, diffusion::Solver::kHeun);
  const double heun40 = gap(40, diffusion::Solver::kHeun);
  const double ratio = heun20 / heun40;
  Info(Format("Euler 40 steps on N(mu, 0.5^2): error %.2e for x_T - mu = %.1f",
              gap(40, diffusion::Solver::kEuler), x_t - mu));
  gate.Report(4, euler_err < 1e-3 && ratio >= 3.0,
              Format("40-step Euler vs closed form %.2e (<1e-3), Heun gap "
                     "20->40 steps shrinks %.2fx (>=3x)",
                     euler_err, ratio));
}

RunConfig TaskConfig(envs::TaskKind task) {
  RunConfig config;
  config.task = task;
  if (task == envs::TaskKind::kBimodalVia) {
    config.teacher.train.weighting = diffusion::LossWeighting::kMixed;
    config.teacher.train.weight_sigma = 0.1;
  }
  return config;
}

std::vector<std::vector<bool>> Outcomes(const std::vector<eval::PolicyRun>& runs) {
  std::vector<std::vector<bool>> by_seed;
  for (const eval::PolicyRun& run : runs) {
    std::vector<bool> hits;
    for (const envs::EpisodeResult& e : run.episodes) hits.push_back(e.success);
    by_seed.push_back(hits);
  }
  return by_seed;
}

std::vector<double> NonsmoothCounts(const RunConfig& config,
                                    const std::vector<eval::PolicyRun>& runs) {
  std::vector<double> counts;
  for (const eval::PolicyRun& run : runs) {
    for (const envs::EpisodeResult& e : run.episodes) {
      counts.push_back(eval::NonsmoothCount(e.trace, config.eval.k_max,
                                            config.eval.min_segment)
                           .nonsmooth_count);
    }
  }
  return counts;
}

int EpisodeCount(const std::vector<eval::PolicyRun>& runs) {
  int n = 0;
  for (const eval::PolicyRun& run : runs) n += run.episodes.size();
  return n;
}

struct TaskModels {
  RunConfig config;
  TrainingData data;
  diffusion::TeacherModel teacher;
  consistency::StudentModel student;
  double teacher_sr = 0.0;
  double student_sr = 0.0;
  std::vector<eval::PolicyRun> teacher_runs;
  std::vector<eval::PolicyRun> student_runs;
};

TaskModels TrainTask(envs::TaskKind kind, Gate* gate5) {
  const auto start = std::chrono::steady_clock::now();
  TaskModels t;
  t.config = TaskConfig(kind);
  const std::vector<envs::Demonstration> demos = GenerateDemos(t.config);
  t.data = PrepareTrainingData(t.config, demos);
  t.teacher = TrainRunTeacher(t.config, t.data,
                              nn::HeadMode::kMovementPrimitive)
                  .model;
  DiffusionPolicy teacher_policy(t.teacher, t.config.teacher.sample_steps,
                                 t.config.teacher.solver, "teacher");
  t.teacher_runs = RunPolicy(teacher_policy, t.config, "teacher");
  t.teacher_sr = eval::SuccessRate(Outcomes(t.teacher_runs)).mean;
  const double elapsed = Seconds(start);
  if (gate5) {
    const int episodes = EpisodeCount(t.teacher_runs);
    gate5->Report(
        5,
        t.teacher_sr >= 0.90 && t.config.teacher.train.steps <= 10000 &&
            demos.size() == 100 && episodes == 30 && elapsed <= 600.0,
        Format("reach teacher %lld steps on %zu demos, %d-step success "
               "%.3f over %d episodes (>=0.90), %.0fs (<=600s)",
               static_cast<long long>(t.config.teacher.train.steps),
               demos.size(), t.config.teacher.sample_steps, t.teacher_sr,
               episodes, elapsed));
  }
  t.student = DistillRunStudent(t.config, t.data, t.teacher).student;
  StudentPolicy student_policy(t.student, "student");
  t.student_runs = RunPolicy(student_policy, t.config, "student");
  t.student_sr = eval::SuccessRate(Outcomes(t.student_runs)).mean;
  Info(Format("%s: teacher SR %.3f, student SR %.3f, total %.0fs",
              envs::ToString(kind).c_str(), t.teacher_sr, t.student_sr,
              Seconds(start)));
  return t;
}

envs::PlanRequest StartRequest(const RunConfig& config,
                               const envs::TaskInstance& task) {
  envs::PlanRequest request;
  request.obs_window.resize(config.env.obs_window, envs::kObsDim);
  request.obs_window.rowwise() =
      envs::Observation(task, task.start, false).transpose();
  request.position = task.start;
  request.velocity.setZero();
  return request;
}

// Counts plans by side of the start-goal line at the horizon end.
std::pair<int, int> BranchCounts(envs::Policy& policy, const RunConfig& config,
                                 const envs::TaskInstance& task) {
  const envs::PlanRequest request = StartRequest(config, task);
  const Eigen::Vector2d dir = (task.goal - task.start).normalized();
  const Eigen::Vector2d perp(-dir.y(), dir.x());
  int left = 0, right = 0;
  for (int seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    const Eigen::MatrixXd plan = policy.Plan(request, rng);
    const double lateral =
        (plan.row(plan.rows() - 1).transpose() - task.start).dot(perp);
    if (lateral > 0.02) ++left;
    if (lateral < -0.02) ++right;
  }
  return {left, right};
}

// 7. Latency ratio on one probe and the one-forward structural check.
void Speedup(Gate& gate, const TaskModels& reach) {
  const RunConfig& config = reach.config;
  const envs::TaskInstance task = envs::MakeTask(
      config.task,
      envs::EvalTaskSeed(config.eval.seeds.front(), 0, config.eval.task_offset),
      config.env);
  const PlanInputs in =
      MakePlanInputs(reach.teacher.pipeline, StartRequest(config, task));
  std::mt19937_64 rng(0);
  const int steps = config.teacher.sample_steps;
  const eval::LatencyStats teacher = eval::BenchInference(
      [&] {
        diffusion::SampleTeacher(reach.teacher, in.obs, in.bc, steps, rng,
                                 config.teacher.solver);
      },
      100, 5);
  const eval::LatencyStats student = eval::BenchInference(
      [&] { consistency::SampleStudent(reach.student, in.obs, in.bc, rng); },
      100, 5);
  const uint64_t before = nn::ForwardCallCount();
  consistency::SampleStudent(reach.student, in.obs, in.bc, rng);
  const uint64_t calls = nn::ForwardCallCount() - before;
  const double ratio = student.mean_ms / teacher.mean_ms;
  gate.Report(7, ratio <= 0.2 && calls == 1,
              Format("student %.3f ms vs teacher %d-step %.3f ms, ratio %.3f "
                     "(<=0.2), forward passes per student sample %llu (==1)",
                     student.mean_ms, steps, teacher.mean_ms, ratio,
                     static_cast<unsigned long long>(calls)));
}

// 8. Smoothness of MP-head vs raw-head plans, expert demos, and bounded
// MP decodes.
void Smoothness(Gate& gate, const TaskModels& reach) {
  const RunConfig& config = reach.config;
  const diffusion::TeacherModel raw =
      TrainRunTeacher(config, reach.data, nn::HeadMode::kRaw).model;
  DiffusionPolicy raw_policy(raw, config.teacher.sample_steps,
                             config.teacher.solver, "raw");
  const std::vector<eval::PolicyRun> raw_runs =
      RunPolicy(raw_policy, config, "raw");
  const double raw_n = eval::Median(NonsmoothCounts(config, raw_runs));
  const double student_n =
      eval::Median(NonsmoothCounts(config, reach.student_runs));
  const double teacher_n =
      eval::Median(NonsmoothCounts(config, reach.teacher_runs));
  Info(Format("raw baseline SR %.3f", eval::SuccessRate(Outcomes(raw_runs)).mean));

  // Expert demonstrations: the commanded path from the start state.
  int expert_bad = 0, expert_total = 0;
  for (envs::TaskKind kind : {envs::TaskKind::kReach, envs::TaskKind::kViaPoint,
                              envs::TaskKind::kBimodalVia}) {
    const RunConfig c = TaskConfig(kind);
    for (uint64_t seed = 0; seed < static_cast<uint64_t>(c.demos); ++seed) {
      const envs::TaskInstance task = envs::MakeTask(kind, seed, c.env);
      const envs::Demonstration demo = envs::ExpertDemo(task, seed, c.env);
      Eigen::MatrixXd path(demo.length() + 1, 2);
      path.row(0) = task.start.transpose();
      path.bottomRows(demo.length()) = demo.actions;
      expert_bad += eval::NonsmoothCount(path, c.eval.k_max,
                                         c.eval.min_segment)
                        .nonsmooth_count > 0;
      ++expert_total;
    }
  }

  // MP decodes with head outputs in [-1, 1] on reach geometry.
  const mp::MPConfig& mc = config.mp;
  const mp::BasisTables tables = mp::BuildBasis(mc);
  const double gain = diffusion::HeadWeightGain(mc);
  Eigen::VectorXd times(config.env.horizon + 1);
  times(0) = 0.0;
  times.tail(config.env.horizon) =
      diffusion::ActionTimes(mc, config.env.horizon);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  int decode_bad = 0, decode_total = 0, decode_max = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    const envs::TaskInstance task =
        envs::MakeTask(envs::TaskKind::kReach, seed, config.env);
    for (int draw = 0; draw < 2; ++draw) {
      mp::MPWeights w = mp::MPWeights::Zero(mc);
      for (int d = 0; d < mc.dof; ++d) {
        for (int i = 0; i < mc.n_basis; ++i) w.w(d, i) = gain * unit(rng);
        w.w(d, mc.n_basis) = task.goal(d);
      }
      const mp::Trajectory traj = mp::Decode(
          tables, mp::BoundaryState::AtRest(task.start), w, times);
      const int n = eval::NonsmoothCount(traj.positions, config.eval.k_max,
                                         config.eval.min_segment)
                        .nonsmooth_count;
      decode_bad += n > 0;
      decode_max = std::max(decode_max, n);
      ++decode_total;
    }
  }
  gate.Report(
      8,
      student_n < raw_n && student_n <= 5.0 && expert_bad == 0 &&
          decode_bad == 0,
      Format("median N student %.1f < raw %.1f over %d matched episodes; "
             "MP-head median N student %.1f teacher %.1f (<=5); expert demos "
             "with N>0: %d/%d; bounded MP decodes with N>0: %d/%d (max %d)",
             student_n, raw_n, EpisodeCount(raw_runs), student_n, teacher_n,
             expert_bad, expert_total, decode_bad, decode_total, decode_max));
}

// 9. Menger curvature oracles.
void MetricOracles(Gate& gate) {
  double circle_err = 0.0;
  for (double r : {0.25, 1.0, 3.0}) {
    const int n = 2000;
    Eigen::MatrixXd trace(n, 2);
    for (int i = 0; i < n; ++i) {
      const double a = 2.0 * M_PI * i / n;
      trace.row(i) << 1.5 + r * std::cos(a), -0.5 + r * std::sin(a);
    }
    const eval::CurvatureResult k = eval::Curvature(trace);
    circle_err = std::max(
        circle_err, ((k.k.array() * r) - 1.0).abs().maxCoeff());
  }

  std::mt19937_64 rng(31);
  double invariance = 0.0;
  bool monotone = true;
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd trace = RandomMatrix(40, 2, rng).array() * 0.3;
    const Eigen::VectorXd base = eval::Curvature(trace).k;
    std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
    const double a = angle(rng), scale = 0.1 + 3.0 * std::abs(angle(rng));
    Eigen::Matrix2d rot;
    rot << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    if (trial % 2) rot.col(0) *= -1.0;  // reflection
    const Eigen::RowVector2d shift = RandomMatrix(1, 2, rng, 5.0);
    const Eigen::MatrixXd rigid =
        (trace * rot.transpose()).rowwise() + shift;
    invariance = std::max(
        invariance,
        ((eval::Curvature(rigid).k - base).array() /
         base.array().abs().max(1.0))
            .abs()
            .maxCoeff());
    const Eigen::VectorXd scaled = eval::Curvature(trace * scale).k * scale;
    invariance = std::max(invariance,
                          ((scaled - base).array() /
                           base.array().abs().max(1.0))
                              .abs()
                              .maxCoeff());
    int previous = std::numeric_limits<int>::max();
    for (double k_max = 0.05; k_max < 200.0; k_max *= 1.5) {
      const int n = eval::NonsmoothCount(trace, k_max).nonsmooth_count;
      monotone = monotone && n <= previous;
      previous = n;
    }
  }
  gate.Report(9,
              circle_err < 0.01 && invariance < 1e-9 && monotone,
              Format("circle |k r - 1| %.2e (<1%%), rigid/scale invariance "
                     "%.2e (<1e-9), threshold monotone: %s",
                     circle_err, invariance, monotone ? "yes" : "no"));
}

int Cli(const std::vector<std::string>& args, std::string* log) {
  std::vector<std::string> all = {"frmd"};
  all.insert(all.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (std::string& a : all) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = RunCli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (log) *log += out.str() + err.str();
  return code;
}

std::vector<uint8_t> ReadBytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Success fields from every policy entry of an eval report.
nlohmann::json SuccessFields(const fs::path& report) {
  std::ifstream in(report);
  const nlohmann::json doc = nlohmann::json::parse(in);
  nlohmann::json out;
  for (const auto& [task, policies] : doc.at("tasks").items()) {
    for (const auto& [policy, entry] : policies.items()) {
      out[task][policy]["success_rate"] = entry.at("success_rate");
      nlohmann::json hits = nlohmann::json::array();
      for (const auto& e : entry.at("episodes")) hits.push_back(e.at("success"));
      out[task][policy]["episodes"] = hits;
    }
  }
  return out;
}

// 10. Fixed-seed pipeline determinism and checkpoint persistence.
void Determinism(Gate& gate) {
  const fs::path dir = fs::temp_directory_path() /
                       ("frmd_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const fs::path cfg = dir / "run.cfg";
  {
    std::ofstream f(cfg);
    f << "env.task = reach\n"
         "env.demos = 12\n"
         "teacher.hidden = 32,32\n"
         "teacher.steps = 200\n"
         "teacher.batch_size = 32\n"
         "teacher.validation_size = 32\n"
         "teacher.warmup_steps = 20\n"
         "distill.steps = 100\n"
         "distill.batch_size = 32\n"
         "distill.warmup_steps = 10\n"
         "eval.seeds = 0,1\n"
         "eval.episodes = 3\n"
         "eval.bench_reps = 10\n"
         "seed = 7\n";
  }
  bool ran = true;
  std::string log;
  std::vector<nlohmann::json> fields;
  for (const char* name : {"a", "b"}) {
    const std::string out = (dir / name).string();
    for (const char* cmd : {"gen-data", "train-teacher", "distill", "eval"}) {
      ran = ran && Cli({cmd, "--config", cfg.string(), "--out", out}, &log) ==
                       kExitOk;
    }
    if (ran) fields.push_back(SuccessFields(fs::path(out) / "report.json"));
  }
  const bool identical = ran && fields.size() == 2 && fields[0] == fields[1];

  bool roundtrip = false, rejected = false;
  if (ran) {
    const std::vector<uint8_t> bytes = ReadBytes(dir / "a" / "student.ckpt");
    const Checkpoint ck = DeserializeCheckpoint(bytes);
    roundtrip = SerializeCheckpoint(ck) == bytes;
    std::vector<uint8_t> corrupt = bytes;
    corrupt[corrupt.size() / 2] ^= 0x10;
    try {
      DeserializeCheckpoint(corrupt);
    } catch (const ValidationError& e) {
      rejected = std::string(e.what()).find("checksum") != std::string::npos;
    }
  }
  fs::remove_all(dir);
  if (!ran) Info("pipeline log:\n" + log);
  gate.Report(10, identical && roundtrip && rejected,
              Format("two fixed-seed runs give identical success fields: %s; "
                     "checkpoint round-trip bit-identical: %s; corrupted "
                     "byte rejected by checksum: %s",
                     identical ? "yes" : "no", roundtrip ? "yes" : "no",
                     rejected ? "yes" : "no"));
}

int Main() {
  Gate gate;
  DecodeOracle(gate);
  GradientSuite(gate);
  BoundaryCondition(gate);
  GaussianClosedForm(gate);
  MetricOracles(gate);
  Determinism(gate);

  const TaskModels reach = TrainTask(envs::TaskKind::kReach, &gate);
  const TaskModels via = TrainTask(envs::TaskKind::kViaPoint, nullptr);
  const TaskModels bimodal = TrainTask(envs::TaskKind::kBimodalVia, nullptr);
  {
    const envs::TaskInstance task = envs::MakeTask(
        envs::TaskKind::kBimodalVia,
        envs::EvalTaskSeed(0, 0, bimodal.config.eval.task_offset),
        bimodal.config.env);
    StudentPolicy student(bimodal.student, "student");
    DiffusionPolicy teacher(bimodal.teacher,
                            bimodal.config.teacher.sample_steps,
                            bimodal.config.teacher.solver, "teacher");
    const auto [sl, sr] = BranchCounts(student, bimodal.config, task);
    const auto [tl, tr] = BranchCounts(teacher, bimodal.config, task);
    Info(Format("bimodal teacher plan branches %d / %d", tl, tr));
    const bool reach_ok = reach.student_sr >= 0.9 * reach.teacher_sr;
    const bool via_ok = via.student_sr >= 0.9 * via.teacher_sr;
    gate.Report(6, reach_ok && via_ok && sl >= 10 && sr >= 10,
                Format("reach student %.3f vs 0.9 x teacher %.3f; via_point "
                       "student %.3f vs 0.9 x teacher %.3f; bimodal student "
                       "plan branches %d / %d over 50 seeds (each >=10)",
                       reach.student_sr, 0.9 * reach.teacher_sr,
                       via.student_sr, 0.9 * via.teacher_sr, sl, sr));
  }
  Speedup(gate, reach);
  Smoothness(gate, reach);

  std::printf("%d criteria failed\n", gate.failures);
  return gate.failures == 0 ? 0 : 1;
}

}  // namespace
}  // namespace frmd

int main() {
  try {
    return frmd::Main();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance aborted: %s\n", e.what());
    return 1;
  }
}
