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
#include <random>

#include <gtest/gtest.h>

#include "frmd/errors.h"
#include "test_util.h"

namespace frmd::consistency {
namespace {

using diffusion::TeacherModel;
using diffusion::WindowSet;

constexpr int kHorizon = 12;
constexpr int kObs = 7;

TeacherModel TestTeacher(nn::HeadMode head, int levels = 40) {
  TeacherModel m;
  m.pipeline = diffusion::MakePipeline(
      mp::MPConfig{}, head, kHorizon, kObs,
      diffusion::KarrasLevels(levels, 0.002, 10.0, 7.0),
      Normalizer::Identity(2));
  m.net = nn::InitNet(
      nn::MakeLayout(head, kHorizon, 2, mp::MPConfig{}.n_basis, kObs, 8),
      {16, 16}, 11);
  return m;
}

WindowSet RandomWindows(int count, uint64_t seed) {
  std::mt19937_64 rng(seed);
  WindowSet w;
  w.obs = testing::RandomMatrix(kObs, count, rng, 0.5);
  w.traj = testing::RandomMatrix(kHorizon * 2, count, rng, 0.5);
  w.bc = {testing::RandomMatrix(2, count, rng, 0.3),
          testing::RandomMatrix(2, count, rng, 0.3)};
  return w;
}

void Perturb(nn::DenoiserNet& net, uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  Eigen::VectorXd p = nn::FlattenParameters(net);
  p += testing::RandomMatrix(p.size(), 1, rng, scale);
  nn::SetParameters(net, p);
}

TEST(Consistency, SkipCoefficients) {
  for (COutMode mode : {COutMode::kConvex, COutMode::kScaled}) {
    ConsistencyConfig c;
    c.c_out = mode;
    EXPECT_DOUBLE_EQ(CSkip(0.0, c), 1.0);
    EXPECT_DOUBLE_EQ(COut(0.0, c), 0.0);
    EXPECT_LT(CSkip(10.0, c), 1e-5);
    EXPECT_NEAR(COut(10.0, c), 1.0, 1e-5);
  }
  ConsistencyConfig c;
  const double t = 0.02;
  EXPECT_DOUBLE_EQ(CSkip(t, c), 0.5);
  EXPECT_DOUBLE_EQ(COut(t, c), 0.5);
  c.c_out = COutMode::kScaled;
  EXPECT_NEAR(COut(t, c), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Consistency, BoundaryIsIdentityForAnyParameters) {
  const TeacherModel teacher = TestTeacher(nn::HeadMode::kMovementPrimitive);
  StudentModel s = InitStudent(teacher, ConsistencyConfig{});
  Perturb(s.online, 3, 1.0);
  const WindowSet w = RandomWindows(3, 2);
  const uint64_t before = nn::ForwardCallCount();
  const Eigen::MatrixXd f = ConsistencyF(s, w.traj, w.obs,
                                         Eigen::VectorXd::Zero(3), w.bc,
                                         Branch::kOnline);
  EXPECT_EQ(nn::ForwardCallCount(), before);
  EXPECT_EQ(f, w.traj);
  // Mixed batch: zero columns untouched, others go through the network.
  Eigen::VectorXd t(3);
  t << 0.0, 0.5, 0.0;
  const Eigen::MatrixXd g =
      ConsistencyF(s, w.traj, w.obs, t, w.bc, Branch::kOnline);
  EXPECT_EQ(g.col(0), w.traj.col(0));
  EXPECT_EQ(g.col(2), w.traj.col(2));
  EXPECT_GT((g.col(1) - w.traj.col(1)).norm(), 0.0);
}

TEST(Consistency, FunctionMatchesSkipFormula) {
  const TeacherModel teacher = TestTeacher(nn::HeadMode::kRaw);
  ConsistencyConfig cfg;
  cfg.c_out = COutMode::kScaled;
  const StudentModel s = InitStudent(teacher, cfg);
  const WindowSet w = RandomWindows(2, 4);
  const Eigen::VectorXd t = Eigen::VectorXd::Constant(2, 0.3);
  const Eigen::MatrixXd net_f = diffusion::DenoiseF(
      s.pipeline, s.online, w.traj, w.obs, t, w.bc);
  const Eigen::MatrixXd expect =
      CSkip(0.3, cfg) * w.traj + COut(0.3, cfg) * net_f;
  EXPECT_LT((ConsistencyF(s, w.traj, w.obs, t, w.bc, Branch::kTarget) - expect)
                .cwiseAbs()
                .maxCoeff(),
            1e-14);
}

TEST(Consistency, FGradientMatchesFiniteDifferences) {
  const TeacherModel teacher = TestTeacher(nn::HeadMode::kMovementPrimitive);
  const StudentModel s = InitStudent(teacher, ConsistencyConfig{});
  const WindowSet w = RandomWindows(2, 5);
  Eigen::VectorXd t(2);
  t << 0.05, 1.3;
  std::mt19937_64 rng(6);
  const Eigen::MatrixXd up = testing::RandomMatrix(kHorizon * 2, 2, rng);
  const Eigen::VectorXd analytic =
      nn::FlattenBlocks(ConsistencyFGradient(s, w.traj, w.obs, t, w.bc, up));
  const Eigen::VectorXd numeric = testing::NumericGradient(
      [&](const Eigen::VectorXd& p) {
        nn::DenoiserNet net = s.online;
        nn::SetParameters(net, p);
        return (ConsistencyFWith(s, net, w.traj, w.obs, t, w.bc).array() *
                up.array())
            .sum();
      },
      nn::FlattenParameters(s.online));
  EXPECT_LT(testing::MaxRelativeError(analytic, numeric, 1e-5), 1e-5);
}

// Recomputes one distillation loss column by column from public pieces.
double ReferenceDistillLoss(const TeacherModel& teacher,
                            const StudentModel& s, const WindowSet& batch,
                            const DistillDraw& draw, diffusion::Solver solver) {
  const auto& levels = s.pipeline.schedule.levels;
  double total = 0.0;
  for (Eigen::Index b = 0; b < batch.size(); ++b) {
    const WindowSet one = batch.Select({b});
    const int hi = draw.hi_index[b];
    const double t_hi = levels[hi];
    const double t_lo = levels[hi + s.config.k];
    const Eigen::MatrixXd x_hi = one.traj + t_hi * draw.noise.col(b);
    Eigen::MatrixXd x = x_hi;
    const diffusion::DenoiserFn den =
        diffusion::MakeDenoiser(teacher, one.obs, one.bc);
    for (int j = 0; j < s.config.k; ++j) {
      x = diffusion::OdeStep(den, x, levels[hi + j], levels[hi + j + 1],
                             solver);
    }
    const Eigen::MatrixXd f_t =
        CSkip(t_lo, s.config) * x +
        COut(t_lo, s.config) *
            diffusion::DenoiseF(s.pipeline, s.target, x, one.obs,
                                diffusion::Levels(t_lo, 1), one.bc);
    const Eigen::MatrixXd f_o =
        CSkip(t_hi, s.config) * x_hi +
        COut(t_hi, s.config) *
            diffusion::DenoiseF(s.pipeline, s.online, x_hi, one.obs,
                                diffusion::Levels(t_hi, 1), one.bc);
    const double sq = (f_o - f_t).squaredNorm();
    double d = sq;
    if (s.config.metric == Metric::kPseudoHuber) {
      const double c = 0.00054 * std::sqrt(static_cast<double>(f_o.rows()));
      d = std::sqrt(sq + c * c) - c;
    }
    const double w = s.config.weighting == Weighting::kUniform
                         ? 1.0
                         : 1.0 / (t_hi - t_lo);
    total += w * d;
  }
  return total / static_cast<double>(batch.size());
}

TEST(Consistency, DistillLossMatchesReferenceAndGradient) {
  for (nn::HeadMode head : {nn::HeadMode::kMovementPrimitive,
                            nn::HeadMode::kRaw}) {
    for (int k : {1, 3}) {
      for (Metric metric : {Metric::kSquaredL2, Metric::kPseudoHuber}) {
        const TeacherModel teacher = TestTeacher(head);
        ConsistencyConfig cfg;
        cfg.k = k;
        cfg.metric = metric;
        cfg.weighting = k == 3 ? Weighting::kInverseGap : Weighting::kUniform;
        StudentModel s = InitStudent(teacher, cfg);
        Perturb(s.online, 7, 0.05);
        const WindowSet batch = RandomWindows(3, 8);
        Rng rng(13);
        const DistillDraw draw = DrawDistill(s, 3, rng);
        const auto solver = k == 3 ? diffusion::Solver::kHeun
                                   : diffusion::Solver::kEuler;
        const DistillStepResult r =
            DistillStepWith(teacher, s, batch, draw, solver);
        EXPECT_NEAR(r.loss, ReferenceDistillLoss(teacher, s, batch, draw, solver),
                    1e-10 * (1.0 + r.loss));
        const Eigen::VectorXd numeric = testing::NumericGradient(
            [&](const Eigen::VectorXd& p) {
              StudentModel c = s;
              nn::SetParameters(c.online, p);
              return DistillStepWith(teacher, c, batch, draw, solver).loss;
            },
            nn::FlattenParameters(s.online));
        const double floor = 1e-6 * (1.0 + numeric.cwiseAbs().maxCoeff());
        EXPECT_LT(testing::MaxRelativeError(nn::FlattenBlocks(r.online_grads),
                                            numeric, floor),
                  1e-4)
            << "head " << nn::ToString(head) << " k " << k << " "
            << ToString(metric);
      }
    }
  }
}

TEST(Consistency, DrawRespectsSchedule) {
  const TeacherModel teacher = TestTeacher(nn::HeadMode::kRaw, 10);
  ConsistencyConfig cfg;
  cfg.k = 4;
  const StudentModel s = InitStudent(teacher, cfg);
  Rng rng(1);
  const DistillDraw d = DrawDistill(s, 500, rng);
  int lo = 100, hi = -1;
  for (int i : d.hi_index) {
    lo = std::min(lo, i);
    hi = std::max(hi, i);
  }
  EXPECT_EQ(lo, 0);
  EXPECT_EQ(hi, 10 - 1 - 4);
  EXPECT_EQ(d.noise.rows(), kHorizon * 2);
  EXPECT_EQ(d.noise.cols(), 500);
}

TEST(Consistency, EmaUpdateIsElementwiseBlend) {
  const TeacherModel teacher = TestTeacher(nn::HeadMode::kRaw);
  StudentModel s = InitStudent(teacher, ConsistencyConfig{});
  Perturb(s.online, 2, 1.0);
  const Eigen::VectorXd on = nn::FlattenParameters(s.online);
  const Eigen::VectorXd tg = nn::FlattenParameters(s.target);
  EmaUpdate(s, 0.95);
  const Eigen::VectorXd expect = 0.95 * tg + 0.05 * on;
  EXPECT_LT((nn::FlattenParameters(s.target) - expect).cwiseAbs().maxCoeff(),
            1e-15);
  EXPECT_EQ(nn::FlattenParameters(s.online), on);
  EmaUpdate(s, 0.0);
  EXPECT_EQ(nn::FlattenParameters(s.target), on);
}

TEST(Consistency, PseudoHuberDistance) {
  Eigen::MatrixXd a(4, 2), b = Eigen::MatrixXd::Zero(4, 2);
  a << 3, 0, 4, 0, 0, 0, 0, 1e-5;
  const double c = 0.00054 * 2.0;
  const Eigen::VectorXd d = Distance(Metric::kPseudoHuber, a, b);
  EXPECT_NEAR(d(0), std::sqrt(25.0 + c * c) - c, 1e-14);
  // Quadratic near zero: ||x||^2 / (2c).
  EXPECT_NEAR(d(1), 1e-10 / (2 * c), 1e-12);
  EXPECT_NEAR(Distance(Metric::kSquaredL2, a, b)(0), 25.0, 1e-14);
  const Eigen::MatrixXd g = DistanceGrad(Metric::kPseudoHuber, a, b);
  EXPECT_NEAR(g(0, 0), 3.0 / std::sqrt(25.0 + c * c), 1e-14);
}

TEST(Consistency, ConfigValidation) {
  ConsistencyConfig c;
  c.k = 0;
  EXPECT_THROW(c.Validate(40), ConfigError);
  c.k = 40;
  EXPECT_THROW(c.Validate(40), ConfigError);
  c.k = 39;
  EXPECT_NO_THROW(c.Validate(40));
  c = ConsistencyConfig{};
  c.mu = 1.0;
  EXPECT_THROW(c.Validate(40), ConfigError);
  c = ConsistencyConfig{};
  c.gamma_d = 0.0;
  EXPECT_THROW(c.Validate(40), ConfigError);
  EXPECT_EQ(ParseCOutMode("scaled"), COutMode::kScaled);
  EXPECT_THROW(ParseMetric("l1"), ConfigError);
  EXPECT_EQ(ParseWeighting(ToString(Weighting::kInverseGap)),
            Weighting::kInverseGap);
}

TEST(Consistency, ScheduleMismatchRejected) {
  const TeacherModel teacher = TestTeacher(nn::HeadMode::kRaw, 40);
  const TeacherModel other = TestTeacher(nn::HeadMode::kRaw, 20);
  const StudentModel s = InitStudent(other, ConsistencyConfig{});
  Rng rng(0);
  EXPECT_THROW(DistillStep(teacher, s, RandomWindows(2, 1), rng), ConfigError);
}

TEST(Consistency, OneNetworkCallPerSample) {
  for (nn::HeadMode head : {nn::HeadMode::kMovementPrimitive,
                            nn::HeadMode::kRaw}) {
    const StudentModel s =
        InitStudent(TestTeacher(head), ConsistencyConfig{});
    const WindowSet w = RandomWindows(4, 3);
    Rng rng(2);
    const uint64_t before = nn::ForwardCallCount();
    const Eigen::MatrixXd x = SampleStudent(s, w.obs, w.bc, rng);
    EXPECT_EQ(nn::ForwardCallCount() - before, 1u);
    EXPECT_EQ(x.rows(), kHorizon * 2);
    EXPECT_TRUE(x.allFinite());
  }
}

TEST(Consistency, ShortDistillRunLowersLossAndIsDeterministic) {
  const TeacherModel teacher = TestTeacher(nn::HeadMode::kMovementPrimitive);
  const WindowSet data = RandomWindows(64, 9);
  DistillConfig cfg;
  cfg.consistency.steps = 60;
  cfg.batch_size = 16;
  cfg.log_every = 10;
  cfg.optimizer.lr = 1e-3;
  cfg.optimizer.warmup_steps = 0;
  const DistillResult a = Distill(data, teacher, cfg);
  const DistillResult b = Distill(data, teacher, cfg);
  EXPECT_EQ(nn::FlattenParameters(a.student.target),
            nn::FlattenParameters(b.student.target));
  ASSERT_EQ(a.curve.size(), 6u);
  for (const auto& r : a.curve) EXPECT_TRUE(std::isfinite(r.loss));
}

}  // namespace
}  // namespace frmd::consistency
