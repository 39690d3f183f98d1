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

#include "frmd/envs.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "frmd/errors.h"

namespace frmd::envs {
namespace {

constexpr TaskKind kAllKinds[] = {TaskKind::kReach, TaskKind::kViaPoint,
                                  TaskKind::kBimodalVia};

TEST(Envs, TasksAreDeterministicPerSeed) {
  for (TaskKind kind : kAllKinds) {
    const TaskInstance a = MakeTask(kind, 17);
    const TaskInstance b = MakeTask(kind, 17);
    const TaskInstance c = MakeTask(kind, 18);
    EXPECT_EQ(a.start, b.start);
    EXPECT_EQ(a.goal, b.goal);
    ASSERT_EQ(a.vias.size(), b.vias.size());
    for (size_t i = 0; i < a.vias.size(); ++i) EXPECT_EQ(a.vias[i], b.vias[i]);
    EXPECT_NE(a.start, c.start);
  }
}

TEST(Envs, PlacementsRespectSeparationAndWorkspace) {
  const EnvConfig cfg;
  for (TaskKind kind : kAllKinds) {
    for (uint64_t seed = 0; seed < 200; ++seed) {
      const TaskInstance t = MakeTask(kind, seed, cfg);
      std::vector<Eigen::Vector2d> pts = {t.start, t.goal};
      pts.insert(pts.end(), t.vias.begin(), t.vias.end());
      for (size_t i = 0; i < pts.size(); ++i) {
        EXPECT_LE(pts[i].cwiseAbs().maxCoeff(), cfg.workspace_margin + 1e-12);
        for (size_t j = i + 1; j < pts.size(); ++j) {
          EXPECT_GE((pts[i] - pts[j]).norm(), cfg.min_separation - 1e-12)
              << ToString(kind) << " seed " << seed;
        }
      }
      const size_t expect_vias = kind == TaskKind::kReach      ? 0
                                 : kind == TaskKind::kViaPoint ? 1
                                                               : 2;
      EXPECT_EQ(t.vias.size(), expect_vias);
    }
  }
}

TEST(Envs, BimodalViasMirrorAboutStartGoalLine) {
  const TaskInstance t = MakeTask(TaskKind::kBimodalVia, 5);
  const Eigen::Vector2d mid = 0.5 * (t.start + t.goal);
  EXPECT_LT((0.5 * (t.vias[0] + t.vias[1]) - mid).norm(), 1e-12);
  EXPECT_LT((t.via_hint() - mid).norm(), 1e-12);
  const Eigen::Vector2d dir = (t.goal - t.start).normalized();
  EXPECT_NEAR((t.vias[0] - mid).dot(dir), 0.0, 1e-12);
  EXPECT_NEAR((t.vias[0] - mid).norm(), EnvConfig{}.bimodal_offset, 1e-12);
}

TEST(Envs, ObservationLayout) {
  const TaskInstance t = MakeTask(TaskKind::kViaPoint, 3);
  const Eigen::VectorXd o = Observation(t, Eigen::Vector2d(0.1, 0.2), true);
  ASSERT_EQ(o.size(), kObsDim);
  EXPECT_EQ(o(0), 0.1);
  EXPECT_EQ(o(1), 0.2);
  EXPECT_EQ(o.segment<2>(2), t.goal);
  EXPECT_EQ(o.segment<2>(4), t.vias[0]);
  EXPECT_EQ(o(6), 1.0);
  const TaskInstance r = MakeTask(TaskKind::kReach, 3);
  EXPECT_EQ(Observation(r, r.start, false).segment<2>(4),
            Eigen::Vector2d::Zero());
}

TEST(Envs, MinimumJerkProfile) {
  EXPECT_DOUBLE_EQ(MinimumJerk(0.0), 0.0);
  EXPECT_DOUBLE_EQ(MinimumJerk(1.0), 1.0);
  EXPECT_DOUBLE_EQ(MinimumJerk(0.5), 0.5);
  EXPECT_DOUBLE_EQ(MinimumJerk(-1.0), 0.0);
  EXPECT_DOUBLE_EQ(MinimumJerk(2.0), 1.0);
  // Zero slope at both ends, peak slope 15/8 at the middle.
  const double h = 1e-6;
  EXPECT_NEAR((MinimumJerk(h) - MinimumJerk(0.0)) / h, 0.0, 1e-5);
  EXPECT_NEAR((MinimumJerk(0.5 + h) - MinimumJerk(0.5 - h)) / (2 * h), 1.875,
              1e-6);
}

// Replaying the expert through the rollout loop succeeds on every task.
TEST(Envs, ExpertReplaySucceeds) {
  const EnvConfig cfg;
  for (TaskKind kind : kAllKinds) {
    int ok = 0;
    for (uint64_t seed = 0; seed < 30; ++seed) {
      const TaskInstance task = MakeTask(kind, seed, cfg);
      ExpertReplayPolicy policy(ExpertDemo(task, seed, cfg), cfg.horizon);
      std::mt19937_64 rng(seed);
      const EpisodeResult r = Rollout(policy, task, cfg, rng);
      ok += r.success;
      EXPECT_EQ(r.trace.rows(), r.steps_used + 1);
      EXPECT_EQ(r.commanded.rows(), r.steps_used);
    }
    EXPECT_EQ(ok, 30) << ToString(kind);
  }
}

TEST(Envs, StayPolicyFails) {
  const EnvConfig cfg;
  const TaskInstance task = MakeTask(TaskKind::kReach, 1, cfg);
  StayPolicy stay(cfg.horizon);
  std::mt19937_64 rng(0);
  const EpisodeResult r = Rollout(stay, task, cfg, rng);
  EXPECT_FALSE(r.success);
  EXPECT_EQ(r.steps_used, cfg.max_steps);
  EXPECT_EQ(r.inference_calls, cfg.max_steps / cfg.replan_every);
}

TEST(Envs, BimodalDemosCoverBothBranches) {
  const EnvConfig cfg;
  int first = 0, second = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    const TaskInstance task = MakeTask(TaskKind::kBimodalVia, seed, cfg);
    const Demonstration d = ExpertDemo(task, seed, cfg);
    const Eigen::MatrixXd pos = ExecutedPositions(d, task.start, cfg.plant_gain);
    double best0 = 1e9, best1 = 1e9;
    for (Eigen::Index i = 0; i < pos.rows(); ++i) {
      best0 = std::min(best0, (pos.row(i).transpose() - task.vias[0]).norm());
      best1 = std::min(best1, (pos.row(i).transpose() - task.vias[1]).norm());
    }
    if (best0 < cfg.via_radius) ++first;
    if (best1 < cfg.via_radius) ++second;
  }
  EXPECT_EQ(first + second, 100);
  EXPECT_GE(first, 30);
  EXPECT_GE(second, 30);
}

TEST(Envs, ExecutedPositionsFollowPlant) {
  const EnvConfig cfg;
  const TaskInstance task = MakeTask(TaskKind::kReach, 4, cfg);
  const Demonstration d = ExpertDemo(task, 4, cfg);
  ASSERT_EQ(d.length(), cfg.max_steps);
  const Eigen::MatrixXd p = ExecutedPositions(d, task.start, cfg.plant_gain);
  ASSERT_EQ(p.rows(), d.length() + 1);
  EXPECT_EQ(p.row(0).transpose(), task.start);
  for (int j = 0; j < d.length(); ++j) {
    const Eigen::RowVector2d expect =
        p.row(j) + cfg.plant_gain * (d.actions.row(j) - p.row(j));
    EXPECT_LT((p.row(j + 1) - expect).norm(), 1e-12);
    // The observation shows the position before the action.
    EXPECT_LT((d.obs.row(j).head<2>() - p.row(j)).norm(), 1e-12);
  }
}

TEST(Envs, SlicingProducesExpectedWindows) {
  const EnvConfig cfg;
  std::vector<Demonstration> demos;
  for (uint64_t s = 0; s < 3; ++s) {
    demos.push_back(ExpertDemo(MakeTask(TaskKind::kReach, s, cfg), s, cfg));
  }
  Demonstration tiny = demos[0];
  tiny.obs = tiny.obs.topRows(10);
  tiny.actions = tiny.actions.topRows(10);
  demos.push_back(tiny);
  SliceStats stats;
  const auto windows = SliceDataset(demos, 12, 3, cfg.dt, &stats);
  EXPECT_EQ(stats.windows, 3 * (96 - 12 - 3 + 2));
  EXPECT_EQ(stats.skipped_demos, 1);
  ASSERT_EQ(static_cast<int>(windows.size()), stats.windows);
  const DatasetWindow& w = windows[5];
  EXPECT_EQ(w.obs_window, demos[0].obs.middleRows(5, 3));
  EXPECT_EQ(w.action_window, demos[0].actions.middleRows(7, 12));
  EXPECT_EQ(w.bc_position, demos[0].obs.row(7).head<2>().transpose());
  const Eigen::Vector2d v =
      (demos[0].obs.row(7).head<2>() - demos[0].obs.row(6).head<2>())
          .transpose() /
      cfg.dt;
  EXPECT_LT((w.bc_velocity - v).norm(), 1e-12);
}

TEST(Envs, StackedWindowsAreNormalized) {
  const EnvConfig cfg;
  std::vector<Demonstration> demos;
  for (uint64_t s = 0; s < 4; ++s) {
    demos.push_back(ExpertDemo(MakeTask(TaskKind::kViaPoint, s, cfg), s, cfg));
  }
  const auto windows = SliceDataset(demos, 12, 3, cfg.dt);
  const Normalizer norm = FitActionNormalizer(windows);
  const diffusion::WindowSet set = StackWindows(windows, norm);
  EXPECT_EQ(set.size(), static_cast<Eigen::Index>(windows.size()));
  EXPECT_LE(set.traj.cwiseAbs().maxCoeff(), 1.0 + 1e-12);
  EXPECT_NEAR(set.traj.cwiseAbs().maxCoeff(), 1.0, 1e-12);
  EXPECT_EQ(set.obs.rows(), 3 * kObsDim);
  EXPECT_EQ(set.obs.col(0), FlattenObs(windows[0].obs_window));
}

TEST(Envs, EvalSeedsAvoidTrainingRange) {
  EXPECT_GE(EvalTaskSeed(0, 0, 1000000), 1000000u);
  EXPECT_NE(EvalTaskSeed(0, 1, 1000000), EvalTaskSeed(1, 0, 1000000));
}

TEST(Envs, InvalidInputs) {
  EXPECT_THROW(ParseTaskKind("push"), ConfigError);
  EnvConfig cfg;
  cfg.horizon = 0;
  EXPECT_THROW(cfg.Validate(), ConfigError);
  EXPECT_EQ(ParseTaskKind(ToString(TaskKind::kBimodalVia)),
            TaskKind::kBimodalVia);
}

}  // namespace
}  // namespace frmd::envs
