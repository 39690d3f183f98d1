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

// Planar point-agent tasks on the square [-1, 1]^2.
//
// reach:        move from start to goal.
// via_point:    pass within via_radius of one via point, then reach goal.
// bimodal_via:  two via points mirrored about the start-goal line; either
//               one counts. Observations only show their midpoint.
//
// The agent is a first-order position plant: every control step moves the
// executed position a fraction `plant_gain` toward the commanded target.

#ifndef FRMD_ENVS_H_
#define FRMD_ENVS_H_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "frmd/diffusion_teacher.h"
#include "frmd/normalizer.h"

namespace frmd::envs {

enum class TaskKind { kReach = 0, kViaPoint = 1, kBimodalVia = 2 };

std::string ToString(TaskKind kind);
TaskKind ParseTaskKind(const std::string& text);

inline constexpr int kObsDim = 7;
inline constexpr int kActionDim = 2;

struct EnvConfig {
  double success_radius = 0.05;
  double via_radius = 0.08;
  int max_steps = 96;
  double min_separation = 0.5;
  // Sampled points stay inside [-workspace_margin, workspace_margin]^2.
  double workspace_margin = 0.9;
  double plant_gain = 0.8;
  // Control period; equals the plan spacing tau_s / horizon.
  double dt = 1.0 / 12.0;
  int horizon = 12;
  int obs_window = 3;
  int replan_every = 8;
  // Expert timing in control steps.
  int reach_steps = 60;
  int via_steps = 72;
  // Distance of the bimodal via points from the start-goal midpoint.
  double bimodal_offset = 0.35;

  void Validate() const;
};

struct TaskInstance {
  TaskKind kind = TaskKind::kReach;
  uint64_t seed = 0;
  Eigen::Vector2d start = Eigen::Vector2d::Zero();
  Eigen::Vector2d goal = Eigen::Vector2d::Zero();
  std::vector<Eigen::Vector2d> vias;  // empty, one, or a mirrored pair
  double success_radius = 0.05;
  double via_radius = 0.08;
  int max_steps = 96;

  // Point shown in the via slot of the observation (zeros for reach).
  Eigen::Vector2d via_hint() const;
  // True when p lies within via_radius of any via point.
  bool AtVia(const Eigen::Vector2d& p) const;
};

// Deterministic in (kind, seed). Rejection-samples placements until every
// pair of points is at least min_separation apart.
TaskInstance MakeTask(TaskKind kind, uint64_t seed,
                      const EnvConfig& config = {});

// [position, goal, via hint, visited flag].
Eigen::VectorXd Observation(const TaskInstance& task,
                            const Eigen::Vector2d& position, bool visited);

struct Demonstration {
  TaskKind kind = TaskKind::kReach;
  uint64_t seed = 0;
  Eigen::MatrixXd obs;      // length x kObsDim
  Eigen::MatrixXd actions;  // length x kActionDim, commanded targets

  int length() const { return static_cast<int>(actions.rows()); }
};

// Minimum-jerk path through start, (via), goal with zero velocity at every
// knot. actions[j] is the path at step j + 1, executed through the plant;
// obs[j] is seen before actions[j] is applied. For bimodal_via the seed
// picks a branch. Length is config.max_steps.
Demonstration ExpertDemo(const TaskInstance& task, uint64_t seed,
                         const EnvConfig& config = {});

// Executed positions of a demonstration (length + 1 rows, starting at the
// start point), reproduced from its actions.
Eigen::MatrixXd ExecutedPositions(const Demonstration& demo,
                                  const Eigen::Vector2d& start,
                                  double plant_gain);

// s(u) = 10u^3 - 15u^4 + 6u^5 on [0, 1], clamped outside.
double MinimumJerk(double u);

struct DatasetWindow {
  Eigen::MatrixXd obs_window;     // m x kObsDim
  Eigen::MatrixXd action_window;  // n x kActionDim, world coordinates
  Eigen::Vector2d bc_position;    // world
  Eigen::Vector2d bc_velocity;    // world, backward difference
};

struct SliceStats {
  int windows = 0;
  int skipped_demos = 0;
};

// Stride-1 windows: window i sees obs rows i .. i+m-1 and predicts actions
// i+m-1 .. i+m+n-2, starting from the agent state of obs row i+m-1. Demos
// shorter than n + m are skipped and counted.
std::vector<DatasetWindow> SliceDataset(const std::vector<Demonstration>& demos,
                                        int n, int m, double dt,
                                        SliceStats* stats = nullptr);

// Fits the action normalizer to every action of every window.
Normalizer FitActionNormalizer(const std::vector<DatasetWindow>& windows);

// Columns of normalized training data.
diffusion::WindowSet StackWindows(const std::vector<DatasetWindow>& windows,
                                  const Normalizer& normalizer);

// Flattened observation window (row-major) as the network sees it.
Eigen::VectorXd FlattenObs(const Eigen::MatrixXd& obs_window);

// One plan request during a rollout.
struct PlanRequest {
  Eigen::MatrixXd obs_window;  // m x kObsDim, oldest first
  Eigen::Vector2d position;
  Eigen::Vector2d velocity;
  int step = 0;
};

class Policy {
 public:
  virtual ~Policy() = default;
  // n x kActionDim world-coordinate targets for the next n steps.
  virtual Eigen::MatrixXd Plan(const PlanRequest& request,
                               std::mt19937_64& rng) = 0;
  virtual std::string name() const = 0;
};

struct EpisodeResult {
  Eigen::MatrixXd trace;      // (steps_used + 1) x 2 executed positions
  Eigen::MatrixXd commanded;  // steps_used x 2
  bool success = false;
  bool via_visited = false;
  int steps_used = 0;
  int inference_calls = 0;
  std::vector<double> per_call_latency_ms;
  double final_distance = 0.0;
};

// Receding-horizon execution: replan every replan_every steps from the
// measured position and backward-difference velocity, apply plan rows as
// position targets, stop on success or after max_steps. Throws LayoutError
// when a plan has the wrong shape.
EpisodeResult Rollout(Policy& policy, const TaskInstance& task,
                      const EnvConfig& config, std::mt19937_64& rng);

// Replays a fixed demonstration's actions by step index.
class ExpertReplayPolicy : public Policy {
 public:
  ExpertReplayPolicy(Demonstration demo, int horizon);
  Eigen::MatrixXd Plan(const PlanRequest& request,
                       std::mt19937_64& rng) override;
  std::string name() const override { return "expert"; }

 private:
  Demonstration demo_;
  int horizon_;
};

// Commands the current position forever.
class StayPolicy : public Policy {
 public:
  explicit StayPolicy(int horizon) : horizon_(horizon) {}
  Eigen::MatrixXd Plan(const PlanRequest& request,
                       std::mt19937_64& rng) override;
  std::string name() const override { return "stay"; }

 private:
  int horizon_;
};

// Task seeds used for evaluation episodes, disjoint from training seeds.
uint64_t EvalTaskSeed(uint64_t seed, int episode, uint64_t offset);

}  // namespace frmd::envs

#endif  // FRMD_ENVS_H_
