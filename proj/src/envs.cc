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

#include <algorithm>
#include <chrono>
#include <cmath>

#include "frmd/errors.h"

namespace frmd::envs {
namespace {

bool Separated(const std::vector<Eigen::Vector2d>& points, double min_sep) {
  for (size_t i = 0; i < points.size(); ++i) {
    for (size_t j = i + 1; j < points.size(); ++j) {
      if ((points[i] - points[j]).norm() < min_sep) return false;
    }
  }
  return true;
}

bool Inside(const Eigen::Vector2d& p, double margin) {
  return p.cwiseAbs().maxCoeff() <= margin;
}

struct Segment {
  Eigen::Vector2d from;
  Eigen::Vector2d to;
  int steps;
};

std::vector<Segment> ExpertSegments(const TaskInstance& task,
                                    const Eigen::Vector2d* via,
                                    const EnvConfig& config) {
  if (via == nullptr) return {{task.start, task.goal, config.reach_steps}};
  const double l1 = (*via - task.start).norm();
  const double l2 = (task.goal - *via).norm();
  const int lo = std::max(1, config.via_steps / 6);
  const int first = std::clamp(
      static_cast<int>(std::lround(config.via_steps * l1 / (l1 + l2))), lo,
      config.via_steps - lo);
  return {{task.start, *via, first},
          {*via, task.goal, config.via_steps - first}};
}

Eigen::Vector2d PathAt(const std::vector<Segment>& segments, int step) {
  int begin = 0;
  for (const Segment& s : segments) {
    if (step <= begin + s.steps) {
      const double u = static_cast<double>(step - begin) / s.steps;
      return s.from + MinimumJerk(u) * (s.to - s.from);
    }
    begin += s.steps;
  }
  return segments.back().to;
}

}  // namespace

std::string ToString(TaskKind kind) {
  switch (kind) {
    case TaskKind::kReach:
      return "reach";
    case TaskKind::kViaPoint:
      return "via_point";
    case TaskKind::kBimodalVia:
      return "bimodal_via";
  }
  return "unknown";
}

TaskKind ParseTaskKind(const std::string& text) {
  if (text == "reach") return TaskKind::kReach;
  if (text == "via_point") return TaskKind::kViaPoint;
  if (text == "bimodal_via") return TaskKind::kBimodalVia;
  throw ConfigError("unknown task kind '" + text +
                    "' (expected reach|via_point|bimodal_via)");
}

void EnvConfig::Validate() const {
  if (!(success_radius > 0)) throw ConfigError("env.success_radius must be positive");
  if (!(via_radius > 0)) throw ConfigError("env.via_radius must be positive");
  if (max_steps <= 0) throw ConfigError("env.max_steps must be positive");
  if (!(min_separation > 0)) throw ConfigError("env.min_separation must be positive");
  if (!(workspace_margin > 0 && workspace_margin <= 1)) {
    throw ConfigError("env.workspace_margin must be in (0, 1]");
  }
  if (!(plant_gain > 0 && plant_gain <= 1)) {
    throw ConfigError("env.plant_gain must be in (0, 1]");
  }
  if (!(dt > 0)) throw ConfigError("env.dt must be positive");
  if (horizon <= 0) throw ConfigError("env.horizon must be positive");
  if (obs_window <= 0) throw ConfigError("env.obs_window must be positive");
  if (replan_every <= 0 || replan_every > horizon) {
    throw ConfigError("env.replan_every must be in [1, horizon]");
  }
  if (reach_steps <= 0 || reach_steps > max_steps) {
    throw ConfigError("env.reach_steps must be in [1, max_steps]");
  }
  if (via_steps < 2 || via_steps > max_steps) {
    throw ConfigError("env.via_steps must be in [2, max_steps]");
  }
  if (!(bimodal_offset > 0)) throw ConfigError("env.bimodal_offset must be positive");
  if (2 * bimodal_offset < min_separation) {
    throw ConfigError("env.bimodal_offset too small for env.min_separation");
  }
}

Eigen::Vector2d TaskInstance::via_hint() const {
  if (vias.empty()) return Eigen::Vector2d::Zero();
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  for (const auto& v : vias) sum += v;
  return sum / static_cast<double>(vias.size());
}

bool TaskInstance::AtVia(const Eigen::Vector2d& p) const {
  for (const auto& v : vias) {
    if ((p - v).norm() <= via_radius) return true;
  }
  return false;
}

TaskInstance MakeTask(TaskKind kind, uint64_t seed, const EnvConfig& config) {
  config.Validate();
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(kind), 0x7a5cu};
  std::mt19937_64 rng(seq);
  const double margin = config.workspace_margin;
  std::uniform_real_distribution<double> coord(-margin, margin);
  const auto point = [&] { return Eigen::Vector2d(coord(rng), coord(rng)); };

  TaskInstance task;
  task.kind = kind;
  task.seed = seed;
  task.success_radius = config.success_radius;
  task.via_radius = config.via_radius;
  task.max_steps = config.max_steps;
  for (int attempt = 0; attempt < 100000; ++attempt) {
    task.start = point();
    task.goal = point();
    task.vias.clear();
    if (kind == TaskKind::kViaPoint) {
      task.vias.push_back(point());
    } else if (kind == TaskKind::kBimodalVia) {
      const Eigen::Vector2d mid = 0.5 * (task.start + task.goal);
      const Eigen::Vector2d dir = task.goal - task.start;
      if (dir.norm() < 1e-9) continue;
      const Eigen::Vector2d perp =
          Eigen::Vector2d(-dir.y(), dir.x()).normalized();
      task.vias.push_back(mid + config.bimodal_offset * perp);
      task.vias.push_back(mid - config.bimodal_offset * perp);
    }
    std::vector<Eigen::Vector2d> all = {task.start, task.goal};
    bool inside = true;
    for (const auto& v : task.vias) {
      all.push_back(v);
      inside = inside && Inside(v, margin);
    }
    if (inside && Separated(all, config.min_separation)) return task;
  }
  throw ConfigError("could not place task points with env.min_separation");
}

Eigen::VectorXd Observation(const TaskInstance& task,
                            const Eigen::Vector2d& position, bool visited) {
  Eigen::VectorXd o(kObsDim);
  o << position, task.goal, task.via_hint(), visited ? 1.0 : 0.0;
  return o;
}

double MinimumJerk(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

Demonstration ExpertDemo(const TaskInstance& task, uint64_t seed,
                         const EnvConfig& config) {
  config.Validate();
  const Eigen::Vector2d* via = nullptr;
  if (task.vias.size() == 1) {
    via = &task.vias[0];
  } else if (task.vias.size() == 2) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5);
    via = &task.vias[coin(rng) ? 1 : 0];
  }
  const std::vector<Segment> segments = ExpertSegments(task, via, config);

  const int length = config.max_steps;
  Demonstration demo;
  demo.kind = task.kind;
  demo.seed = seed;
  demo.obs.resize(length, kObsDim);
  demo.actions.resize(length, kActionDim);
  Eigen::Vector2d p = task.start;
  bool visited = task.AtVia(p);
  for (int j = 0; j < length; ++j) {
    demo.obs.row(j) = Observation(task, p, visited).transpose();
    const Eigen::Vector2d a = PathAt(segments, j + 1);
    demo.actions.row(j) = a.transpose();
    p += config.plant_gain * (a - p);
    visited = visited || task.AtVia(p);
  }
  return demo;
}

Eigen::MatrixXd ExecutedPositions(const Demonstration& demo,
                                  const Eigen::Vector2d& start,
                                  double plant_gain) {
  Eigen::MatrixXd out(demo.length() + 1, kActionDim);
  Eigen::Vector2d p = start;
  out.row(0) = p.transpose();
  for (int j = 0; j < demo.length(); ++j) {
    p += plant_gain * (demo.actions.row(j).transpose() - p);
    out.row(j + 1) = p.transpose();
  }
  return out;
}

std::vector<DatasetWindow> SliceDataset(const std::vector<Demonstration>& demos,
                                        int n, int m, double dt,
                                        SliceStats* stats) {
  if (n <= 0 || m <= 0) throw ConfigError("window sizes must be positive");
  if (!(dt > 0)) throw ConfigError("control period must be positive");
  std::vector<DatasetWindow> out;
  SliceStats local;
  for (const Demonstration& demo : demos) {
    const int length = demo.length();
    if (demo.obs.rows() != length || demo.obs.cols() != kObsDim ||
        demo.actions.cols() != kActionDim) {
      throw LayoutError("demonstration arrays have inconsistent shapes");
    }
    if (length < n + m) {
      ++local.skipped_demos;
      continue;
    }
    for (int i = 0; i + n + m <= length + 1; ++i) {
      const int now = i + m - 1;
      DatasetWindow w;
      w.obs_window = demo.obs.middleRows(i, m);
      w.action_window = demo.actions.middleRows(now, n);
      w.bc_position = demo.obs.row(now).head<2>().transpose();
      if (now > 0) {
        w.bc_velocity =
            (w.bc_position - demo.obs.row(now - 1).head<2>().transpose()) / dt;
      } else {
        w.bc_velocity.setZero();
      }
      out.push_back(std::move(w));
      ++local.windows;
    }
  }
  if (stats != nullptr) *stats = local;
  return out;
}

Normalizer FitActionNormalizer(const std::vector<DatasetWindow>& windows) {
  if (windows.empty()) throw ConfigError("no windows to fit a normalizer");
  const Eigen::Index n = windows.front().action_window.rows();
  Eigen::MatrixXd all(n * static_cast<Eigen::Index>(windows.size()), kActionDim);
  for (size_t i = 0; i < windows.size(); ++i) {
    all.middleRows(static_cast<Eigen::Index>(i) * n, n) =
        windows[i].action_window;
  }
  return Normalizer::Fit(all);
}

Eigen::VectorXd FlattenObs(const Eigen::MatrixXd& obs_window) {
  Eigen::VectorXd flat(obs_window.size());
  for (Eigen::Index r = 0; r < obs_window.rows(); ++r) {
    flat.segment(r * obs_window.cols(), obs_window.cols()) =
        obs_window.row(r).transpose();
  }
  return flat;
}

diffusion::WindowSet StackWindows(const std::vector<DatasetWindow>& windows,
                                  const Normalizer& normalizer) {
  diffusion::WindowSet set;
  if (windows.empty()) return set;
  const Eigen::Index count = static_cast<Eigen::Index>(windows.size());
  const Eigen::Index obs_size = windows.front().obs_window.size();
  const Eigen::Index traj_size = windows.front().action_window.size();
  set.obs.resize(obs_size, count);
  set.traj.resize(traj_size, count);
  set.bc.y0.resize(kActionDim, count);
  set.bc.dy0.resize(kActionDim, count);
  for (Eigen::Index c = 0; c < count; ++c) {
    const DatasetWindow& w = windows[c];
    if (w.obs_window.size() != obs_size || w.action_window.size() != traj_size) {
      throw LayoutError("windows have different sizes");
    }
    set.obs.col(c) = FlattenObs(w.obs_window);
    set.traj.col(c) =
        mp::FlattenTimeMajor(normalizer.PositionRows(w.action_window));
    set.bc.y0.col(c) = normalizer.Position(w.bc_position);
    set.bc.dy0.col(c) = normalizer.Velocity(w.bc_velocity);
  }
  return set;
}

EpisodeResult Rollout(Policy& policy, const TaskInstance& task,
                      const EnvConfig& config, std::mt19937_64& rng) {
  config.Validate();
  const int m = config.obs_window;
  Eigen::Vector2d p = task.start;
  Eigen::Vector2d v = Eigen::Vector2d::Zero();
  bool visited = task.AtVia(p);
  Eigen::MatrixXd window(m, kObsDim);
  window.rowwise() = Observation(task, p, visited).transpose();

  std::vector<Eigen::Vector2d> trace = {p};
  std::vector<Eigen::Vector2d> commanded;
  EpisodeResult result;
  Eigen::MatrixXd plan;
  int plan_start = 0;
  for (int step = 0; step < task.max_steps; ++step) {
    if (step % config.replan_every == 0) {
      PlanRequest request{window, p, v, step};
      const auto t0 = std::chrono::steady_clock::now();
      plan = policy.Plan(request, rng);
      const auto t1 = std::chrono::steady_clock::now();
      result.per_call_latency_ms.push_back(
          std::chrono::duration<double, std::milli>(t1 - t0).count());
      ++result.inference_calls;
      if (plan.rows() != config.horizon || plan.cols() != kActionDim) {
        throw LayoutError("policy '" + policy.name() + "' returned a " +
                          std::to_string(plan.rows()) + "x" +
                          std::to_string(plan.cols()) + " plan, expected " +
                          std::to_string(config.horizon) + "x2");
      }
      plan_start = step;
    }
    const Eigen::Vector2d a = plan.row(step - plan_start).transpose();
    const Eigen::Vector2d next = p + config.plant_gain * (a - p);
    v = (next - p) / config.dt;
    p = next;
    visited = visited || task.AtVia(p);
    if (m > 1) window.topRows(m - 1) = window.bottomRows(m - 1).eval();
    window.row(m - 1) = Observation(task, p, visited).transpose();
    trace.push_back(p);
    commanded.push_back(a);
    result.steps_used = step + 1;
    if ((p - task.goal).norm() <= task.success_radius &&
        (task.vias.empty() || visited)) {
      result.success = true;
      break;
    }
  }
  result.via_visited = visited;
  result.final_distance = (p - task.goal).norm();
  result.trace.resize(static_cast<Eigen::Index>(trace.size()), 2);
  for (size_t i = 0; i < trace.size(); ++i) {
    result.trace.row(static_cast<Eigen::Index>(i)) = trace[i].transpose();
  }
  result.commanded.resize(static_cast<Eigen::Index>(commanded.size()), 2);
  for (size_t i = 0; i < commanded.size(); ++i) {
    result.commanded.row(static_cast<Eigen::Index>(i)) = commanded[i].transpose();
  }
  return result;
}

ExpertReplayPolicy::ExpertReplayPolicy(Demonstration demo, int horizon)
    : demo_(std::move(demo)), horizon_(horizon) {
  if (demo_.length() == 0) throw ConfigError("empty demonstration");
}

Eigen::MatrixXd ExpertReplayPolicy::Plan(const PlanRequest& request,
                                         std::mt19937_64&) {
  Eigen::MatrixXd plan(horizon_, kActionDim);
  for (int k = 0; k < horizon_; ++k) {
    plan.row(k) = demo_.actions.row(std::min(request.step + k, demo_.length() - 1));
  }
  return plan;
}

Eigen::MatrixXd StayPolicy::Plan(const PlanRequest& request, std::mt19937_64&) {
  Eigen::MatrixXd plan(horizon_, kActionDim);
  plan.rowwise() = request.position.transpose();
  return plan;
}

uint64_t EvalTaskSeed(uint64_t seed, int episode, uint64_t offset) {
  return offset + seed * 1000 + static_cast<uint64_t>(episode);
}

}  // namespace frmd::envs
