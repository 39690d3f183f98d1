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

// Success rate, inference latency and trace smoothness.
//
// Smoothness uses the Menger curvature of consecutive point triples,
//
//   k_i = 4 area(p_{i-1}, p_i, p_{i+1}) / (|a| |b| |c|),
//
// the inverse radius of the circle through the three points. A point is
// non-smooth when k_i > k_max.

#ifndef FRMD_EVAL_METRICS_H_
#define FRMD_EVAL_METRICS_H_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "frmd/envs.h"

namespace frmd::eval {

struct CurvatureResult {
  // One value per interior point; entry i belongs to trace row i + 1.
  Eigen::VectorXd k;
  // Trace rows whose triple had a side shorter than min_segment.
  std::vector<int> degenerate;
};

// Trace rows are points (any dimension >= 2). Triples with a side at or
// below min_segment count as stationary and get k = 0. Throws ConfigError
// for fewer than three points.
CurvatureResult Curvature(const Eigen::MatrixXd& trace,
                          double min_segment = 0.0);

struct SmoothnessReport {
  Eigen::VectorXd curvatures;
  int nonsmooth_count = 0;
  double k_max = 1.0;
  std::vector<int> nonsmooth_indices;  // trace rows
  std::vector<int> degenerate_indices;
};

SmoothnessReport NonsmoothCount(const Eigen::MatrixXd& trace,
                                double k_max = 1.0, double min_segment = 0.0);

struct SuccessStats {
  double mean = 0.0;
  double std = 0.0;  // population std across seeds
  std::vector<double> per_seed;
};

// Outer index: seed. Throws ConfigError on an empty input or empty group.
SuccessStats SuccessRate(const std::vector<std::vector<bool>>& by_seed);

struct LatencyStats {
  double mean_ms = 0.0;
  double std_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
  std::vector<double> samples_ms;
};

LatencyStats SummarizeLatency(const std::vector<double>& samples_ms);

// Times `reps` calls of `call` after `warmup` discarded calls. Throws
// ConfigError when reps < 10.
LatencyStats BenchInference(const std::function<void()>& call, int reps,
                            int warmup = 3);

// Rollouts of one policy on one task kind with one seed.
struct PolicyRun {
  std::string policy;
  std::string task;
  uint64_t seed = 0;
  std::string checkpoint_id;
  std::vector<envs::EpisodeResult> episodes;
  // Optional trace file names, parallel to episodes.
  std::vector<std::string> trace_files;
};

struct SmoothnessSummary {
  double median = 0.0;
  double mean = 0.0;
  int max = 0;
};

struct EpisodeSummary {
  uint64_t seed = 0;
  int episode = 0;
  bool success = false;
  int steps_used = 0;
  int inference_calls = 0;
  int nonsmooth_count = 0;
  std::vector<int> nonsmooth_indices;
  std::string trace_file;
};

struct PolicyTaskReport {
  SuccessStats success;
  std::optional<LatencyStats> latency;
  SmoothnessSummary smoothness;
  std::vector<EpisodeSummary> episodes;
};

struct EvalReport {
  std::vector<uint64_t> seeds;
  std::map<std::string, std::string> checkpoints;  // policy -> id
  std::string config_hash;
  double k_max = 1.0;
  double min_segment = 0.0;
  // task -> policy -> metrics
  std::map<std::string, std::map<std::string, PolicyTaskReport>> tasks;
};

double Median(std::vector<double> values);

// Groups runs by (task, policy). Every policy must cover the same task set
// and every (task, policy) the same seeds; ValidationError otherwise.
EvalReport AssembleReport(const std::vector<PolicyRun>& runs, double k_max,
                          double min_segment, const std::string& config_hash);

// Single JSON document; missing latency is written as null.
std::string ReportToJson(const EvalReport& report);

}  // namespace frmd::eval

#endif  // FRMD_EVAL_METRICS_H_
