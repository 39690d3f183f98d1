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

#include "frmd/eval_metrics.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>
#include <tuple>

#include <json.hpp>

#include "frmd/errors.h"

namespace frmd::eval {

CurvatureResult Curvature(const Eigen::MatrixXd& trace, double min_segment) {
  if (trace.rows() < 3) {
    throw ConfigError("curvature needs at least 3 points, got " +
                      std::to_string(trace.rows()));
  }
  if (trace.cols() < 2) throw ConfigError("curvature needs points in >= 2-D");
  CurvatureResult out;
  out.k.resize(trace.rows() - 2);
  for (Eigen::Index i = 1; i + 1 < trace.rows(); ++i) {
    const Eigen::VectorXd u = (trace.row(i) - trace.row(i - 1)).transpose();
    const Eigen::VectorXd v = (trace.row(i + 1) - trace.row(i)).transpose();
    const Eigen::VectorXd w = (trace.row(i + 1) - trace.row(i - 1)).transpose();
    const double a = u.norm(), b = v.norm(), c = w.norm();
    if (a <= min_segment || b <= min_segment || c <= min_segment) {
      out.k(i - 1) = 0.0;
      out.degenerate.push_back(static_cast<int>(i));
      continue;
    }
    double twice_area;
    if (trace.cols() == 2) {
      twice_area = std::abs(u(0) * v(1) - u(1) * v(0));
    } else {
      const double uv = u.dot(v);
      twice_area = std::sqrt(std::max(0.0, a * a * b * b - uv * uv));
    }
    out.k(i - 1) = 2.0 * twice_area / (a * b * c);
  }
  return out;
}

SmoothnessReport NonsmoothCount(const Eigen::MatrixXd& trace, double k_max,
                                double min_segment) {
  const CurvatureResult curv = Curvature(trace, min_segment);
  SmoothnessReport r;
  r.curvatures = curv.k;
  r.k_max = k_max;
  r.degenerate_indices = curv.degenerate;
  for (Eigen::Index i = 0; i < curv.k.size(); ++i) {
    if (curv.k(i) > k_max) r.nonsmooth_indices.push_back(static_cast<int>(i + 1));
  }
  r.nonsmooth_count = static_cast<int>(r.nonsmooth_indices.size());
  return r;
}

SuccessStats SuccessRate(const std::vector<std::vector<bool>>& by_seed) {
  if (by_seed.empty()) throw ConfigError("success rate needs at least one seed");
  SuccessStats s;
  for (const auto& group : by_seed) {
    if (group.empty()) throw ConfigError("success rate over an empty seed group");
    const double hits =
        static_cast<double>(std::count(group.begin(), group.end(), true));
    s.per_seed.push_back(hits / static_cast<double>(group.size()));
  }
  const double n = static_cast<double>(s.per_seed.size());
  s.mean = std::accumulate(s.per_seed.begin(), s.per_seed.end(), 0.0) / n;
  double var = 0.0;
  for (double r : s.per_seed) var += (r - s.mean) * (r - s.mean);
  s.std = std::sqrt(var / n);
  return s;
}

LatencyStats SummarizeLatency(const std::vector<double>& samples_ms) {
  if (samples_ms.empty()) throw ConfigError("no latency samples");
  LatencyStats s;
  s.samples_ms = samples_ms;
  const double n = static_cast<double>(samples_ms.size());
  s.mean_ms = std::accumulate(samples_ms.begin(), samples_ms.end(), 0.0) / n;
  double var = 0.0;
  for (double x : samples_ms) var += (x - s.mean_ms) * (x - s.mean_ms);
  s.std_ms = std::sqrt(var / n);
  s.min_ms = *std::min_element(samples_ms.begin(), samples_ms.end());
  s.max_ms = *std::max_element(samples_ms.begin(), samples_ms.end());
  return s;
}

LatencyStats BenchInference(const std::function<void()>& call, int reps,
                            int warmup) {
  if (reps < 10) throw ConfigError("bench needs at least 10 repetitions");
  if (warmup < 0) throw ConfigError("warm-up count must be non-negative");
  for (int i = 0; i < warmup; ++i) call();
  std::vector<double> samples;
  samples.reserve(reps);
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    call();
    const auto t1 = std::chrono::steady_clock::now();
    samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return SummarizeLatency(samples);
}

double Median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of an empty set");
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

EvalReport AssembleReport(const std::vector<PolicyRun>& runs, double k_max,
                          double min_segment, const std::string& config_hash) {
  if (runs.empty()) throw ValidationError("report needs at least one run");
  EvalReport report;
  report.k_max = k_max;
  report.min_segment = min_segment;
  report.config_hash = config_hash;

  std::map<std::string, std::set<std::string>> tasks_of_policy;
  std::map<std::pair<std::string, std::string>, std::vector<const PolicyRun*>>
      groups;
  std::set<uint64_t> seeds;
  for (const PolicyRun& run : runs) {
    if (run.episodes.empty()) {
      throw ValidationError("run " + run.policy + "/" + run.task +
                            " has no episodes");
    }
    if (!run.trace_files.empty() && run.trace_files.size() != run.episodes.size()) {
      throw ValidationError("run " + run.policy + "/" + run.task +
                            " has mismatched trace file list");
    }
    tasks_of_policy[run.policy].insert(run.task);
    groups[{run.task, run.policy}].push_back(&run);
    seeds.insert(run.seed);
    if (!run.checkpoint_id.empty()) {
      report.checkpoints[run.policy] = run.checkpoint_id;
    }
  }
  const auto& reference = tasks_of_policy.begin()->second;
  for (const auto& [policy, tasks] : tasks_of_policy) {
    if (tasks != reference) {
      throw ValidationError("policy '" + policy +
                            "' was evaluated on a different task set");
    }
  }
  report.seeds.assign(seeds.begin(), seeds.end());

  for (auto& [key, group] : groups) {
    std::sort(group.begin(), group.end(),
              [](const PolicyRun* a, const PolicyRun* b) { return a->seed < b->seed; });
    std::set<uint64_t> group_seeds;
    for (const PolicyRun* r : group) group_seeds.insert(r->seed);
    if (group_seeds != seeds || group_seeds.size() != group.size()) {
      throw ValidationError("task '" + key.first + "' policy '" + key.second +
                            "' does not cover every seed exactly once");
    }
    PolicyTaskReport entry;
    std::vector<std::vector<bool>> outcomes;
    std::vector<double> latencies;
    std::vector<double> counts;
    for (const PolicyRun* run : group) {
      std::vector<bool> hits;
      for (size_t e = 0; e < run->episodes.size(); ++e) {
        const envs::EpisodeResult& ep = run->episodes[e];
        hits.push_back(ep.success);
        latencies.insert(latencies.end(), ep.per_call_latency_ms.begin(),
                         ep.per_call_latency_ms.end());
        EpisodeSummary s;
        s.seed = run->seed;
        s.episode = static_cast<int>(e);
        s.success = ep.success;
        s.steps_used = ep.steps_used;
        s.inference_calls = ep.inference_calls;
        if (ep.trace.rows() >= 3) {
          const SmoothnessReport sm = NonsmoothCount(ep.trace, k_max, min_segment);
          s.nonsmooth_count = sm.nonsmooth_count;
          s.nonsmooth_indices = sm.nonsmooth_indices;
        }
        if (!run->trace_files.empty()) s.trace_file = run->trace_files[e];
        counts.push_back(s.nonsmooth_count);
        entry.episodes.push_back(std::move(s));
      }
      outcomes.push_back(std::move(hits));
    }
    entry.success = SuccessRate(outcomes);
    if (!latencies.empty()) entry.latency = SummarizeLatency(latencies);
    entry.smoothness.median = Median(counts);
    entry.smoothness.mean =
        std::accumulate(counts.begin(), counts.end(), 0.0) / counts.size();
    entry.smoothness.max =
        static_cast<int>(*std::max_element(counts.begin(), counts.end()));
    report.tasks[key.first][key.second] = std::move(entry);
  }
  return report;
}

std::string ReportToJson(const EvalReport& report) {
  using nlohmann::json;
  json doc;
  doc["metadata"] = {{"seeds", report.seeds},
                     {"checkpoints", report.checkpoints},
                     {"config_hash", report.config_hash},
                     {"k_max", report.k_max},
                     {"min_segment", report.min_segment}};
  json tasks = json::object();
  for (const auto& [task, policies] : report.tasks) {
    json by_policy = json::object();
    for (const auto& [policy, e] : policies) {
      json entry;
      entry["success_rate"] = {{"mean", e.success.mean},
                               {"std", e.success.std},
                               {"per_seed", e.success.per_seed}};
      if (e.latency) {
        entry["latency_ms"] = {{"mean", e.latency->mean_ms},
                               {"std", e.latency->std_ms},
                               {"min", e.latency->min_ms},
                               {"max", e.latency->max_ms},
                               {"calls", e.latency->samples_ms.size()}};
      } else {
        entry["latency_ms"] = nullptr;
      }
      entry["smoothness"] = {{"median_nonsmooth", e.smoothness.median},
                             {"mean_nonsmooth", e.smoothness.mean},
                             {"max_nonsmooth", e.smoothness.max}};
      json episodes = json::array();
      for (const EpisodeSummary& s : e.episodes) {
        episodes.push_back({{"seed", s.seed},
                            {"episode", s.episode},
                            {"success", s.success},
                            {"steps_used", s.steps_used},
                            {"inference_calls", s.inference_calls},
                            {"nonsmooth_count", s.nonsmooth_count},
                            {"nonsmooth_indices", s.nonsmooth_indices},
                            {"trace", s.trace_file}});
      }
      entry["episodes"] = std::move(episodes);
      by_policy[policy] = std::move(entry);
    }
    tasks[task] = std::move(by_policy);
  }
  doc["tasks"] = std::move(tasks);
  return doc.dump(2) + "\n";
}

}  // namespace frmd::eval
