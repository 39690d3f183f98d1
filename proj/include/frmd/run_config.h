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

// Flat key=value run configuration.
//
//   # comment
//   mp.n_basis = 8
//   teacher.hidden = 256,256,256
//
// Every tunable of every module has a key; unknown keys and repeated keys
// are rejected. Validate() checks each module's invariants so a command
// fails before doing any work.

#ifndef FRMD_RUN_CONFIG_H_
#define FRMD_RUN_CONFIG_H_

#include <cstdint>
#include <string>
#include <vector>

#include "frmd/consistency_distill.h"
#include "frmd/diffusion_teacher.h"
#include "frmd/envs.h"
#include "frmd/mp_core.h"

namespace frmd {

struct ScheduleConfig {
  int n = 40;
  double epsilon = 0.002;
  double t_max = 10.0;
  double rho = 7.0;
};

struct TeacherSection {
  diffusion::TeacherTrainConfig train;
  nn::HeadMode head = nn::HeadMode::kMovementPrimitive;
  // Also train a raw-head baseline with identical settings.
  bool train_raw = true;
  int sample_steps = 10;
  diffusion::Solver solver = diffusion::Solver::kEuler;
};

struct EvalSection {
  std::vector<uint64_t> seeds = {0, 1, 2};
  int episodes = 10;  // per seed
  double k_max = 1.0;
  double min_segment = 1e-3;
  int bench_reps = 100;
  // Added to every evaluation task seed; keeps them apart from demo seeds.
  uint64_t task_offset = 1000000;
  // Subset of teacher, student, raw, expert.
  std::vector<std::string> policies = {"teacher", "student", "raw"};
  bool write_traces = true;
};

struct PlotSection {
  std::string trace;
  std::string report;
  std::string output;  // defaults to the trace path with .svg
};

struct RunConfig {
  mp::MPConfig mp;
  ScheduleConfig schedule;
  TeacherSection teacher;
  consistency::DistillConfig distill;
  envs::EnvConfig env;
  envs::TaskKind task = envs::TaskKind::kReach;
  int demos = 100;
  uint64_t demo_seed_offset = 0;
  EvalSection eval;
  PlotSection plot;
  uint64_t seed = 0;
  std::string out = "frmd_out";

  // Throws ConfigError naming the offending key.
  void Validate() const;
};

// All keys in print order.
std::vector<std::string> ConfigKeys();

// Sets one key from its text value; ConfigError on unknown key or bad
// value.
void SetConfigValue(RunConfig& config, const std::string& key,
                    const std::string& value);
std::string GetConfigValue(const RunConfig& config, const std::string& key);

// Applies the lines of a config file over `base`.
RunConfig ParseRunConfig(const std::string& text, RunConfig base = {});

// Reads a file (IoError when unreadable) and parses it.
RunConfig LoadRunConfig(const std::string& path);

// "key = value" lines for every key; parses back to an equal config.
std::string ResolvedConfigText(const RunConfig& config);

// CRC-32 of the resolved text as 8 hex digits.
std::string ConfigHash(const RunConfig& config);

// Derived objects.
diffusion::NoiseSchedule MakeSchedule(const RunConfig& config);
int ObsSize(const RunConfig& config);

}  // namespace frmd

#endif  // FRMD_RUN_CONFIG_H_
