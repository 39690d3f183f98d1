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

// Pipeline stages behind the frmd tool, plus the in-memory pieces they are
// built from.
//
// Files under the output directory:
//   demos.jsonl                     gen-data
//   teacher.ckpt, raw.ckpt          train-teacher (+ *_loss.csv)
//   student.ckpt, student_online.ckpt, distill_loss.csv   distill
//   report.json, traces/*.csv       eval
//   bench.json                      bench

#ifndef FRMD_COMMANDS_H_
#define FRMD_COMMANDS_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "frmd/eval_metrics.h"
#include "frmd/run_config.h"

namespace frmd {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

std::vector<envs::Demonstration> GenerateDemos(const RunConfig& config);

diffusion::DenoisePipeline MakeRunPipeline(const RunConfig& config,
                                           nn::HeadMode head,
                                           const Normalizer& normalizer);

struct TrainingData {
  Normalizer normalizer;
  diffusion::WindowSet set;
  int windows = 0;
  int skipped_demos = 0;
};

// Slices demos into windows; fits the normalizer unless one is given.
TrainingData PrepareTrainingData(const RunConfig& config,
                                 const std::vector<envs::Demonstration>& demos,
                                 const Normalizer* fixed = nullptr);

// Teacher training with the run's settings for the given head, snapped to
// f32 so the in-memory model equals its checkpoint.
diffusion::TeacherTrainResult TrainRunTeacher(const RunConfig& config,
                                              const TrainingData& data,
                                              nn::HeadMode head);

consistency::DistillResult DistillRunStudent(
    const RunConfig& config, const TrainingData& data,
    const diffusion::TeacherModel& teacher);

// Random stream for one evaluation episode; shared by every policy so
// that episodes are matched.
std::mt19937_64 EpisodeRng(uint64_t seed, int episode);

// eval.episodes rollouts per seed in eval.seeds. Writes one trace CSV per
// episode into trace_dir when it is non-empty.
std::vector<eval::PolicyRun> RunPolicy(envs::Policy& policy,
                                       const RunConfig& config,
                                       const std::string& checkpoint_id,
                                       const std::string& trace_dir = "");

// Adler-32 of a file's bytes as 8 hex digits.
std::string FileId(const std::string& path);

// Subcommands; `log` receives progress and the resolved config. Errors
// propagate as exceptions.
void CmdGenData(const RunConfig& config, std::ostream& log);
void CmdTrainTeacher(const RunConfig& config, std::ostream& log);
void CmdDistill(const RunConfig& config, std::ostream& log);
void CmdEval(const RunConfig& config, std::ostream& log);
void CmdBench(const RunConfig& config, std::ostream& log);
void CmdPlot(const RunConfig& config, std::ostream& log);

// Full command line: frmd <subcommand> --config <path> [--seed <u64>]
// [--out <dir>] [--set key=value ...]. Returns the exit code.
int RunCli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace frmd

#endif  // FRMD_COMMANDS_H_
