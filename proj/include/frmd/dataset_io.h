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

// Text formats: demonstration JSON lines, episode trace CSV, loss CSV.
//
// Demonstrations file: one object per line
//   {"task":"reach","seed":3,"obs":[[...],...],"actions":[[...],...]}
// followed by a summary line {"count":N,"obs_dim":7,"action_dim":2}.

#ifndef FRMD_DATASET_IO_H_
#define FRMD_DATASET_IO_H_

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "frmd/diffusion_teacher.h"
#include "frmd/envs.h"

namespace frmd {

std::string DemosToJsonl(const std::vector<envs::Demonstration>& demos);

// ValidationError naming the line on any malformed record or a summary
// that disagrees with the records.
std::vector<envs::Demonstration> DemosFromJsonl(const std::string& text);

void WriteDemos(const std::string& path,
                const std::vector<envs::Demonstration>& demos);
std::vector<envs::Demonstration> ReadDemos(const std::string& path);

// step,x,y,commanded_x,commanded_y. Row 0 is the start position with empty
// command columns.
std::string TraceToCsv(const envs::EpisodeResult& episode);

// Executed positions from a trace CSV; ValidationError with the line
// number on malformed input.
Eigen::MatrixXd TraceFromCsv(const std::string& text);

// step,loss,lr
std::string LossCurveToCsv(const std::vector<diffusion::LossRecord>& curve);

// Whole-file helpers; IoError on failure.
std::string ReadTextFile(const std::string& path);
void WriteTextFile(const std::string& path, const std::string& text);

}  // namespace frmd

#endif  // FRMD_DATASET_IO_H_
