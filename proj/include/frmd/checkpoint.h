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

// Binary model checkpoints.
//
// Layout (all integers and floats little-endian):
//
//   "FRMD"  u32 version  u8 role
//   layout: u8 head, i32 horizon, i32 obs_size, i32 embed_size,
//           f64 sigma_data, u8 activation, u32 n_hidden, i32 hidden[n_hidden]
//   mp:     i32 dof, i32 n_basis, f64 alpha, f64 tau_s, f64 alpha_x,
//           i32 grid_points, f64 basis_width, i32 quad_substeps
//   schedule: i32 n, f64 epsilon, f64 t_max, f64 rho, f64 levels[n]
//   consistency (student roles only): i32 k, f64 mu, f64 gamma_d, f64 beta,
//           u8 c_out, u8 metric, u8 weighting, i64 steps, u8 deploy_target
//   normalizer: u32 dim, f64 center[dim], f64 half_range[dim]
//   payload: u64 count, f32 params[count] in FlattenParameters order
//   u32 CRC-32 of every preceding byte
//
// Parameters are stored as f32, so load(save(x)) reproduces x bit for bit
// once x has been passed through SnapToFloat.

#ifndef FRMD_CHECKPOINT_H_
#define FRMD_CHECKPOINT_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "frmd/consistency_distill.h"
#include "frmd/diffusion_teacher.h"

namespace frmd {

inline constexpr uint32_t kCheckpointVersion = 1;

enum class CheckpointRole : uint8_t {
  kTeacher = 0,
  kStudentOnline = 1,
  kStudentTarget = 2,
  kRawBaseline = 3,
};

std::string ToString(CheckpointRole role);

struct Checkpoint {
  CheckpointRole role = CheckpointRole::kTeacher;
  diffusion::DenoisePipeline pipeline;
  nn::DenoiserNet net;
  std::optional<consistency::ConsistencyConfig> consistency;
};

// Rounds every parameter to the nearest f32.
void SnapToFloat(nn::DenoiserNet& net);

std::vector<uint8_t> SerializeCheckpoint(const Checkpoint& checkpoint);

// Throws ValidationError on a bad magic, version, checksum, truncation or
// inconsistent layout.
Checkpoint DeserializeCheckpoint(const std::vector<uint8_t>& bytes);

// IoError when the file cannot be written or read.
void SaveCheckpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint LoadCheckpoint(const std::string& path);

Checkpoint TeacherCheckpoint(const diffusion::TeacherModel& model);
// The deployed network of the student (target or online per its config).
Checkpoint StudentCheckpoint(const consistency::StudentModel& student);

// ValidationError when the role does not match.
diffusion::TeacherModel ToTeacher(const Checkpoint& checkpoint);
consistency::StudentModel ToStudent(const Checkpoint& checkpoint);

}  // namespace frmd

#endif  // FRMD_CHECKPOINT_H_
