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

// Rollout adapters for trained models. Each Plan call normalizes the
// measured state, samples one trajectory and maps it back to world
// coordinates.

#ifndef FRMD_POLICIES_H_
#define FRMD_POLICIES_H_

#include <string>

#include "frmd/consistency_distill.h"
#include "frmd/diffusion_teacher.h"
#include "frmd/envs.h"

namespace frmd {

// Multi-step PF-ODE sampling (teacher or raw-head baseline).
class DiffusionPolicy : public envs::Policy {
 public:
  DiffusionPolicy(diffusion::TeacherModel model, int steps,
                  diffusion::Solver solver, std::string name);
  Eigen::MatrixXd Plan(const envs::PlanRequest& request,
                       std::mt19937_64& rng) override;
  std::string name() const override { return name_; }
  const diffusion::TeacherModel& model() const { return model_; }

 private:
  diffusion::TeacherModel model_;
  int steps_;
  diffusion::Solver solver_;
  std::string name_;
};

// One-step consistency sampling.
class StudentPolicy : public envs::Policy {
 public:
  StudentPolicy(consistency::StudentModel model, std::string name);
  Eigen::MatrixXd Plan(const envs::PlanRequest& request,
                       std::mt19937_64& rng) override;
  std::string name() const override { return name_; }
  const consistency::StudentModel& model() const { return model_; }

 private:
  consistency::StudentModel model_;
  std::string name_;
};

// Network inputs for one request; throws LayoutError when the observation
// window does not match the pipeline.
struct PlanInputs {
  Eigen::MatrixXd obs;  // obs_size x 1
  diffusion::BoundaryBatch bc;
};
PlanInputs MakePlanInputs(const diffusion::DenoisePipeline& pipeline,
                          const envs::PlanRequest& request);

// Normalized flattened trajectory column -> n x D world targets.
Eigen::MatrixXd ToWorldPlan(const diffusion::DenoisePipeline& pipeline,
                            const Eigen::VectorXd& normalized);

}  // namespace frmd

#endif  // FRMD_POLICIES_H_
