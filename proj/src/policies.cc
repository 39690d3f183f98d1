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

#include "frmd/policies.h"

#include "frmd/errors.h"

namespace frmd {

PlanInputs MakePlanInputs(const diffusion::DenoisePipeline& pipeline,
                          const envs::PlanRequest& request) {
  if (request.obs_window.size() != pipeline.obs_size) {
    throw LayoutError("observation window has " +
                      std::to_string(request.obs_window.size()) +
                      " entries, model expects " +
                      std::to_string(pipeline.obs_size));
  }
  if (pipeline.dof() != envs::kActionDim) {
    throw LayoutError("model has " + std::to_string(pipeline.dof()) +
                      " degrees of freedom, tasks have " +
                      std::to_string(envs::kActionDim));
  }
  PlanInputs in;
  in.obs = envs::FlattenObs(request.obs_window);
  in.bc.y0 = pipeline.normalizer.Position(request.position);
  in.bc.dy0 = pipeline.normalizer.Velocity(request.velocity);
  return in;
}

Eigen::MatrixXd ToWorldPlan(const diffusion::DenoisePipeline& pipeline,
                            const Eigen::VectorXd& normalized) {
  return pipeline.normalizer.WorldPositionRows(
      mp::UnflattenTimeMajor(normalized, pipeline.dof()));
}

DiffusionPolicy::DiffusionPolicy(diffusion::TeacherModel model, int steps,
                                 diffusion::Solver solver, std::string name)
    : model_(std::move(model)),
      steps_(steps),
      solver_(solver),
      name_(std::move(name)) {
  if (steps_ < 1) throw ConfigError("sampling steps must be at least 1");
}

Eigen::MatrixXd DiffusionPolicy::Plan(const envs::PlanRequest& request,
                                      std::mt19937_64& rng) {
  const PlanInputs in = MakePlanInputs(model_.pipeline, request);
  const Eigen::MatrixXd traj =
      diffusion::SampleTeacher(model_, in.obs, in.bc, steps_, rng, solver_);
  return ToWorldPlan(model_.pipeline, traj.col(0));
}

StudentPolicy::StudentPolicy(consistency::StudentModel model, std::string name)
    : model_(std::move(model)), name_(std::move(name)) {}

Eigen::MatrixXd StudentPolicy::Plan(const envs::PlanRequest& request,
                                    std::mt19937_64& rng) {
  const PlanInputs in = MakePlanInputs(model_.pipeline, request);
  const Eigen::MatrixXd traj =
      consistency::SampleStudent(model_, in.obs, in.bc, rng);
  return ToWorldPlan(model_.pipeline, traj.col(0));
}

}  // namespace frmd
