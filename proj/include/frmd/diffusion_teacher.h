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

// Score-based diffusion teacher over action windows.
//
// Noise levels are identified with the noise standard deviation,
// sigma(t) = t, so a noisy window is tau + t * N(0, I) and the
// probability-flow ODE reads
//
//   d tau / dt = (tau - F(tau, o, t)) / t
//
// where F is the denoiser: an MLP whose output is either decoded through
// the ProDMP basis with the window's boundary state (MP head) or used as
// the waypoints directly (raw head). The score follows as (F - tau) / t^2.
//
// Everything here works in normalized action coordinates, batched with one
// sample per column and trajectories flattened time-major.

#ifndef FRMD_DIFFUSION_TEACHER_H_
#define FRMD_DIFFUSION_TEACHER_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "frmd/mp_core.h"
#include "frmd/normalizer.h"
#include "frmd/tensor_core.h"

namespace frmd::diffusion {

using Rng = std::mt19937_64;

struct NoiseSchedule {
  // Strictly decreasing: levels.front() == t_max, levels.back() == epsilon.
  std::vector<double> levels;
  double epsilon = 0.002;
  double t_max = 10.0;
  double rho = 7.0;

  int size() const { return static_cast<int>(levels.size()); }
  bool operator==(const NoiseSchedule&) const = default;
};

// t_i = (t_max^(1/rho) + (i-1)/(N-1) (epsilon^(1/rho) - t_max^(1/rho)))^rho.
NoiseSchedule KarrasLevels(int n, double epsilon, double t_max, double rho);

// traj + t * N(0, I) elementwise; t == 0 returns traj unchanged.
Eigen::MatrixXd AddNoise(const Eigen::MatrixXd& traj, double t, Rng& rng);

// Boundary states of a batch, all at plan-local time t_b = 0.
struct BoundaryBatch {
  Eigen::MatrixXd y0;   // dof x B
  Eigen::MatrixXd dy0;  // dof x B

  Eigen::Index size() const { return y0.cols(); }
  BoundaryBatch Column(Eigen::Index b) const {
    return {y0.col(b), dy0.col(b)};
  }
};

// Action instants of a plan: k tau_s / n for k = 1..n.
Eigen::VectorXd ActionTimes(const mp::MPConfig& config, int horizon);

// Factor between MP-head network outputs for the basis weights and the
// forcing weights they decode with: lambda^2, so that an output of 1 moves
// the path about as far as a unit change of the goal.
inline double HeadWeightGain(const mp::MPConfig& config) {
  return config.stiffness();
}

// Shared machinery between teacher and student: head decoding, schedule,
// normalization. The decode operator already includes HeadWeightGain.
struct DenoisePipeline {
  nn::HeadMode head = nn::HeadMode::kMovementPrimitive;
  int horizon = 12;
  int obs_size = 0;
  mp::MPConfig mp_config;
  std::shared_ptr<const mp::BasisTables> tables;
  mp::DecodeOperator op;
  NoiseSchedule schedule;
  Normalizer normalizer;

  int dof() const { return mp_config.dof; }
  int traj_size() const { return horizon * mp_config.dof; }
};

DenoisePipeline MakePipeline(const mp::MPConfig& mp_config, nn::HeadMode head,
                             int horizon, int obs_size,
                             const NoiseSchedule& schedule,
                             const Normalizer& normalizer);

// Maps network outputs to trajectories. MP head: ProDMP decode with the
// batch's boundary states; raw head: identity.
Eigen::MatrixXd DecodeHead(const DenoisePipeline& pipeline,
                           const Eigen::MatrixXd& net_out,
                           const BoundaryBatch& bc);

// Adjoint of DecodeHead with respect to the network output.
Eigen::MatrixXd DecodeHeadAdjoint(const DenoisePipeline& pipeline,
                                  const Eigen::MatrixXd& traj_grad);

// Every column of t is the same noise level.
Eigen::VectorXd Levels(double t, Eigen::Index batch);

// F_theta(noisy, o, t). Throws LayoutError on shape mismatch.
Eigen::MatrixXd DenoiseF(const DenoisePipeline& pipeline,
                         const nn::DenoiserNet& net,
                         const Eigen::MatrixXd& noisy,
                         const Eigen::MatrixXd& obs, const Eigen::VectorXd& t,
                         const BoundaryBatch& bc);

struct DenoiseForward {
  Eigen::MatrixXd output;
  nn::Tape tape;
};

DenoiseForward DenoiseFRecorded(const DenoisePipeline& pipeline,
                                const nn::DenoiserNet& net,
                                const Eigen::MatrixXd& noisy,
                                const Eigen::MatrixXd& obs,
                                const Eigen::VectorXd& t,
                                const BoundaryBatch& bc);

// Parameter gradients of a loss given d loss / d F.
nn::ParameterBlocks DenoiseBackward(const DenoisePipeline& pipeline,
                                    nn::Tape& tape,
                                    const Eigen::MatrixXd& output_grad);

// (F - noisy) / t^2. Throws RangeError when any t is zero.
Eigen::MatrixXd ScoreEstimate(const DenoisePipeline& pipeline,
                              const nn::DenoiserNet& net,
                              const Eigen::MatrixXd& noisy,
                              const Eigen::MatrixXd& obs,
                              const Eigen::VectorXd& t,
                              const BoundaryBatch& bc);

enum class Solver { kEuler = 0, kHeun = 1 };

std::string ToString(Solver solver);
Solver ParseSolver(const std::string& text);

// Any denoiser x, t -> F(x, t) for ODE stepping.
using DenoiserFn =
    std::function<Eigen::MatrixXd(const Eigen::MatrixXd& x, double t)>;

// One PF-ODE step from t_from down to t_to with slope (x - F(x, t)) / t.
// Heun re-evaluates the slope at t_to and averages. Throws ConfigError
// unless t_from > t_to > 0.
Eigen::MatrixXd OdeStep(const DenoiserFn& denoiser, const Eigen::MatrixXd& x,
                        double t_from, double t_to,
                        Solver solver = Solver::kEuler);

struct TeacherModel {
  DenoisePipeline pipeline;
  nn::DenoiserNet net;
};

DenoiserFn MakeDenoiser(const TeacherModel& model, const Eigen::MatrixXd& obs,
                        const BoundaryBatch& bc);

Eigen::MatrixXd OdeStep(const TeacherModel& model, const Eigen::MatrixXd& x,
                        double t_from, double t_to, const Eigen::MatrixXd& obs,
                        const BoundaryBatch& bc,
                        Solver solver = Solver::kEuler);

// Starts from t_max * N(0, I), walks the `steps`-level schedule between
// t_max and epsilon, and finishes with F at the last level. `steps` == 1 is
// a single denoise from pure noise. Returns normalized trajectories.
Eigen::MatrixXd SampleTeacher(const TeacherModel& model,
                              const Eigen::MatrixXd& obs,
                              const BoundaryBatch& bc, int steps, Rng& rng,
                              Solver solver = Solver::kEuler);

// Stacked training windows, one per column.
struct WindowSet {
  Eigen::MatrixXd obs;   // obs_size x W
  Eigen::MatrixXd traj;  // n dof x W (normalized)
  BoundaryBatch bc;      // normalized

  Eigen::Index size() const { return traj.cols(); }
  WindowSet Select(const std::vector<Eigen::Index>& idx) const;
};

// Per-sample loss weight w(t):
//   inverse_square  1 / t^2
//   uniform         1
//   mixed           1 + sigma^2 / t^2
// Uniform fits the mean best; the 1/t^2 term spends more capacity at low
// noise, which keeps separate modes apart at the cost of noisier gradients.
enum class LossWeighting { kInverseSquare = 0, kUniform = 1, kMixed = 2 };

std::string ToString(LossWeighting weighting);
LossWeighting ParseLossWeighting(const std::string& text);
double LossWeight(LossWeighting weighting, double sigma, double t);

struct LossResult {
  double loss = 0.0;
  nn::ParameterBlocks grads;
};

// Denoising regression mean_b w(t_b) ||F(tau_b + t_b eps, o_b, t_b) - tau_b||^2
// with log-uniform t on [epsilon, t_max]. With w(t) = 1/t^2 minimizing it is
// equivalent (up to a constant) to matching the score (F - x)/t^2 against
// the noising kernel's score (tau - x)/t^2 with weight t^2.
LossResult TeacherLoss(const TeacherModel& model, const WindowSet& batch,
                       Rng& rng,
                       LossWeighting weighting = LossWeighting::kUniform,
                       double weight_sigma = 0.0);

// Same loss at caller-provided noise levels and noise, no gradients.
double TeacherLossAt(const TeacherModel& model, const WindowSet& batch,
                     const Eigen::VectorXd& t, const Eigen::MatrixXd& noise,
                     LossWeighting weighting, double weight_sigma = 0.0);

struct LossRecord {
  int64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct TeacherTrainConfig {
  std::vector<int> hidden = {256, 256, 256};
  int embed_size = 16;
  double sigma_data = 0.5;
  int64_t steps = 10000;
  int batch_size = 128;
  int log_every = 100;
  int validation_size = 256;
  LossWeighting weighting = LossWeighting::kUniform;
  double weight_sigma = 0.1;  // used by kMixed
  nn::AdamWHyper optimizer = {.lr = 1e-3};
  uint64_t seed = 0;
};

struct TeacherTrainResult {
  TeacherModel model;
  std::vector<LossRecord> curve;
  double initial_validation_loss = 0.0;
  double final_validation_loss = 0.0;
};

// Epoch-shuffled minibatches (final batch of an epoch may be short). Throws
// ConfigError on an empty dataset and TrainingError on a non-finite loss.
TeacherTrainResult TrainTeacher(const WindowSet& data,
                                const DenoisePipeline& pipeline,
                                const TeacherTrainConfig& config);

// Cycles through shuffled permutations of [0, n) in fixed-size chunks.
class BatchSampler {
 public:
  BatchSampler(Eigen::Index n, int batch_size, uint64_t seed);
  std::vector<Eigen::Index> Next();

 private:
  Eigen::Index n_;
  int batch_size_;
  Rng rng_;
  std::vector<Eigen::Index> order_;
  Eigen::Index cursor_;
};

}  // namespace frmd::diffusion

#endif  // FRMD_DIFFUSION_TEACHER_H_
