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

#include "frmd/diffusion_teacher.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "frmd/errors.h"

namespace frmd::diffusion {
namespace {

void CheckBatch(const DenoisePipeline& pipeline, const Eigen::MatrixXd& x,
                const Eigen::MatrixXd& obs, const BoundaryBatch& bc) {
  if (x.rows() != pipeline.traj_size()) {
    throw LayoutError("trajectory batch has " + std::to_string(x.rows()) +
                      " rows, expected " +
                      std::to_string(pipeline.traj_size()));
  }
  if (obs.rows() != pipeline.obs_size || obs.cols() != x.cols()) {
    throw LayoutError("observation batch does not match the pipeline");
  }
  if (bc.y0.rows() != pipeline.dof() || bc.dy0.rows() != pipeline.dof() ||
      bc.y0.cols() != x.cols() || bc.dy0.cols() != x.cols()) {
    throw LayoutError("boundary batch does not match the pipeline");
  }
}

Eigen::MatrixXd StandardNormal(Eigen::Index rows, Eigen::Index cols,
                               Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd out(rows, cols);
  // Column by column so that a batch of one reproduces the first column of
  // a larger batch drawn from the same state.
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) out(r, c) = normal(rng);
  }
  return out;
}


}  // namespace

NoiseSchedule KarrasLevels(int n, double epsilon, double t_max, double rho) {
  if (n < 2) throw ConfigError("schedule needs at least 2 levels");
  if (!(epsilon > 0) || !(epsilon < t_max)) {
    throw ConfigError("schedule requires 0 < epsilon < t_max");
  }
  if (!(rho >= 1)) throw ConfigError("schedule rho must be at least 1");
  NoiseSchedule s;
  s.epsilon = epsilon;
  s.t_max = t_max;
  s.rho = rho;
  s.levels.resize(n);
  const double a = std::pow(t_max, 1.0 / rho);
  const double b = std::pow(epsilon, 1.0 / rho);
  for (int i = 0; i < n; ++i) {
    s.levels[i] = std::pow(a + static_cast<double>(i) / (n - 1) * (b - a), rho);
  }
  s.levels.front() = t_max;
  s.levels.back() = epsilon;
  return s;
}

Eigen::MatrixXd AddNoise(const Eigen::MatrixXd& traj, double t, Rng& rng) {
  if (t < 0) throw ConfigError("noise level must be non-negative");
  if (t == 0) return traj;
  return traj + t * StandardNormal(traj.rows(), traj.cols(), rng);
}

Eigen::VectorXd ActionTimes(const mp::MPConfig& config, int horizon) {
  Eigen::VectorXd times(horizon);
  for (int k = 0; k < horizon; ++k) {
    times(k) = config.tau_s * static_cast<double>(k + 1) / horizon;
  }
  return times;
}

DenoisePipeline MakePipeline(const mp::MPConfig& mp_config, nn::HeadMode head,
                             int horizon, int obs_size,
                             const NoiseSchedule& schedule,
                             const Normalizer& normalizer) {
  if (horizon <= 0) throw ConfigError("horizon must be positive");
  if (normalizer.dim() != mp_config.dof) {
    throw ConfigError("normalizer dimension does not match dof");
  }
  DenoisePipeline p;
  p.head = head;
  p.horizon = horizon;
  p.obs_size = obs_size;
  p.mp_config = mp_config;
  p.tables = std::make_shared<const mp::BasisTables>(mp::BuildBasis(mp_config));
  p.op = mp::MakeDecodeOperator(*p.tables, 0.0, ActionTimes(mp_config, horizon));
  // Network outputs for the basis weights are in position units; the
  // stiffness gain turns them into forcing weights.
  const double gain = HeadWeightGain(mp_config);
  p.op.weights.leftCols(mp_config.n_basis) *= gain;
  p.op.d_weights.leftCols(mp_config.n_basis) *= gain;
  p.schedule = schedule;
  p.normalizer = normalizer;
  return p;
}

Eigen::MatrixXd DecodeHead(const DenoisePipeline& pipeline,
                           const Eigen::MatrixXd& net_out,
                           const BoundaryBatch& bc) {
  if (pipeline.head == nn::HeadMode::kRaw) {
    if (net_out.rows() != pipeline.traj_size()) {
      throw LayoutError("raw head output has the wrong size");
    }
    return net_out;
  }
  const int dof = pipeline.dof();
  const int cols = pipeline.mp_config.weights_per_dof();
  if (net_out.rows() != dof * cols) {
    throw LayoutError("MP head output has the wrong size");
  }
  const Eigen::Index batch = net_out.cols();
  const int n = pipeline.horizon;
  Eigen::MatrixXd traj(n * dof, batch);
  Eigen::MatrixXd boundary(2, batch);
  Eigen::MatrixXd pos(n, batch);
  for (int d = 0; d < dof; ++d) {
    boundary.row(0) = bc.y0.row(d);
    boundary.row(1) = bc.dy0.row(d);
    pos.noalias() = pipeline.op.weights * net_out.middleRows(d * cols, cols);
    pos.noalias() += pipeline.op.boundary * boundary;
    for (int j = 0; j < n; ++j) traj.row(j * dof + d) = pos.row(j);
  }
  return traj;
}

Eigen::MatrixXd DecodeHeadAdjoint(const DenoisePipeline& pipeline,
                                  const Eigen::MatrixXd& traj_grad) {
  if (pipeline.head == nn::HeadMode::kRaw) return traj_grad;
  const int dof = pipeline.dof();
  const int cols = pipeline.mp_config.weights_per_dof();
  const int n = pipeline.horizon;
  const Eigen::Index batch = traj_grad.cols();
  Eigen::MatrixXd out(dof * cols, batch);
  Eigen::MatrixXd g(n, batch);
  for (int d = 0; d < dof; ++d) {
    for (int j = 0; j < n; ++j) g.row(j) = traj_grad.row(j * dof + d);
    out.middleRows(d * cols, cols).noalias() =
        pipeline.op.weights.transpose() * g;
  }
  return out;
}

Eigen::VectorXd Levels(double t, Eigen::Index batch) {
  return Eigen::VectorXd::Constant(batch, t);
}

Eigen::MatrixXd DenoiseF(const DenoisePipeline& pipeline,
                         const nn::DenoiserNet& net,
                         const Eigen::MatrixXd& noisy,
                         const Eigen::MatrixXd& obs, const Eigen::VectorXd& t,
                         const BoundaryBatch& bc) {
  CheckBatch(pipeline, noisy, obs, bc);
  return DecodeHead(pipeline, nn::Evaluate(net, noisy, obs, t), bc);
}

DenoiseForward DenoiseFRecorded(const DenoisePipeline& pipeline,
                                const nn::DenoiserNet& net,
                                const Eigen::MatrixXd& noisy,
                                const Eigen::MatrixXd& obs,
                                const Eigen::VectorXd& t,
                                const BoundaryBatch& bc) {
  CheckBatch(pipeline, noisy, obs, bc);
  nn::ForwardResult fwd = nn::Forward(net, noisy, obs, t);
  DenoiseForward out;
  out.output = DecodeHead(pipeline, fwd.output, bc);
  out.tape = std::move(fwd.tape);
  return out;
}

nn::ParameterBlocks DenoiseBackward(const DenoisePipeline& pipeline,
                                    nn::Tape& tape,
                                    const Eigen::MatrixXd& output_grad) {
  return nn::Backward(tape, DecodeHeadAdjoint(pipeline, output_grad)).grads;
}

Eigen::MatrixXd ScoreEstimate(const DenoisePipeline& pipeline,
                              const nn::DenoiserNet& net,
                              const Eigen::MatrixXd& noisy,
                              const Eigen::MatrixXd& obs,
                              const Eigen::VectorXd& t,
                              const BoundaryBatch& bc) {
  for (Eigen::Index b = 0; b < t.size(); ++b) {
    if (t(b) == 0) throw RangeError("score is undefined at t = 0");
  }
  Eigen::MatrixXd score = DenoiseF(pipeline, net, noisy, obs, t, bc) - noisy;
  for (Eigen::Index b = 0; b < score.cols(); ++b) {
    score.col(b) /= t(b) * t(b);
  }
  return score;
}

Eigen::MatrixXd OdeStep(const DenoiserFn& denoiser, const Eigen::MatrixXd& x,
                        double t_from, double t_to, Solver solver) {
  if (!(t_from > t_to) || !(t_to > 0)) {
    throw ConfigError("ODE step requires t_from > t_to > 0");
  }
  const double dt = t_to - t_from;
  const Eigen::MatrixXd slope = (x - denoiser(x, t_from)) / t_from;
  Eigen::MatrixXd next = x + dt * slope;
  if (solver == Solver::kHeun) {
    const Eigen::MatrixXd slope_to = (next - denoiser(next, t_to)) / t_to;
    next = x + (0.5 * dt) * (slope + slope_to);
  }
  return next;
}

DenoiserFn MakeDenoiser(const TeacherModel& model, const Eigen::MatrixXd& obs,
                        const BoundaryBatch& bc) {
  return [&model, &obs, &bc](const Eigen::MatrixXd& x, double t) {
    return DenoiseF(model.pipeline, model.net, x, obs, Levels(t, x.cols()), bc);
  };
}

Eigen::MatrixXd OdeStep(const TeacherModel& model, const Eigen::MatrixXd& x,
                        double t_from, double t_to, const Eigen::MatrixXd& obs,
                        const BoundaryBatch& bc, Solver solver) {
  return OdeStep(MakeDenoiser(model, obs, bc), x, t_from, t_to, solver);
}

Eigen::MatrixXd SampleTeacher(const TeacherModel& model,
                              const Eigen::MatrixXd& obs,
                              const BoundaryBatch& bc, int steps, Rng& rng,
                              Solver solver) {
  if (steps < 1) throw ConfigError("sampling needs at least one step");
  const NoiseSchedule& base = model.pipeline.schedule;
  const std::vector<double> levels =
      steps == 1 ? std::vector<double>{base.t_max}
                 : KarrasLevels(steps, base.epsilon, base.t_max, base.rho)
                       .levels;
  const Eigen::Index batch = obs.cols();
  Eigen::MatrixXd x =
      base.t_max * StandardNormal(model.pipeline.traj_size(), batch, rng);
  const DenoiserFn denoiser = MakeDenoiser(model, obs, bc);
  for (size_t i = 0; i + 1 < levels.size(); ++i) {
    x = OdeStep(denoiser, x, levels[i], levels[i + 1], solver);
  }
  return denoiser(x, levels.back());
}

WindowSet WindowSet::Select(const std::vector<Eigen::Index>& idx) const {
  WindowSet out;
  const Eigen::Index n = static_cast<Eigen::Index>(idx.size());
  out.obs.resize(obs.rows(), n);
  out.traj.resize(traj.rows(), n);
  out.bc.y0.resize(bc.y0.rows(), n);
  out.bc.dy0.resize(bc.dy0.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.obs.col(i) = obs.col(idx[i]);
    out.traj.col(i) = traj.col(idx[i]);
    out.bc.y0.col(i) = bc.y0.col(idx[i]);
    out.bc.dy0.col(i) = bc.dy0.col(idx[i]);
  }
  return out;
}

std::string ToString(Solver solver) {
  return solver == Solver::kEuler ? "euler" : "heun";
}

Solver ParseSolver(const std::string& text) {
  if (text == "euler") return Solver::kEuler;
  if (text == "heun") return Solver::kHeun;
  throw ConfigError("unknown solver '" + text + "' (expected euler|heun)");
}

std::string ToString(LossWeighting weighting) {
  switch (weighting) {
    case LossWeighting::kInverseSquare:
      return "inverse_square";
    case LossWeighting::kUniform:
      return "uniform";
    case LossWeighting::kMixed:
      return "mixed";
  }
  return "?";
}

LossWeighting ParseLossWeighting(const std::string& text) {
  if (text == "inverse_square") return LossWeighting::kInverseSquare;
  if (text == "uniform") return LossWeighting::kUniform;
  if (text == "mixed") return LossWeighting::kMixed;
  throw ConfigError("unknown loss weighting '" + text + "'");
}

double LossWeight(LossWeighting weighting, double sigma, double t) {
  switch (weighting) {
    case LossWeighting::kInverseSquare:
      return 1.0 / (t * t);
    case LossWeighting::kUniform:
      return 1.0;
    case LossWeighting::kMixed:
      return 1.0 + (sigma * sigma) / (t * t);
  }
  return 1.0;
}

LossResult TeacherLoss(const TeacherModel& model, const WindowSet& batch,
                       Rng& rng, LossWeighting weighting,
                       double weight_sigma) {
  const Eigen::Index b_n = batch.size();
  if (b_n == 0) throw ConfigError("empty training batch");
  const NoiseSchedule& s = model.pipeline.schedule;
  std::uniform_real_distribution<double> log_t(std::log(s.epsilon),
                                               std::log(s.t_max));
  Eigen::VectorXd t(b_n);
  for (Eigen::Index b = 0; b < b_n; ++b) t(b) = std::exp(log_t(rng));
  const Eigen::MatrixXd noise = StandardNormal(batch.traj.rows(), b_n, rng);
  Eigen::MatrixXd noisy = batch.traj;
  for (Eigen::Index b = 0; b < b_n; ++b) noisy.col(b) += t(b) * noise.col(b);

  DenoiseForward fwd = DenoiseFRecorded(model.pipeline, model.net, noisy,
                                        batch.obs, t, batch.bc);
  const Eigen::MatrixXd diff = fwd.output - batch.traj;
  Eigen::MatrixXd grad(diff.rows(), diff.cols());
  double loss = 0.0;
  for (Eigen::Index b = 0; b < b_n; ++b) {
    const double w = LossWeight(weighting, weight_sigma, t(b));
    loss += w * diff.col(b).squaredNorm();
    grad.col(b) = (2.0 * w / static_cast<double>(b_n)) * diff.col(b);
  }
  loss /= static_cast<double>(b_n);
  if (!std::isfinite(loss)) throw TrainingError("non-finite teacher loss");
  LossResult result;
  result.loss = loss;
  result.grads = DenoiseBackward(model.pipeline, fwd.tape, grad);
  return result;
}

double TeacherLossAt(const TeacherModel& model, const WindowSet& batch,
                     const Eigen::VectorXd& t, const Eigen::MatrixXd& noise,
                     LossWeighting weighting, double weight_sigma) {
  Eigen::MatrixXd noisy = batch.traj;
  for (Eigen::Index b = 0; b < batch.size(); ++b) {
    noisy.col(b) += t(b) * noise.col(b);
  }
  const Eigen::MatrixXd diff =
      DenoiseF(model.pipeline, model.net, noisy, batch.obs, t, batch.bc) -
      batch.traj;
  double loss = 0.0;
  for (Eigen::Index b = 0; b < batch.size(); ++b) {
    loss += LossWeight(weighting, weight_sigma, t(b)) * diff.col(b).squaredNorm();
  }
  return loss / static_cast<double>(batch.size());
}

BatchSampler::BatchSampler(Eigen::Index n, int batch_size, uint64_t seed)
    : n_(n), batch_size_(batch_size), rng_(seed), order_(n), cursor_(n) {
  if (n <= 0) throw ConfigError("cannot sample batches from an empty set");
  if (batch_size <= 0) throw ConfigError("batch size must be positive");
  std::iota(order_.begin(), order_.end(), Eigen::Index{0});
}

std::vector<Eigen::Index> BatchSampler::Next() {
  if (cursor_ >= n_) {
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
  }
  const Eigen::Index end = std::min<Eigen::Index>(n_, cursor_ + batch_size_);
  std::vector<Eigen::Index> idx(order_.begin() + cursor_, order_.begin() + end);
  cursor_ = end;
  return idx;
}

TeacherTrainResult TrainTeacher(const WindowSet& data,
                                const DenoisePipeline& pipeline,
                                const TeacherTrainConfig& config) {
  if (data.size() == 0) throw ConfigError("training dataset is empty");
  if (config.steps < 0) throw ConfigError("training steps must be >= 0");
  if (config.log_every <= 0) throw ConfigError("log interval must be positive");

  const nn::NetLayout layout = nn::MakeLayout(
      pipeline.head, pipeline.horizon, pipeline.dof(),
      pipeline.mp_config.n_basis, pipeline.obs_size, config.embed_size,
      config.sigma_data);
  TeacherTrainResult result;
  result.model.pipeline = pipeline;
  result.model.net = nn::InitNet(layout, config.hidden, config.seed);
  TeacherModel& model = result.model;

  // Fixed validation draw.
  Rng val_rng(config.seed ^ 0x5eed5eedULL);
  std::vector<Eigen::Index> val_idx(data.size());
  std::iota(val_idx.begin(), val_idx.end(), Eigen::Index{0});
  std::shuffle(val_idx.begin(), val_idx.end(), val_rng);
  val_idx.resize(std::min<size_t>(val_idx.size(), config.validation_size));
  const WindowSet val = data.Select(val_idx);
  std::uniform_real_distribution<double> log_t(
      std::log(pipeline.schedule.epsilon), std::log(pipeline.schedule.t_max));
  Eigen::VectorXd val_t(val.size());
  for (Eigen::Index b = 0; b < val.size(); ++b) val_t(b) = std::exp(log_t(val_rng));
  const Eigen::MatrixXd val_noise =
      StandardNormal(val.traj.rows(), val.size(), val_rng);
  result.initial_validation_loss =
      TeacherLossAt(model, val, val_t, val_noise, config.weighting,
                    config.weight_sigma);

  nn::AdamWHyper hyper = config.optimizer;
  if (hyper.total_steps == 0) hyper.total_steps = config.steps;
  nn::OptimizerState opt = nn::OptimizerState::For(model.net);
  BatchSampler sampler(data.size(), config.batch_size, config.seed + 1);
  Rng noise_rng(config.seed + 2);
  double interval_loss = 0.0;
  int interval_count = 0;
  for (int64_t step = 1; step <= config.steps; ++step) {
    const WindowSet batch = data.Select(sampler.Next());
    LossResult lr;
    try {
      lr = TeacherLoss(model, batch, noise_rng, config.weighting,
                       config.weight_sigma);
      nn::OptimizerStep(model.net, lr.grads, opt, hyper);
    } catch (const TrainingError& e) {
      throw TrainingError(std::string("teacher training diverged: ") + e.what(),
                          step);
    }
    interval_loss += lr.loss;
    ++interval_count;
    if (step % config.log_every == 0 || step == config.steps) {
      result.curve.push_back({step, interval_loss / interval_count,
                              nn::LearningRate(hyper, step)});
      interval_loss = 0.0;
      interval_count = 0;
    }
  }
  result.final_validation_loss =
      TeacherLossAt(model, val, val_t, val_noise, config.weighting,
                    config.weight_sigma);
  return result;
}

}  // namespace frmd::diffusion
