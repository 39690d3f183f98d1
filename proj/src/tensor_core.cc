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

#include "frmd/tensor_core.h"

#include <atomic>
#include <cmath>
#include <numbers>
#include <random>

#include "frmd/errors.h"

namespace frmd::nn {
namespace {

std::atomic<uint64_t> g_forward_calls{0};

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double Gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double GeluGrad(double x) {
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
         x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

Eigen::MatrixXd Activate(Activation kind, const Eigen::MatrixXd& z) {
  switch (kind) {
    case Activation::kGelu:
      return z.unaryExpr(&Gelu);
    case Activation::kTanh:
      return z.array().tanh().matrix();
  }
  return z;
}

Eigen::MatrixXd ActivationGrad(Activation kind, const Eigen::MatrixXd& z) {
  switch (kind) {
    case Activation::kGelu:
      return z.unaryExpr(&GeluGrad);
    case Activation::kTanh:
      return (1.0 - z.array().tanh().square()).matrix();
  }
  return Eigen::MatrixXd::Ones(z.rows(), z.cols());
}

}  // namespace

std::string ToString(HeadMode mode) {
  return mode == HeadMode::kMovementPrimitive ? "mp" : "raw";
}

HeadMode ParseHeadMode(const std::string& text) {
  if (text == "mp") return HeadMode::kMovementPrimitive;
  if (text == "raw") return HeadMode::kRaw;
  throw ConfigError("unknown head mode '" + text + "' (expected mp|raw)");
}

void NetLayout::Validate() const {
  if (traj_size <= 0 || obs_size < 0 || embed_size <= 0 || output_size <= 0) {
    throw ConfigError("network layout sizes must be positive");
  }
  if (embed_size % 2 != 0) {
    throw ConfigError("noise embedding size must be even");
  }
  if (!(sigma_data > 0)) throw ConfigError("sigma_data must be positive");
}

NetLayout MakeLayout(HeadMode head, int horizon, int dof, int n_basis,
                     int obs_size, int embed_size, double sigma_data) {
  NetLayout layout;
  layout.traj_size = horizon * dof;
  layout.obs_size = obs_size;
  layout.embed_size = embed_size;
  layout.output_size = head == HeadMode::kMovementPrimitive
                           ? dof * (n_basis + 1)
                           : horizon * dof;
  layout.sigma_data = sigma_data;
  layout.Validate();
  return layout;
}

int64_t DenoiserNet::ParameterCount() const {
  int64_t count = 0;
  for (const DenseLayer& layer : layers) {
    count += layer.weight.size() + layer.bias.size();
  }
  return count;
}

std::vector<int> DenoiserNet::HiddenSizes() const {
  std::vector<int> sizes;
  for (size_t i = 0; i + 1 < layers.size(); ++i) {
    sizes.push_back(static_cast<int>(layers[i].weight.rows()));
  }
  return sizes;
}

DenoiserNet InitNet(const NetLayout& layout,
                    const std::vector<int>& hidden_sizes, uint64_t seed,
                    Activation activation) {
  layout.Validate();
  if (hidden_sizes.empty()) {
    throw ConfigError("denoiser needs at least one hidden layer");
  }
  for (int h : hidden_sizes) {
    if (h <= 0) throw ConfigError("hidden layer sizes must be positive");
  }
  std::mt19937_64 rng(seed);
  DenoiserNet net;
  net.layout = layout;
  net.activation = activation;
  int fan_in = layout.input_size();
  std::vector<int> outs = hidden_sizes;
  outs.push_back(layout.output_size);
  for (int out : outs) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseLayer layer;
    layer.weight.resize(out, fan_in);
    layer.bias.resize(out);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < fan_in; ++c) layer.weight(r, c) = dist(rng);
    }
    for (int r = 0; r < out; ++r) layer.bias(r) = dist(rng);
    net.layers.push_back(std::move(layer));
    fan_in = out;
  }
  return net;
}

Eigen::MatrixXd NoiseEmbedding(const Eigen::VectorXd& t, int size) {
  const int half = size / 2;
  Eigen::MatrixXd emb(size, t.size());
  for (Eigen::Index b = 0; b < t.size(); ++b) {
    const double c = 0.25 * std::log(t(b));
    for (int i = 0; i < half; ++i) {
      // Frequencies geometrically spaced on [1, 32].
      const double freq =
          half == 1 ? 1.0 : std::exp(i * std::log(32.0) / (half - 1));
      emb(2 * i, b) = std::sin(freq * c);
      emb(2 * i + 1, b) = std::cos(freq * c);
    }
  }
  return emb;
}

Eigen::MatrixXd AssembleInput(const NetLayout& layout,
                              const Eigen::MatrixXd& noisy_traj,
                              const Eigen::MatrixXd& observation,
                              const Eigen::VectorXd& t) {
  const Eigen::Index batch = noisy_traj.cols();
  if (noisy_traj.rows() != layout.traj_size) {
    throw LayoutError("noisy trajectory has " +
                      std::to_string(noisy_traj.rows()) +
                      " rows, layout expects " +
                      std::to_string(layout.traj_size));
  }
  if (observation.rows() != layout.obs_size || observation.cols() != batch) {
    throw LayoutError("observation block does not match layout");
  }
  if (t.size() != batch) {
    throw LayoutError("noise level vector does not match batch size");
  }
  for (Eigen::Index b = 0; b < batch; ++b) {
    if (!(t(b) > 0)) throw ConfigError("noise level must be positive");
  }
  Eigen::MatrixXd input(layout.input_size(), batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const double c_in =
        1.0 / std::sqrt(t(b) * t(b) + layout.sigma_data * layout.sigma_data);
    input.col(b).head(layout.traj_size) = c_in * noisy_traj.col(b);
  }
  input.middleRows(layout.traj_size, layout.obs_size) = observation;
  input.bottomRows(layout.embed_size) = NoiseEmbedding(t, layout.embed_size);
  return input;
}

ForwardResult ForwardInput(const DenoiserNet& net,
                           const Eigen::MatrixXd& input) {
  if (input.rows() != net.layout.input_size()) {
    throw LayoutError("network input has wrong size");
  }
  g_forward_calls.fetch_add(1, std::memory_order_relaxed);
  ForwardResult result;
  Tape& tape = result.tape;
  tape.net_ = &net;
  tape.inputs_.reserve(net.layers.size());
  tape.pre_activations_.reserve(net.layers.size());
  Eigen::MatrixXd h = input;
  for (size_t l = 0; l < net.layers.size(); ++l) {
    const DenseLayer& layer = net.layers[l];
    Eigen::MatrixXd z(layer.weight.rows(), h.cols());
    z.noalias() = layer.weight * h;
    z.colwise() += layer.bias;
    tape.inputs_.push_back(std::move(h));
    if (l + 1 == net.layers.size()) {
      result.output = std::move(z);
    } else {
      h = Activate(net.activation, z);
      tape.pre_activations_.push_back(std::move(z));
    }
  }
  return result;
}

ForwardResult Forward(const DenoiserNet& net, const Eigen::MatrixXd& noisy_traj,
                      const Eigen::MatrixXd& observation,
                      const Eigen::VectorXd& t) {
  return ForwardInput(net, AssembleInput(net.layout, noisy_traj, observation, t));
}

Eigen::MatrixXd Evaluate(const DenoiserNet& net,
                         const Eigen::MatrixXd& noisy_traj,
                         const Eigen::MatrixXd& observation,
                         const Eigen::VectorXd& t) {
  g_forward_calls.fetch_add(1, std::memory_order_relaxed);
  Eigen::MatrixXd h = AssembleInput(net.layout, noisy_traj, observation, t);
  for (size_t l = 0; l < net.layers.size(); ++l) {
    const DenseLayer& layer = net.layers[l];
    Eigen::MatrixXd z(layer.weight.rows(), h.cols());
    z.noalias() = layer.weight * h;
    z.colwise() += layer.bias;
    h = l + 1 == net.layers.size() ? std::move(z) : Activate(net.activation, z);
  }
  return h;
}

BackwardResult Backward(Tape& tape, const Eigen::MatrixXd& output_grad,
                        bool want_input_grad) {
  if (tape.consumed_) throw UsageError("tape was already consumed");
  if (tape.net_ == nullptr) throw UsageError("tape holds no forward pass");
  const DenoiserNet& net = *tape.net_;
  const size_t n_layers = net.layers.size();
  if (output_grad.rows() != net.layout.output_size ||
      output_grad.cols() != tape.batch_size()) {
    throw LayoutError("output gradient does not match forward output");
  }
  tape.consumed_ = true;

  BackwardResult result;
  result.grads.resize(n_layers);
  Eigen::MatrixXd delta = output_grad;
  for (size_t l = n_layers; l-- > 0;) {
    const DenseLayer& layer = net.layers[l];
    const Eigen::MatrixXd& x = tape.inputs_[l];
    result.grads[l].weight.noalias() = delta * x.transpose();
    result.grads[l].bias = delta.rowwise().sum();
    if (l == 0 && !want_input_grad) break;
    Eigen::MatrixXd dx(layer.weight.cols(), delta.cols());
    dx.noalias() = layer.weight.transpose() * delta;
    if (l == 0) {
      result.input_grad = std::move(dx);
    } else {
      delta = dx.cwiseProduct(
          ActivationGrad(net.activation, tape.pre_activations_[l - 1]));
    }
  }
  tape.inputs_.clear();
  tape.pre_activations_.clear();
  return result;
}

uint64_t ForwardCallCount() {
  return g_forward_calls.load(std::memory_order_relaxed);
}

ParameterBlocks ZerosLike(const DenoiserNet& net) {
  ParameterBlocks out(net.layers.size());
  for (size_t l = 0; l < net.layers.size(); ++l) {
    out[l].weight = Eigen::MatrixXd::Zero(net.layers[l].weight.rows(),
                                          net.layers[l].weight.cols());
    out[l].bias = Eigen::VectorXd::Zero(net.layers[l].bias.size());
  }
  return out;
}

void AddScaled(ParameterBlocks& acc, const ParameterBlocks& g, double scale) {
  if (acc.size() != g.size()) throw LayoutError("parameter block mismatch");
  for (size_t l = 0; l < acc.size(); ++l) {
    acc[l].weight += scale * g[l].weight;
    acc[l].bias += scale * g[l].bias;
  }
}

double GlobalNorm(const ParameterBlocks& blocks) {
  double sq = 0.0;
  for (const DenseLayer& b : blocks) {
    sq += b.weight.squaredNorm() + b.bias.squaredNorm();
  }
  return std::sqrt(sq);
}

Eigen::VectorXd FlattenBlocks(const ParameterBlocks& blocks) {
  int64_t total = 0;
  for (const DenseLayer& b : blocks) total += b.weight.size() + b.bias.size();
  Eigen::VectorXd flat(total);
  int64_t at = 0;
  for (const DenseLayer& b : blocks) {
    for (Eigen::Index r = 0; r < b.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < b.weight.cols(); ++c) {
        flat(at++) = b.weight(r, c);
      }
    }
    for (Eigen::Index r = 0; r < b.bias.size(); ++r) flat(at++) = b.bias(r);
  }
  return flat;
}

Eigen::VectorXd FlattenParameters(const DenoiserNet& net) {
  return FlattenBlocks(net.layers);
}

void SetParameters(DenoiserNet& net, const Eigen::VectorXd& flat) {
  if (flat.size() != net.ParameterCount()) {
    throw LayoutError("parameter vector has " + std::to_string(flat.size()) +
                      " entries, network has " +
                      std::to_string(net.ParameterCount()));
  }
  int64_t at = 0;
  for (DenseLayer& b : net.layers) {
    for (Eigen::Index r = 0; r < b.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < b.weight.cols(); ++c) {
        b.weight(r, c) = flat(at++);
      }
    }
    for (Eigen::Index r = 0; r < b.bias.size(); ++r) b.bias(r) = flat(at++);
  }
}

OptimizerState OptimizerState::For(const DenoiserNet& net) {
  OptimizerState state;
  state.m = ZerosLike(net);
  state.v = ZerosLike(net);
  return state;
}

double LearningRate(const AdamWHyper& hyper, int64_t step) {
  if (hyper.warmup_steps > 0 && step < hyper.warmup_steps) {
    return hyper.lr * static_cast<double>(step) /
           static_cast<double>(hyper.warmup_steps);
  }
  if (hyper.total_steps <= hyper.warmup_steps) return hyper.lr;
  const double progress =
      std::min(1.0, static_cast<double>(step - hyper.warmup_steps) /
                        static_cast<double>(hyper.total_steps -
                                            hyper.warmup_steps));
  return hyper.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void OptimizerStep(DenoiserNet& net, const ParameterBlocks& grads,
                   OptimizerState& state, const AdamWHyper& hyper) {
  if (grads.size() != net.layers.size() || state.m.size() != grads.size()) {
    throw LayoutError("gradient blocks do not match the network");
  }
  for (size_t l = 0; l < grads.size(); ++l) {
    if (grads[l].weight.rows() != net.layers[l].weight.rows() ||
        grads[l].weight.cols() != net.layers[l].weight.cols() ||
        grads[l].bias.size() != net.layers[l].bias.size()) {
      throw LayoutError("gradient block " + std::to_string(l) +
                        " has the wrong shape");
    }
    if (!grads[l].weight.allFinite()) {
      throw TrainingError("non-finite gradient in layer " + std::to_string(l) +
                          " weight", state.step + 1);
    }
    if (!grads[l].bias.allFinite()) {
      throw TrainingError("non-finite gradient in layer " + std::to_string(l) +
                          " bias", state.step + 1);
    }
  }
  double scale = 1.0;
  if (hyper.clip_norm > 0) {
    const double norm = GlobalNorm(grads);
    if (norm > hyper.clip_norm) scale = hyper.clip_norm / norm;
  }

  state.step += 1;
  const double lr = LearningRate(hyper, state.step);
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    param *= 1.0 - lr * hyper.weight_decay;
    m = hyper.beta1 * m + (1.0 - hyper.beta1) * (scale * g);
    v = hyper.beta2 * v + (1.0 - hyper.beta2) * (scale * g).cwiseAbs2();
    param.array() -= lr * (m.array() / bc1) /
                     ((v.array() / bc2).sqrt() + hyper.eps);
  };
  for (size_t l = 0; l < grads.size(); ++l) {
    update(net.layers[l].weight, state.m[l].weight, state.v[l].weight,
           grads[l].weight);
    update(net.layers[l].bias, state.m[l].bias, state.v[l].bias,
           grads[l].bias);
  }
}

}  // namespace frmd::nn
