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

// Dense MLP denoiser with a layer-level reverse-mode tape and AdamW.
//
// Batches are column-major: every matrix argument holds one sample per
// column. The network input is
//
//   [ c_in(t) * noisy_traj ; observation ; embed(log t) ]
//
// with c_in(t) = 1 / sqrt(t^2 + sigma_data^2) keeping the trajectory part at
// unit scale across noise levels.

#ifndef FRMD_TENSOR_CORE_H_
#define FRMD_TENSOR_CORE_H_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace frmd::nn {

enum class Activation { kGelu = 0, kTanh = 1 };
enum class HeadMode { kMovementPrimitive = 0, kRaw = 1 };

std::string ToString(HeadMode mode);
HeadMode ParseHeadMode(const std::string& text);

struct NetLayout {
  int traj_size = 0;   // n * D
  int obs_size = 0;    // m * obs_dim
  int embed_size = 16;
  int output_size = 0;
  double sigma_data = 0.5;

  int input_size() const { return traj_size + obs_size + embed_size; }
  void Validate() const;
  bool operator==(const NetLayout&) const = default;
};

// Output size D (N_b + 1) for the MP head, n D for the raw head.
NetLayout MakeLayout(HeadMode head, int horizon, int dof, int n_basis,
                     int obs_size, int embed_size = 16,
                     double sigma_data = 0.5);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

// Parameter-shaped buffers (gradients, optimizer moments).
using ParameterBlocks = std::vector<DenseLayer>;

struct DenoiserNet {
  NetLayout layout;
  Activation activation = Activation::kGelu;
  std::vector<DenseLayer> layers;

  int64_t ParameterCount() const;
  std::vector<int> HiddenSizes() const;
};

// Scaled uniform fan-in initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
// Throws ConfigError for an empty hidden list or non-positive sizes.
DenoiserNet InitNet(const NetLayout& layout,
                    const std::vector<int>& hidden_sizes, uint64_t seed,
                    Activation activation = Activation::kGelu);

// Sinusoidal features of log(t) / 4, one column per entry of t.
Eigen::MatrixXd NoiseEmbedding(const Eigen::VectorXd& t, int size);

// Builds the network input. Throws LayoutError on shape mismatch and
// ConfigError if any t <= 0.
Eigen::MatrixXd AssembleInput(const NetLayout& layout,
                              const Eigen::MatrixXd& noisy_traj,
                              const Eigen::MatrixXd& observation,
                              const Eigen::VectorXd& t);

class Tape;
struct ForwardResult;
struct BackwardResult;

// Forward pass on a pre-assembled input (input_size x B).
ForwardResult ForwardInput(const DenoiserNet& net, const Eigen::MatrixXd& input);

// Reverse pass. Throws UsageError if the tape was already consumed.
BackwardResult Backward(Tape& tape, const Eigen::MatrixXd& output_grad,
                        bool want_input_grad = false);

// Cached intermediates of one forward pass. Holds a pointer to the network
// it was recorded on, which must outlive the tape. Single use.
class Tape {
 public:
  Tape() = default;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool consumed() const { return consumed_; }
  Eigen::Index batch_size() const {
    return inputs_.empty() ? 0 : inputs_.front().cols();
  }

 private:
  friend ForwardResult ForwardInput(const DenoiserNet&,
                                    const Eigen::MatrixXd&);
  friend BackwardResult Backward(Tape&, const Eigen::MatrixXd&, bool);

  const DenoiserNet* net_ = nullptr;
  std::vector<Eigen::MatrixXd> inputs_;          // input of every layer
  std::vector<Eigen::MatrixXd> pre_activations_;  // hidden layers only
  bool consumed_ = false;
};

struct ForwardResult {
  Eigen::MatrixXd output;
  Tape tape;
};

struct BackwardResult {
  ParameterBlocks grads;
  // d loss / d network input; empty unless requested.
  Eigen::MatrixXd input_grad;
};

// Assembles the input and runs the recorded forward pass.
ForwardResult Forward(const DenoiserNet& net, const Eigen::MatrixXd& noisy_traj,
                      const Eigen::MatrixXd& observation,
                      const Eigen::VectorXd& t);

// Forward pass without recording.
Eigen::MatrixXd Evaluate(const DenoiserNet& net,
                         const Eigen::MatrixXd& noisy_traj,
                         const Eigen::MatrixXd& observation,
                         const Eigen::VectorXd& t);

// Process-wide count of network evaluations (Forward/ForwardInput/Evaluate
// calls, each counting once regardless of batch size).
uint64_t ForwardCallCount();

ParameterBlocks ZerosLike(const DenoiserNet& net);
void AddScaled(ParameterBlocks& acc, const ParameterBlocks& g, double scale);
double GlobalNorm(const ParameterBlocks& blocks);

// Parameters in declared order: for each layer, weight row-major then bias.
Eigen::VectorXd FlattenParameters(const DenoiserNet& net);
void SetParameters(DenoiserNet& net, const Eigen::VectorXd& flat);
Eigen::VectorXd FlattenBlocks(const ParameterBlocks& blocks);

struct AdamWHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-6;
  int64_t warmup_steps = 500;
  // Cosine decay horizon; 0 keeps the rate constant after warm-up.
  int64_t total_steps = 0;
  // Rescale gradients whose global norm exceeds this; 0 disables.
  double clip_norm = 0.0;
};

struct OptimizerState {
  ParameterBlocks m;
  ParameterBlocks v;
  int64_t step = 0;

  static OptimizerState For(const DenoiserNet& net);
};

// Linear warm-up to hyper.lr over warmup_steps, then cosine decay to zero
// at total_steps. `step` is 1-based.
double LearningRate(const AdamWHyper& hyper, int64_t step);

// Decoupled weight decay Adam update. Throws TrainingError naming the block
// when a gradient is non-finite.
void OptimizerStep(DenoiserNet& net, const ParameterBlocks& grads,
                   OptimizerState& state, const AdamWHyper& hyper);

}  // namespace frmd::nn

#endif  // FRMD_TENSOR_CORE_H_
