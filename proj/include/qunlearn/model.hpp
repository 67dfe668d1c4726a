// Copyright 2026 The qunlearn Authors. All Rights Reserved.
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

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qunlearn/rng.hpp"
#include "qunlearn/tensor.hpp"

namespace qunlearn {

using TokenId = std::uint32_t;
using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Reserved left-padding token.
inline constexpr TokenId kPadToken = 0;

enum class Task { kNextToken, kBinaryClassify };

std::string to_string(Task task);
Task parse_task(std::string_view text);

struct ModelConfig {
  std::size_t vocab_size = 64;
  std::size_t context = 8;
  std::size_t embed_dim = 16;
  std::size_t hidden_dim = 256;
  Task task = Task::kNextToken;

  /// K: vocab_size for next-token, 2 for binary classification.
  std::size_t num_outputs() const noexcept {
    return task == Task::kNextToken ? vocab_size : 2;
  }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// A token window (left-padded to the context length at use) and its target:
/// the next token id, or a class in {0, 1}.
struct Example {
  std::vector<TokenId> tokens;
  TokenId label = 0;
};

using Sequence = std::vector<TokenId>;

/// One next-token example per target position t in [first_target, |seq|):
/// history seq[0, t), label seq[t].
std::vector<Example> sequence_examples(std::span<const TokenId> seq,
                                       std::size_t first_target);

/// Fixed-context MLP over concatenated embeddings:
///
///   x = concat(embed[t_1], ..., embed[t_C])      (C*d)
///   z = tanh(x W1 + b1) W2 + b2                  (K)
///
/// Parameters live in a WeightSnapshot under the names below, so every
/// analytics operation applies to a model directly.
class Model {
 public:
  static constexpr std::string_view kEmbed = "layer.0.embed";
  static constexpr std::string_view kW1 = "layer.1.w";
  static constexpr std::string_view kB1 = "layer.1.b";
  static constexpr std::string_view kW2 = "layer.2.w";
  static constexpr std::string_view kB2 = "layer.2.b";

  /// All-zero parameters.
  explicit Model(ModelConfig config);
  /// Adopts `params` after checking names and shapes against `config`.
  Model(ModelConfig config, WeightSnapshot params);

  /// Weights ~ normal(0, init_scale^2) from per-tensor splits of `rng`;
  /// biases zero.
  static Model initialized(ModelConfig config, const Rng& rng,
                           double init_scale);

  const ModelConfig& config() const noexcept { return config_; }
  const WeightSnapshot& params() const noexcept { return params_; }
  WeightSnapshot& params() noexcept { return params_; }

  static WeightSnapshot zero_params(const ModelConfig& config);

 private:
  ModelConfig config_;
  WeightSnapshot params_;
};

/// Last `context` tokens of `history`, left-padded with kPadToken.
std::vector<TokenId> make_window(std::span<const TokenId> history,
                                 std::size_t context);

/// Activations kept for the backward pass.
struct ForwardCache {
  std::vector<std::vector<TokenId>> windows;
  Matrix inputs;  // B x C*d
  Matrix hidden;  // B x h, post-tanh
  Matrix logits;  // B x K
};

ForwardCache forward_batch(const Model& m, std::span<const Example> batch);

Vector forward_logits(const Model& m, std::span<const TokenId> window);

/// Parameter gradients given dL/dlogits (B x K) for a cached batch.
WeightSnapshot backward(const Model& m, const ForwardCache& cache,
                        const Matrix& dlogits);

Vector softmax(const Vector& z);

/// Per-row mean NLL and its gradient w.r.t. logits (already divided by B).
double nll_and_dlogits(const Matrix& logits, std::span<const Example> batch,
                       Matrix* dlogits);

struct LossAndGrads {
  double loss = 0.0;
  WeightSnapshot grads;
};

enum class LossSign : int { kDescent = 1, kAscent = -1 };

/// Mean NLL over the batch; grads are d(sign * loss)/dparams.
LossAndGrads loss_and_grads(const Model& m, std::span<const Example> batch,
                            LossSign sign);

/// Any objective defined on the batch logits. The callback returns the loss
/// and writes dL/dlogits; backprop through the network is shared.
using LogitObjective = std::function<double(
    const Matrix& logits, std::span<const Example> batch, Matrix& dlogits)>;

LossAndGrads objective_and_grads(const Model& m,
                                 std::span<const Example> batch,
                                 const LogitObjective& objective);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  WeightSnapshot m;
  WeightSnapshot v;
  std::uint64_t t = 0;

  static AdamState for_params(const WeightSnapshot& params);
};

/// Decoupled weight decay, then the bias-corrected Adam update.
void adamw_step(Model& m, AdamState& state, const WeightSnapshot& grads,
                double lr, double weight_decay, const AdamOptions& opt = {});

struct TrainOptions {
  int epochs = 40;
  double lr = 3e-3;
  std::size_t batch_size = 32;
  double weight_decay = 0.0;
};

struct TrainLog {
  std::vector<double> epoch_loss;
};

TrainLog train(Model& m, std::span<const Example> data,
               const TrainOptions& options, Rng& rng);

/// Fresh initialization from rng.split("init"), shuffling from
/// rng.split("train"); never sees anything but `retain`.
Model train_retrain(const ModelConfig& config, std::span<const Example> retain,
                    const TrainOptions& options, double init_scale,
                    const Rng& rng);

/// Appends the argmax token n times (ties go to the lowest id).
std::vector<TokenId> generate_greedy(const Model& m,
                                     std::span<const TokenId> prompt,
                                     std::size_t n);

double accuracy(const Model& m, std::span<const Example> data);

/// NLL of each example under the model, in input order.
std::vector<double> example_nll(const Model& m, std::span<const Example> data);

void save_model(const Model& m, const std::string& snapshot_path);
Model load_model(const std::string& snapshot_path);
/// "<dir>/<stem>.json" next to a snapshot path.
std::string sidecar_path(const std::string& snapshot_path);

std::string config_to_json(const ModelConfig& c);
ModelConfig config_from_json(std::string_view text);

}  // namespace qunlearn
