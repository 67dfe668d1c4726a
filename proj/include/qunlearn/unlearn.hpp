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

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qunlearn/model.hpp"
#include "qunlearn/rng.hpp"

namespace qunlearn {

enum class Method { kGA, kGAGDR, kQuail };

std::string to_string(Method method);
/// Accepts "GA", "GA_GDR", "QUAIL".
Method parse_method(std::string_view text);

struct UnlearnConfig {
  Method method = Method::kGAGDR;
  /// Forget-loss weight.
  double alpha = 1.0;
  /// Hinge weight (QUAIL only).
  double gamma = 0.0;
  /// Logit-space margin; the hinge is active below delta_q / 2.
  double delta_q = 1.0;
  double lr = 1e-5;
  int epochs = 10;
  std::size_t batch_size = 32;
  /// Retain-loss weight (GA_GDR and QUAIL).
  double retain_weight = 1.0;
  double weight_decay = 0.0;

  /// Full check, including gamma > 0 for QUAIL.
  void validate() const;
};

struct HingeResult {
  double loss = 0.0;
  Vector grad;
};

/// (1/K) sum_k max(0, delta_q/2 - |z'_k - z_k|) and its subgradient in z'.
/// The subgradient is -sign(z'_k - z_k)/K on violated coordinates with
/// sign(0) = 0, and zero elsewhere.
HingeResult hinge_loss(const Vector& z_un, const Vector& z_target,
                       double delta_q);

/// Target logits per forget example (row i belongs to forget[i]).
class LogitCache {
 public:
  LogitCache() = default;
  explicit LogitCache(Matrix logits) : logits_(std::move(logits)) {}

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(logits_.rows());
  }
  bool empty() const noexcept { return size() == 0; }
  Vector at(std::size_t i) const;
  const Matrix& logits() const noexcept { return logits_; }

 private:
  Matrix logits_;
};

LogitCache cache_target_logits(const Model& target,
                               std::span<const Example> forget);

struct EpochLog {
  int epoch = 0;
  double forget_nll = 0.0;
  double retain_nll = 0.0;
  double hinge_mean = 0.0;
  /// Fraction of logit coordinates with |z' - z| >= delta_q / 2.
  double margin_satisfied_frac = 0.0;
  double mean_logit_gap = 0.0;
};

struct UnlearnResult {
  Model model;
  std::vector<EpochLog> log;
};

/// Copies `target`, then for each epoch steps over shuffled forget batches on
/// alpha * (-NLL) + gamma * hinge and, except for GA, over shuffled retain
/// batches on retain_weight * NLL. One AdamW state serves both phases.
///
/// Shuffles come from rng.split("forget") and rng.split("retain"). gamma is
/// used as given, so QUAIL with gamma = 0 can be run deliberately.
UnlearnResult unlearn_run(const Model& target, const UnlearnConfig& cfg,
                          std::span<const Example> forget,
                          std::span<const Example> retain, const Rng& rng);
UnlearnResult unlearn_run(const Model& target, const LogitCache& cache,
                          const UnlearnConfig& cfg,
                          std::span<const Example> forget,
                          std::span<const Example> retain, const Rng& rng);

/// The forget-phase objective on one batch, exposed for gradient checks.
/// `cached` holds the target logits of the batch rows.
double forget_objective(const Matrix& logits, std::span<const Example> batch,
                        const Matrix& cached, const UnlearnConfig& cfg,
                        Matrix& dlogits);

/// Margin diagnostics of f_un against the cache, over all forget examples.
EpochLog margin_diagnostics(const Model& f_un, const LogitCache& cache,
                            std::span<const Example> forget, double delta_q);

struct LogitGap {
  /// Per example: mean_k |z_a - z_b| and min_k |z_a - z_b|.
  std::vector<double> mean_gap;
  std::vector<double> min_gap;
  double mean_of_mean = 0.0;
  double mean_of_min = 0.0;
};

LogitGap logit_gap_diagnostic(const Model& f_a, const Model& f_b,
                              std::span<const Example> examples);

std::string epoch_log_jsonl(std::span<const EpochLog> log);

}  // namespace qunlearn
