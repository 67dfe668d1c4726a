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

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qunlearn/analytics.hpp"
#include "qunlearn/corpus.hpp"
#include "qunlearn/metrics.hpp"
#include "qunlearn/model.hpp"
#include "qunlearn/quantizer.hpp"
#include "qunlearn/unlearn.hpp"

namespace qunlearn {

inline constexpr std::string_view kToolName = "qunlearn";
inline constexpr std::string_view kToolVersion = "0.1.0";

struct UnlearnGrid {
  std::vector<Method> methods{Method::kGA, Method::kGAGDR, Method::kQuail};
  std::vector<double> alphas{1.0, 5.0};
  std::vector<double> gammas{1.0, 8.0, 20.0};
  /// lr, epochs, batch_size, delta_q, retain_weight, weight_decay; method,
  /// alpha and gamma are filled per grid point.
  UnlearnConfig base{Method::kGAGDR, 1.0, 0.0, 1.0, 1e-5, 10, 32, 1.0, 0.0};
};

struct QuantSection {
  std::vector<int> bits{16, 8, 4};
  RangeMode range_mode = RangeMode::kGlobal;
  bool symmetric = false;
  bool exempt_embeddings = false;

  QuantConfig at(int b) const;
};

struct ExperimentConfig {
  std::uint64_t seed = 42;
  ModelConfig model;
  double init_scale = 0.05;
  CorpusConfig corpus;
  TrainOptions pretrain;
  UnlearnGrid unlearn;
  /// Extra GA_GDR learning rates for the overlap-versus-lr report.
  std::vector<double> lr_sweep;
  QuantSection quant;
  std::size_t prompt_len = 8;
  bool classify_track = true;
  int jobs = 1;
  std::string out = "out";

  void validate() const;
};

/// Strict parse: unknown keys and wrong types are ValidationErrors. Missing
/// keys keep their defaults.
ExperimentConfig experiment_config_from_json(std::string_view text);
ExperimentConfig load_experiment_config(const std::string& path);
/// Canonical form. `with_runtime` adds the "out" and "jobs" keys, which do
/// not affect results.
std::string experiment_config_to_json(const ExperimentConfig& cfg,
                                      bool with_runtime = true);
/// Short content hash of the canonical config without runtime keys.
std::string config_fingerprint(const ExperimentConfig& cfg);

struct GridPoint {
  Method method = Method::kGAGDR;
  double alpha = 1.0;
  double gamma = 0.0;

  /// "GA", "GA_GDR_a1", "QUAIL_a5_g20".
  std::string label() const;
  UnlearnConfig config(const UnlearnConfig& base) const;
};

/// GA once, GA_GDR per alpha, QUAIL per (alpha, gamma).
std::vector<GridPoint> expand_grid(const UnlearnGrid& grid);

/// Corpus, trained target and retrain models for one config.
struct Prepared {
  ExperimentConfig cfg;
  SynthCorpus corpus;
  std::vector<Example> forget_examples;
  std::vector<Example> retain_examples;
  std::vector<Example> train_examples;
  Model target;
  Model retrain;
  TrainLog target_log;
  TrainLog retrain_log;
  double retrain_auc = 0.0;
  LogitCache cache;

  EvalData eval_data() const;
};

Prepared prepare(const ExperimentConfig& cfg);

/// Metrics of `m` at full precision (bits 0) and at every configured width,
/// each width quantized on m's own grid.
std::vector<MetricsReport> evaluate_model(const Prepared& p, const Model& m,
                                          const std::string& method,
                                          double alpha, double gamma);

struct GridOutcome {
  GridPoint point;
  UnlearnResult run;
  DeltaStats delta;
  std::vector<OverlapReport> overlap;
  std::vector<MetricsReport> metrics;
};

GridOutcome run_grid_point(const Prepared& p, const GridPoint& point,
                           std::optional<double> lr = std::nullopt);

/// Runs every stage and writes the result bundle under cfg.out. Returns the
/// summary JSON text (also written to summary.json).
std::string run_experiment(const ExperimentConfig& cfg);

/// Corpus file: JSON with the token sequences, QA pairs and classification
/// examples.
std::string corpus_to_json(const SynthCorpus& c, std::size_t vocab_size);
SynthCorpus corpus_from_json(std::string_view text);

}  // namespace qunlearn
