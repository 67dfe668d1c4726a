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

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qunlearn/model.hpp"

namespace qunlearn {

struct QAPair {
  std::vector<TokenId> prompt;
  std::vector<TokenId> answer;
};

std::size_t lcs_length(std::span<const TokenId> a, std::span<const TokenId> b);

/// ROUGE-L F1 over token ids; 0 when either side is empty or nothing matches.
double rouge_l_f1(std::span<const TokenId> candidate,
                  std::span<const TokenId> reference);

/// Mean ROUGE-L F1 of the greedy continuation of each sequence's first
/// `prompt_len` tokens against the rest of the sequence.
double vermem(const Model& f, std::span<const Sequence> forget,
              std::size_t prompt_len);

/// Mean ROUGE-L F1 of greedy answers to each prompt.
double knowmem(const Model& f, std::span<const QAPair> qa);

/// Mean per-token NLL of seq[t] for t in [first_target, |seq|).
double sequence_nll(const Model& f, const Sequence& seq,
                    std::size_t first_target);

/// P(member score < nonmember score) with half credit for ties.
double auc_from_scores(std::span<const double> members,
                       std::span<const double> nonmembers);

/// Loss-threshold membership AUC: lower NLL signals membership.
double mia_auc(const Model& f, std::span<const Sequence> members,
               std::span<const Sequence> nonmembers, std::size_t first_target);

/// 100 * (auc_un - auc_retrain) / auc_retrain.
double privleak_from_auc(double auc_un, double auc_retrain);

double privleak(const Model& f_un, const Model& f_retrain,
                std::span<const Sequence> forget,
                std::span<const Sequence> holdout, std::size_t first_target);

struct EvalData {
  std::span<const Sequence> forget;
  std::span<const Sequence> holdout;
  std::span<const QAPair> qa_forget;
  std::span<const QAPair> qa_retain;
  std::span<const Example> forget_examples;
  std::span<const Example> retain_examples;
  std::size_t prompt_len = 8;
  std::size_t first_target = 2;
};

struct MetricsReport {
  std::string method;
  double alpha = 0.0;
  double gamma = 0.0;
  /// Quantization width; 0 means full precision.
  int bits = 0;
  std::uint64_t seed = 0;

  double vermem = 0.0;     // M1
  double knowmem_f = 0.0;  // M2
  double privleak = 0.0;   // M3
  double knowmem_r = 0.0;  // M4
  double forget_acc = 0.0;
  double retain_acc = 0.0;
  double auc = 0.0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// M1-M4 and accuracies; the PrivLeak reference is `f_retrain` on the same
/// forget/holdout split.
MetricsReport full_report(const Model& f, const Model& f_retrain,
                          const EvalData& data);
/// Same, with the retrain AUC precomputed.
MetricsReport full_report(const Model& f, double retrain_auc,
                          const EvalData& data);

/// Columns: method,alpha,gamma,bits,M1,M2,M3,M4,forget_acc,retain_acc,seed.
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& r);

}  // namespace qunlearn
