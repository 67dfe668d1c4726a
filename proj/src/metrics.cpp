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

#include "qunlearn/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "qunlearn/detail/format.hpp"

namespace qunlearn {

std::size_t lcs_length(std::span<const TokenId> a, std::span<const TokenId> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                    : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_f1(std::span<const TokenId> candidate,
                  std::span<const TokenId> reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const auto l = static_cast<double>(lcs_length(candidate, reference));
  if (l == 0.0) return 0.0;
  const double p = l / static_cast<double>(candidate.size());
  const double r = l / static_cast<double>(reference.size());
  return 2.0 * p * r / (p + r);
}

double vermem(const Model& f, std::span<const Sequence> forget,
              std::size_t prompt_len) {
  if (forget.empty()) throw ValidationError("vermem of an empty forget set");
  double sum = 0.0;
  for (std::size_t i = 0; i < forget.size(); ++i) {
    const auto& seq = forget[i];
    if (seq.size() <= prompt_len) {
      throw ValidationError("forget sequence " + std::to_string(i) + " has " +
                            std::to_string(seq.size()) +
                            " tokens, not more than prompt length " +
                            std::to_string(prompt_len));
    }
    std::span<const TokenId> s(seq);
    auto cont = generate_greedy(f, s.first(prompt_len), seq.size() - prompt_len);
    sum += rouge_l_f1(cont, s.subspan(prompt_len));
  }
  return sum / static_cast<double>(forget.size());
}

double knowmem(const Model& f, std::span<const QAPair> qa) {
  if (qa.empty()) throw ValidationError("knowmem needs at least one QA pair");
  double sum = 0.0;
  for (const auto& p : qa) {
    if (p.answer.empty()) throw ValidationError("QA answer must be non-empty");
    sum += rouge_l_f1(generate_greedy(f, p.prompt, p.answer.size()), p.answer);
  }
  return sum / static_cast<double>(qa.size());
}

double sequence_nll(const Model& f, const Sequence& seq,
                    std::size_t first_target) {
  auto ex = sequence_examples(seq, first_target);
  if (ex.empty()) throw ValidationError("sequence has no scored positions");
  auto v = example_nll(f, ex);
  return std::accumulate(v.begin(), v.end(), 0.0) /
         static_cast<double>(v.size());
}

double auc_from_scores(std::span<const double> members,
                       std::span<const double> nonmembers) {
  if (members.empty() || nonmembers.empty()) {
    throw ValidationError("membership AUC needs non-empty member and "
                          "nonmember sets");
  }
  // Mann-Whitney: sort nonmembers once, count strictly-greater and equal
  // nonmembers for each member.
  std::vector<double> sorted(nonmembers.begin(), nonmembers.end());
  std::sort(sorted.begin(), sorted.end());
  double wins = 0.0;
  double ties = 0.0;
  for (double m : members) {
    auto lo = std::lower_bound(sorted.begin(), sorted.end(), m);
    auto hi = std::upper_bound(lo, sorted.end(), m);
    wins += static_cast<double>(sorted.end() - hi);
    ties += static_cast<double>(hi - lo);
  }
  return (wins + 0.5 * ties) /
         (static_cast<double>(members.size()) *
          static_cast<double>(nonmembers.size()));
}

namespace {

std::vector<double> scores(const Model& f, std::span<const Sequence> seqs,
                           std::size_t first_target) {
  std::vector<double> s;
  s.reserve(seqs.size());
  for (const auto& seq : seqs) s.push_back(sequence_nll(f, seq, first_target));
  return s;
}

}  // namespace

double mia_auc(const Model& f, std::span<const Sequence> members,
               std::span<const Sequence> nonmembers, std::size_t first_target) {
  if (members.empty() || nonmembers.empty()) {
    throw ValidationError("membership AUC needs non-empty member and "
                          "nonmember sets");
  }
  return auc_from_scores(scores(f, members, first_target),
                         scores(f, nonmembers, first_target));
}

double privleak_from_auc(double auc_un, double auc_retrain) {
  if (auc_retrain == 0.0) {
    throw NumericError("degenerate PrivLeak baseline: retrain AUC is 0");
  }
  return 100.0 * (auc_un - auc_retrain) / auc_retrain;
}

double privleak(const Model& f_un, const Model& f_retrain,
                std::span<const Sequence> forget,
                std::span<const Sequence> holdout, std::size_t first_target) {
  return privleak_from_auc(mia_auc(f_un, forget, holdout, first_target),
                           mia_auc(f_retrain, forget, holdout, first_target));
}

MetricsReport full_report(const Model& f, double retrain_auc,
                          const EvalData& data) {
  MetricsReport r;
  r.vermem = vermem(f, data.forget, data.prompt_len);
  r.knowmem_f = knowmem(f, data.qa_forget);
  r.knowmem_r = knowmem(f, data.qa_retain);
  r.auc = mia_auc(f, data.forget, data.holdout, data.first_target);
  r.privleak = privleak_from_auc(r.auc, retrain_auc);
  r.forget_acc = accuracy(f, data.forget_examples);
  r.retain_acc = accuracy(f, data.retain_examples);
  return r;
}

MetricsReport full_report(const Model& f, const Model& f_retrain,
                          const EvalData& data) {
  return full_report(
      f, mia_auc(f_retrain, data.forget, data.holdout, data.first_target),
      data);
}

std::string metrics_csv_header() {
  return "method,alpha,gamma,bits,M1,M2,M3,M4,forget_acc,retain_acc,seed\n";
}

std::string metrics_csv_row(const MetricsReport& r) {
  using detail::format_double;
  return r.method + "," + format_double(r.alpha) + "," +
         format_double(r.gamma) + "," +
         (r.bits == 0 ? std::string("fp") : std::to_string(r.bits)) + "," +
         format_double(r.vermem) + "," + format_double(r.knowmem_f) + "," +
         format_double(r.privleak) + "," + format_double(r.knowmem_r) + "," +
         format_double(r.forget_acc) + "," + format_double(r.retain_acc) +
         "," + std::to_string(r.seed) + "\n";
}

}  // namespace qunlearn
