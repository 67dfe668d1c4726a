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

// End-to-end checks on the default desk corpus. The trained pair is shared
// across cases.

#include <doctest.h>

#include "qunlearn/experiment.hpp"
#include "support.hpp"

using namespace qunlearn;

namespace {

const Prepared& desk() {
  static const Prepared p = prepare(ExperimentConfig{});
  return p;
}

double chance(const Prepared& p) {
  return 1.0 / static_cast<double>(p.cfg.model.vocab_size);
}

}  // namespace

TEST_CASE("target and retrain models") {
  const Prepared& p = desk();
  CHECK(accuracy(p.target, p.forget_examples) >= 0.9);
  CHECK(accuracy(p.target, p.retain_examples) >= 0.9);
  CHECK(accuracy(p.retrain, p.forget_examples) <= 2.0 * chance(p));
  CHECK(accuracy(p.retrain, p.retain_examples) >= 0.9);
  CHECK(p.target_log.epoch_loss.back() < p.target_log.epoch_loss.front());

  // Greedy decoding replays the memorized continuation.
  const Sequence& s = p.corpus.forget[3];
  const std::span<const TokenId> prompt(s.data(), 8);
  CHECK(generate_greedy(p.target, prompt, 8) == Sequence(s.begin() + 8, s.end()));

  Model q16 = dequantize_model(p.target, p.cfg.quant.at(16));
  CHECK(std::abs(accuracy(q16, p.retain_examples) -
                 accuracy(p.target, p.retain_examples)) <= 0.02);
  CHECK(std::abs(accuracy(q16, p.forget_examples) -
                 accuracy(p.target, p.forget_examples)) <= 0.02);
}

TEST_CASE("memorization metrics") {
  const Prepared& p = desk();
  CHECK(vermem(p.target, p.corpus.forget, p.cfg.prompt_len) >= 0.9);
  Model random = Model::initialized(p.cfg.model, Rng(99), p.cfg.init_scale);
  const double km_random = knowmem(random, p.corpus.qa_forget);
  CHECK(km_random <= 0.1);
  CHECK(knowmem(p.retrain, p.corpus.qa_forget) <= 2.0 * km_random);
  CHECK(knowmem(p.target, p.corpus.qa_forget) >= 0.9);

  CHECK(privleak(p.retrain, p.retrain, p.corpus.forget, p.corpus.holdout,
                 kFirstTarget) == 0.0);
  // Lower loss counts as membership, so a model that saw the forget set scores
  // a positive leak against the retrain baseline.
  const double leak = privleak(p.target, p.retrain, p.corpus.forget,
                               p.corpus.holdout, kFirstTarget);
  CHECK(leak >= 20.0);
}

TEST_CASE("gradient ascent") {
  const Prepared& p = desk();
  auto slow = run_grid_point(p, {Method::kGA, 1.0, 0.0});
  REQUIRE(slow.run.log.size() == 10);
  for (std::size_t i = 1; i < slow.run.log.size(); ++i) {
    CHECK(slow.run.log[i].forget_nll > slow.run.log[i - 1].forget_nll);
  }
  auto fast = run_grid_point(p, {Method::kGA, 1.0, 0.0}, 1e-3);
  CHECK(fast.metrics.front().bits == 0);
  CHECK(fast.metrics.front().vermem <= 0.1);
}

TEST_CASE("QUAIL margins grow") {
  const Prepared& p = desk();
  double best = 0.0;
  for (const GridPoint& pt : expand_grid(p.cfg.unlearn)) {
    if (pt.method != Method::kQuail) continue;
    auto o = run_grid_point(p, pt, 3e-5);
    for (std::size_t i = 1; i < o.run.log.size(); ++i) {
      CHECK(o.run.log[i].margin_satisfied_frac >=
            o.run.log[i - 1].margin_satisfied_frac);
    }
    best = std::max(best, o.run.log.back().margin_satisfied_frac);

    // Examples whose every coordinate clears the margin have min gap >= dq/2.
    auto gap = logit_gap_diagnostic(p.target, o.run.model, p.forget_examples);
    const Matrix z = forward_batch(o.run.model, p.forget_examples).logits;
    for (std::size_t i = 0; i < gap.min_gap.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const auto h = hinge_loss(z.row(row).transpose(), p.cache.at(i), 1.0);
      if (h.loss == 0.0) CHECK(gap.min_gap[i] >= 0.5);
    }
  }
  CHECK(best >= 0.9);
}

TEST_CASE("GA_GDR bucket analytics at the default rate") {
  const Prepared& p = desk();
  auto o = run_grid_point(p, {Method::kGAGDR, 1.0, 0.0});
  REQUIRE(o.overlap.size() == 3);
  CHECK(o.overlap[0].bits == 16);
  CHECK(o.overlap[2].bits == 4);
  CHECK(o.overlap[0].global_overlap < o.overlap[1].global_overlap);
  CHECK(o.overlap[1].global_overlap <= o.overlap[2].global_overlap);
  CHECK(o.overlap[2].global_overlap >= 0.99);
  // Every tensor lands in the top histogram bin at 4 bits.
  const auto& h = o.overlap[2].histogram;
  CHECK(h.back().count == o.overlap[2].per_tensor.size());

  // After 4-bit quantization the unlearned model sits as far from the target
  // as quantization alone puts the target itself.
  const QuantConfig c4 = p.cfg.quant.at(4);
  const auto grids = grids_for(p.target.params(), c4);
  const Model qt = dequantize_model(p.target, c4, grids);
  const Model qu = dequantize_model(o.run.model, c4, grids);
  const Model qu_own = dequantize_model(o.run.model, c4);
  const double baseline =
      logit_gap_diagnostic(p.target, qt, p.forget_examples).mean_of_mean;
  const double quantized =
      logit_gap_diagnostic(p.target, qu_own, p.forget_examples).mean_of_mean;
  const double pair = logit_gap_diagnostic(qt, qu, p.forget_examples).mean_of_mean;
  CHECK(std::abs(quantized - baseline) <= 0.05 * baseline);
  CHECK(pair < baseline);
}
