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

#include "qunlearn/unlearn.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace qunlearn {

std::string to_string(Method method) {
  switch (method) {
    case Method::kGA: return "GA";
    case Method::kGAGDR: return "GA_GDR";
    case Method::kQuail: return "QUAIL";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  if (text == "GA") return Method::kGA;
  if (text == "GA_GDR") return Method::kGAGDR;
  if (text == "QUAIL") return Method::kQuail;
  throw ValidationError("unknown method '" + std::string(text) +
                        "' (expected GA, GA_GDR or QUAIL)");
}

namespace {

void check_run_config(const UnlearnConfig& c) {
  auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
  if (!finite_nonneg(c.alpha)) throw ValidationError("alpha must be >= 0");
  if (!finite_nonneg(c.gamma)) throw ValidationError("gamma must be >= 0");
  if (!finite_nonneg(c.retain_weight)) {
    throw ValidationError("retain_weight must be >= 0");
  }
  if (!finite_nonneg(c.weight_decay)) {
    throw ValidationError("weight_decay must be >= 0");
  }
  if (!(std::isfinite(c.delta_q) && c.delta_q > 0.0)) {
    throw ValidationError("delta_q must be > 0");
  }
  if (!(std::isfinite(c.lr) && c.lr > 0.0)) throw ValidationError("lr must be > 0");
  if (c.epochs < 1) throw ValidationError("epochs must be >= 1");
  if (c.batch_size == 0) throw ValidationError("batch_size must be >= 1");
}

}  // namespace

void UnlearnConfig::validate() const {
  check_run_config(*this);
  if (method == Method::kQuail && !(gamma > 0.0)) {
    throw ValidationError("QUAIL requires gamma > 0");
  }
}

HingeResult hinge_loss(const Vector& z_un, const Vector& z_target,
                       double delta_q) {
  if (z_un.size() != z_target.size()) {
    throw ValidationError("hinge_loss: logit lengths differ (" +
                          std::to_string(z_un.size()) + " vs " +
                          std::to_string(z_target.size()) + ")");
  }
  if (z_un.size() == 0) throw ValidationError("hinge_loss: empty logits");
  const double k = static_cast<double>(z_un.size());
  const double half = delta_q / 2.0;
  HingeResult r{0.0, Vector::Zero(z_un.size())};
  for (Eigen::Index i = 0; i < z_un.size(); ++i) {
    const double diff = z_un[i] - z_target[i];
    const double slack = half - std::abs(diff);
    if (slack > 0.0) {
      r.loss += slack;
      r.grad[i] = diff > 0.0 ? -1.0 / k : diff < 0.0 ? 1.0 / k : 0.0;
    }
  }
  r.loss /= k;
  return r;
}

Vector LogitCache::at(std::size_t i) const {
  if (i >= size()) throw ValidationError("logit cache index out of range");
  return logits_.row(static_cast<Eigen::Index>(i)).transpose();
}

LogitCache cache_target_logits(const Model& target,
                               std::span<const Example> forget) {
  if (forget.empty()) {
    return LogitCache(Matrix(0, static_cast<Eigen::Index>(
                                    target.config().num_outputs())));
  }
  return LogitCache(forward_batch(target, forget).logits);
}

double forget_objective(const Matrix& logits, std::span<const Example> batch,
                        const Matrix& cached, const UnlearnConfig& cfg,
                        Matrix& dlogits) {
  const double alpha = cfg.method == Method::kGA ? 1.0 : cfg.alpha;
  double nll = nll_and_dlogits(logits, batch, &dlogits);
  dlogits *= -alpha;
  double loss = -alpha * nll;
  if (cfg.method == Method::kQuail) {
    const double b = static_cast<double>(logits.rows());
    double hinge = 0.0;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      HingeResult h = hinge_loss(logits.row(r).transpose(),
                                 cached.row(r).transpose(), cfg.delta_q);
      hinge += h.loss;
      dlogits.row(r) += (cfg.gamma / b) * h.grad.transpose();
    }
    loss += cfg.gamma * hinge / b;
  }
  return loss;
}

EpochLog margin_diagnostics(const Model& f_un, const LogitCache& cache,
                            std::span<const Example> forget, double delta_q) {
  EpochLog e;
  if (forget.empty()) return e;
  if (cache.size() != forget.size()) {
    throw ValidationError("logit cache does not cover the forget set");
  }
  Matrix z = forward_batch(f_un, forget).logits;
  Matrix gap = (z - cache.logits()).cwiseAbs();
  const double n = static_cast<double>(gap.size());
  double hinge = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    hinge += hinge_loss(z.row(r).transpose(), cache.logits().row(r).transpose(),
                        delta_q)
                 .loss;
  }
  e.hinge_mean = hinge / static_cast<double>(z.rows());
  e.margin_satisfied_frac =
      static_cast<double>((gap.array() >= delta_q / 2.0).count()) / n;
  e.mean_logit_gap = gap.sum() / n;
  return e;
}

namespace {

double mean_nll(const Model& m, std::span<const Example> data) {
  if (data.empty()) return 0.0;
  auto v = example_nll(m, data);
  return std::accumulate(v.begin(), v.end(), 0.0) /
         static_cast<double>(v.size());
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  return order;
}

}  // namespace

UnlearnResult unlearn_run(const Model& target, const LogitCache& cache,
                          const UnlearnConfig& cfg,
                          std::span<const Example> forget,
                          std::span<const Example> retain, const Rng& rng) {
  check_run_config(cfg);
  if (forget.empty()) throw ValidationError("forget set must be non-empty");
  if (cache.size() != forget.size()) {
    throw ValidationError("logit cache does not cover the forget set");
  }
  const bool retain_phase = cfg.method != Method::kGA &&
                            cfg.retain_weight != 0.0 && !retain.empty();

  UnlearnResult out{target, {}};
  Model& m = out.model;
  AdamState state = AdamState::for_params(m.params());
  Rng forget_rng = rng.split("forget");
  Rng retain_rng = rng.split("retain");
  const auto k = static_cast<Eigen::Index>(m.config().num_outputs());

  std::vector<Example> batch;
  Matrix cached;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto step = [&](std::size_t batch_id, const LogitObjective& objective) {
      LossAndGrads lg;
      try {
        lg = objective_and_grads(m, batch, objective);
        adamw_step(m, state, lg.grads, cfg.lr, cfg.weight_decay);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batch_id));
      }
    };

    auto order = shuffled(forget.size(), forget_rng);
    for (std::size_t s = 0, id = 0; s < order.size(); s += cfg.batch_size, ++id) {
      std::size_t e = std::min(order.size(), s + cfg.batch_size);
      batch.clear();
      cached.resize(static_cast<Eigen::Index>(e - s), k);
      for (std::size_t i = s; i < e; ++i) {
        batch.push_back(forget[order[i]]);
        cached.row(static_cast<Eigen::Index>(i - s)) =
            cache.logits().row(static_cast<Eigen::Index>(order[i]));
      }
      step(id, [&](const Matrix& z, std::span<const Example> b, Matrix& dz) {
        return forget_objective(z, b, cached, cfg, dz);
      });
    }

    if (retain_phase) {
      order = shuffled(retain.size(), retain_rng);
      for (std::size_t s = 0, id = 0; s < order.size();
           s += cfg.batch_size, ++id) {
        std::size_t e = std::min(order.size(), s + cfg.batch_size);
        batch.clear();
        for (std::size_t i = s; i < e; ++i) batch.push_back(retain[order[i]]);
        step(id, [&](const Matrix& z, std::span<const Example> b, Matrix& dz) {
          double loss = nll_and_dlogits(z, b, &dz);
          dz *= cfg.retain_weight;
          return cfg.retain_weight * loss;
        });
      }
    }

    EpochLog log = margin_diagnostics(m, cache, forget, cfg.delta_q);
    log.epoch = epoch;
    log.forget_nll = mean_nll(m, forget);
    log.retain_nll = mean_nll(m, retain);
    out.log.push_back(log);
  }
  return out;
}

UnlearnResult unlearn_run(const Model& target, const UnlearnConfig& cfg,
                          std::span<const Example> forget,
                          std::span<const Example> retain, const Rng& rng) {
  return unlearn_run(target, cache_target_logits(target, forget), cfg, forget,
                     retain, rng);
}

LogitGap logit_gap_diagnostic(const Model& f_a, const Model& f_b,
                              std::span<const Example> examples) {
  if (!(f_a.config() == f_b.config())) {
    throw AlignmentError("logit gap requires models of the same config");
  }
  LogitGap g;
  if (examples.empty()) return g;
  Matrix gap = (forward_batch(f_a, examples).logits -
                forward_batch(f_b, examples).logits)
                   .cwiseAbs();
  for (Eigen::Index r = 0; r < gap.rows(); ++r) {
    g.mean_gap.push_back(gap.row(r).mean());
    g.min_gap.push_back(gap.row(r).minCoeff());
  }
  const double n = static_cast<double>(gap.rows());
  g.mean_of_mean = std::accumulate(g.mean_gap.begin(), g.mean_gap.end(), 0.0) / n;
  g.mean_of_min = std::accumulate(g.min_gap.begin(), g.min_gap.end(), 0.0) / n;
  return g;
}

std::string epoch_log_jsonl(std::span<const EpochLog> log) {
  std::string out;
  for (const auto& e : log) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["forget_nll"] = e.forget_nll;
    j["retain_nll"] = e.retain_nll;
    j["hinge_mean"] = e.hinge_mean;
    j["margin_satisfied_frac"] = e.margin_satisfied_frac;
    j["mean_logit_gap"] = e.mean_logit_gap;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace qunlearn
