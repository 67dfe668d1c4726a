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

#include "qunlearn/model.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "qunlearn/detail/bytes.hpp"
#include "qunlearn/snapshot_io.hpp"

namespace qunlearn {

std::string to_string(Task task) {
  return task == Task::kNextToken ? "next-token" : "binary-classify";
}

Task parse_task(std::string_view text) {
  if (text == "next-token") return Task::kNextToken;
  if (text == "binary-classify") return Task::kBinaryClassify;
  throw ValidationError("unknown task '" + std::string(text) + "'");
}

void ModelConfig::validate() const {
  if (vocab_size < 2 || context == 0 || embed_dim == 0 || hidden_dim == 0) {
    throw ValidationError(
        "model config requires vocab_size >= 2 and positive context, "
        "embed_dim, hidden_dim");
  }
  if (vocab_size > (std::size_t{1} << 31)) {
    throw ValidationError("vocab_size too large");
  }
}

WeightSnapshot Model::zero_params(const ModelConfig& c) {
  c.validate();
  const std::size_t k = c.num_outputs();
  WeightSnapshot p;
  p.insert(std::string(kEmbed), Tensor({c.vocab_size, c.embed_dim}));
  p.insert(std::string(kW1), Tensor({c.context * c.embed_dim, c.hidden_dim}));
  p.insert(std::string(kB1), Tensor({c.hidden_dim}));
  p.insert(std::string(kW2), Tensor({c.hidden_dim, k}));
  p.insert(std::string(kB2), Tensor({k}));
  return p;
}

Model::Model(ModelConfig config)
    : config_(config), params_(zero_params(config)) {}

Model::Model(ModelConfig config, WeightSnapshot params)
    : config_(config), params_(std::move(params)) {
  require_aligned(zero_params(config_), params_);
  for (const auto& e : params_) {
    if (!e.tensor.all_finite()) {
      throw NumericError("parameter '" + e.name + "' is not finite");
    }
  }
}

Model Model::initialized(ModelConfig config, const Rng& rng,
                         double init_scale) {
  Model m(config);
  for (auto& [name, t] : m.params_) {
    if (name == kB1 || name == kB2) continue;
    Rng sub = rng.split(name);
    t = gauss_init(sub, t.shape(), init_scale);
  }
  return m;
}

std::vector<TokenId> make_window(std::span<const TokenId> history,
                                 std::size_t context) {
  std::vector<TokenId> w(context, kPadToken);
  std::size_t take = std::min(context, history.size());
  std::copy(history.end() - static_cast<std::ptrdiff_t>(take), history.end(),
            w.end() - static_cast<std::ptrdiff_t>(take));
  return w;
}

std::vector<Example> sequence_examples(std::span<const TokenId> seq,
                                       std::size_t first_target) {
  std::vector<Example> out;
  for (std::size_t t = std::max<std::size_t>(first_target, 1); t < seq.size();
       ++t) {
    out.push_back({std::vector<TokenId>(seq.begin(), seq.begin() +
                                                         static_cast<std::ptrdiff_t>(t)),
                   seq[t]});
  }
  return out;
}

namespace {

void check_tokens(const ModelConfig& c, std::span<const TokenId> tokens) {
  for (TokenId t : tokens) {
    if (t >= c.vocab_size) {
      throw ValidationError("token id " + std::to_string(t) +
                            " out of range for vocab_size " +
                            std::to_string(c.vocab_size));
    }
  }
}

}  // namespace

ForwardCache forward_batch(const Model& m, std::span<const Example> batch) {
  const auto& c = m.config();
  const auto& p = m.params();
  const auto B = static_cast<Eigen::Index>(batch.size());
  const auto d = static_cast<Eigen::Index>(c.embed_dim);
  const auto embed = p.at(Model::kEmbed).matrix();

  ForwardCache cache;
  cache.windows.reserve(batch.size());
  cache.inputs.resize(B, static_cast<Eigen::Index>(c.context) * d);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& ex = batch[static_cast<std::size_t>(b)];
    check_tokens(c, ex.tokens);
    cache.windows.push_back(make_window(ex.tokens, c.context));
    const auto& w = cache.windows.back();
    for (std::size_t pos = 0; pos < c.context; ++pos) {
      cache.inputs.block(b, static_cast<Eigen::Index>(pos) * d, 1, d) =
          embed.row(w[pos]);
    }
  }
  cache.hidden = ((cache.inputs * p.at(Model::kW1).matrix()).rowwise() +
                  p.at(Model::kB1).matrix().row(0))
                     .array()
                     .tanh()
                     .matrix();
  cache.logits = (cache.hidden * p.at(Model::kW2).matrix()).rowwise() +
                 p.at(Model::kB2).matrix().row(0);
  return cache;
}

Vector forward_logits(const Model& m, std::span<const TokenId> window) {
  Example ex{std::vector<TokenId>(window.begin(), window.end()), 0};
  return forward_batch(m, std::span<const Example>(&ex, 1))
      .logits.row(0)
      .transpose();
}

WeightSnapshot backward(const Model& m, const ForwardCache& cache,
                        const Matrix& dlogits) {
  const auto& c = m.config();
  const auto& p = m.params();
  const auto d = static_cast<Eigen::Index>(c.embed_dim);
  WeightSnapshot g = WeightSnapshot::zeros_like(p);

  g.at(Model::kW2).matrix().noalias() = cache.hidden.transpose() * dlogits;
  g.at(Model::kB2).matrix().row(0) = dlogits.colwise().sum();

  Matrix dpre = (dlogits * p.at(Model::kW2).matrix().transpose())
                    .cwiseProduct(
                        (1.0 - cache.hidden.array().square()).matrix());
  g.at(Model::kW1).matrix().noalias() = cache.inputs.transpose() * dpre;
  g.at(Model::kB1).matrix().row(0) = dpre.colwise().sum();

  Matrix dinputs = dpre * p.at(Model::kW1).matrix().transpose();
  auto dembed = g.at(Model::kEmbed).matrix();
  for (std::size_t b = 0; b < cache.windows.size(); ++b) {
    const auto& w = cache.windows[b];
    for (std::size_t pos = 0; pos < c.context; ++pos) {
      dembed.row(w[pos]) += dinputs.block(static_cast<Eigen::Index>(b),
                                          static_cast<Eigen::Index>(pos) * d,
                                          1, d);
    }
  }
  return g;
}

Vector softmax(const Vector& z) {
  Vector e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

double nll_and_dlogits(const Matrix& logits, std::span<const Example> batch,
                       Matrix* dlogits) {
  const auto B = logits.rows();
  const auto K = logits.cols();
  if (dlogits) dlogits->resize(B, K);
  double total = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    const TokenId y = batch[static_cast<std::size_t>(b)].label;
    if (y >= static_cast<TokenId>(K)) {
      throw ValidationError("label " + std::to_string(y) +
                            " out of range for " + std::to_string(K) +
                            " outputs");
    }
    const double mx = logits.row(b).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(b).array() - mx).exp();
    const double sum = e.sum();
    total += std::log(sum) + mx - logits(b, y);
    if (dlogits) {
      dlogits->row(b) = e / sum;
      (*dlogits)(b, y) -= 1.0;
    }
  }
  if (dlogits) *dlogits /= static_cast<double>(B);
  return total / static_cast<double>(B);
}

LossAndGrads objective_and_grads(const Model& m,
                                 std::span<const Example> batch,
                                 const LogitObjective& objective) {
  if (batch.empty()) throw ValidationError("batch must be non-empty");
  ForwardCache cache = forward_batch(m, batch);
  Matrix dlogits = Matrix::Zero(cache.logits.rows(), cache.logits.cols());
  double loss = objective(cache.logits, batch, dlogits);
  if (!std::isfinite(loss)) throw NumericError("non-finite loss");
  return {loss, backward(m, cache, dlogits)};
}

LossAndGrads loss_and_grads(const Model& m, std::span<const Example> batch,
                            LossSign sign) {
  const double s = static_cast<double>(static_cast<int>(sign));
  return objective_and_grads(
      m, batch,
      [s](const Matrix& logits, std::span<const Example> b, Matrix& dz) {
        double loss = nll_and_dlogits(logits, b, &dz);
        dz *= s;
        return loss;
      });
}

AdamState AdamState::for_params(const WeightSnapshot& params) {
  return {WeightSnapshot::zeros_like(params),
          WeightSnapshot::zeros_like(params), 0};
}

void adamw_step(Model& m, AdamState& state, const WeightSnapshot& grads,
                double lr, double weight_decay, const AdamOptions& opt) {
  auto& params = m.params();
  require_aligned(params, grads);
  require_aligned(params, state.m);
  require_aligned(params, state.v);
  for (const auto& [name, g] : grads) {
    if (!g.all_finite()) {
      throw NumericError("non-finite gradient in tensor '" + name + "'");
    }
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(opt.beta1, t);
  const double bc2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].tensor.data();
    const auto& g = grads[i].tensor.data();
    auto& mom = state.m[i].tensor.data();
    auto& vel = state.v[i].tensor.data();
    if (weight_decay != 0.0) w *= (1.0 - lr * weight_decay);
    mom = opt.beta1 * mom + (1.0 - opt.beta1) * g;
    vel = opt.beta2 * vel + (1.0 - opt.beta2) * g.cwiseProduct(g);
    w.array() -= lr * (mom.array() / bc1) /
                 ((vel.array() / bc2).sqrt() + opt.eps);
  }
}

TrainLog train(Model& m, std::span<const Example> data,
               const TrainOptions& options, Rng& rng) {
  if (data.empty()) throw ValidationError("training data must be non-empty");
  if (options.epochs < 1) throw ValidationError("epochs must be >= 1");
  if (options.batch_size == 0) throw ValidationError("batch_size must be >= 1");
  if (!(options.lr > 0.0)) throw ValidationError("lr must be positive");

  AdamState state = AdamState::for_params(m.params());
  std::vector<std::size_t> order(data.size());
  std::vector<Example> batch;
  TrainLog log;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    double sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += options.batch_size) {
      std::size_t end = std::min(order.size(), start + options.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
      auto lg = loss_and_grads(m, batch, LossSign::kDescent);
      sum += lg.loss * static_cast<double>(batch.size());
      adamw_step(m, state, lg.grads, options.lr, options.weight_decay);
    }
    log.epoch_loss.push_back(sum / static_cast<double>(data.size()));
  }
  return log;
}

Model train_retrain(const ModelConfig& config, std::span<const Example> retain,
                    const TrainOptions& options, double init_scale,
                    const Rng& rng) {
  Model m = Model::initialized(config, rng.split("init"), init_scale);
  Rng shuffle = rng.split("train");
  train(m, retain, options, shuffle);
  return m;
}

std::vector<TokenId> generate_greedy(const Model& m,
                                     std::span<const TokenId> prompt,
                                     std::size_t n) {
  std::vector<TokenId> history(prompt.begin(), prompt.end());
  std::vector<TokenId> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vector z = forward_logits(m, make_window(history, m.config().context));
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < z.size(); ++k) {
      if (z[k] > z[best]) best = k;
    }
    out.push_back(static_cast<TokenId>(best));
    history.push_back(static_cast<TokenId>(best));
  }
  return out;
}

namespace {

constexpr std::size_t kEvalChunk = 256;

template <typename Fn>
void for_each_chunk(std::span<const Example> data, Fn&& fn) {
  for (std::size_t s = 0; s < data.size(); s += kEvalChunk) {
    fn(data.subspan(s, std::min(kEvalChunk, data.size() - s)), s);
  }
}

}  // namespace

double accuracy(const Model& m, std::span<const Example> data) {
  if (data.empty()) throw ValidationError("accuracy of an empty set");
  std::size_t correct = 0;
  for_each_chunk(data, [&](std::span<const Example> chunk, std::size_t) {
    Matrix z = forward_batch(m, chunk).logits;
    for (Eigen::Index b = 0; b < z.rows(); ++b) {
      Eigen::Index best = 0;
      for (Eigen::Index k = 1; k < z.cols(); ++k) {
        if (z(b, k) > z(b, best)) best = k;
      }
      if (static_cast<TokenId>(best) == chunk[static_cast<std::size_t>(b)].label) {
        ++correct;
      }
    }
  });
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::vector<double> example_nll(const Model& m, std::span<const Example> data) {
  std::vector<double> out(data.size());
  for_each_chunk(data, [&](std::span<const Example> chunk, std::size_t at) {
    Matrix z = forward_batch(m, chunk).logits;
    for (Eigen::Index b = 0; b < z.rows(); ++b) {
      out[at + static_cast<std::size_t>(b)] = nll_and_dlogits(
          z.row(b), chunk.subspan(static_cast<std::size_t>(b), 1), nullptr);
    }
  });
  return out;
}

std::string config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["vocab_size"] = c.vocab_size;
  j["context"] = c.context;
  j["embed_dim"] = c.embed_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["task"] = to_string(c.task);
  return j.dump(2) + "\n";
}

ModelConfig config_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model config JSON: ") + e.what());
  }
  ModelConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "vocab_size") c.vocab_size = value.get<std::size_t>();
      else if (key == "context") c.context = value.get<std::size_t>();
      else if (key == "embed_dim") c.embed_dim = value.get<std::size_t>();
      else if (key == "hidden_dim") c.hidden_dim = value.get<std::size_t>();
      else if (key == "task") c.task = parse_task(value.get<std::string>());
      else throw ValidationError("unknown model config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model config JSON: ") + e.what());
  }
  c.validate();
  return c;
}

std::string sidecar_path(const std::string& snapshot_path) {
  return std::filesystem::path(snapshot_path).replace_extension(".json").string();
}

void save_model(const Model& m, const std::string& snapshot_path) {
  save_snapshot(m.params(), snapshot_path);
  detail::write_file(sidecar_path(snapshot_path), config_to_json(m.config()));
}

Model load_model(const std::string& snapshot_path) {
  ModelConfig c =
      config_from_json(detail::read_file(sidecar_path(snapshot_path)));
  return Model(c, load_snapshot(snapshot_path));
}

}  // namespace qunlearn
