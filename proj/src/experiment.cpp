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

#include "qunlearn/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <thread>

#include "qunlearn/detail/bytes.hpp"
#include "qunlearn/detail/format.hpp"
#include "qunlearn/snapshot_io.hpp"

namespace qunlearn {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
using detail::format_double;

QuantConfig QuantSection::at(int b) const {
  QuantConfig q;
  q.bits = b;
  q.range_mode = range_mode;
  q.symmetric = symmetric;
  q.exempt_embeddings = exempt_embeddings;
  q.identity_on_degenerate = true;
  return q;
}

void ExperimentConfig::validate() const {
  model.validate();
  if (model.task != Task::kNextToken) {
    throw ValidationError("model.task must be next-token for the experiment");
  }
  if (!(init_scale > 0.0)) throw ValidationError("model.init_scale must be > 0");
  corpus.validate(model.vocab_size);
  if (prompt_len == 0 || prompt_len >= corpus.length) {
    throw ValidationError("eval.prompt_len must be in [1, corpus.length)");
  }
  if (pretrain.epochs < 1) throw ValidationError("pretrain.epochs must be >= 1");
  if (!(pretrain.lr > 0.0)) throw ValidationError("pretrain.lr must be > 0");
  if (pretrain.batch_size == 0) {
    throw ValidationError("pretrain.batch_size must be >= 1");
  }
  if (unlearn.methods.empty()) throw ValidationError("unlearn.methods is empty");
  bool needs_alpha = false;
  bool needs_gamma = false;
  for (Method m : unlearn.methods) {
    needs_alpha |= m != Method::kGA;
    needs_gamma |= m == Method::kQuail;
  }
  if (needs_alpha && unlearn.alphas.empty()) {
    throw ValidationError("unlearn.alphas is empty");
  }
  if (needs_gamma && unlearn.gammas.empty()) {
    throw ValidationError("unlearn.gammas is empty");
  }
  for (const auto& p : expand_grid(unlearn)) p.config(unlearn.base).validate();
  for (double lr : lr_sweep) {
    if (!(lr > 0.0)) throw ValidationError("lr_sweep entries must be > 0");
  }
  if (quant.bits.empty()) throw ValidationError("quant.bits is empty");
  for (int b : quant.bits) quant.at(b).validate();
  if (jobs < 1) throw ValidationError("jobs must be >= 1");
}

namespace {

[[noreturn]] void bad(std::string_view where, std::string_view what) {
  throw ValidationError("config " + std::string(where) + ": " +
                        std::string(what));
}

void check_keys(const json& j, std::string_view where,
                std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) bad(where, "expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      bad(where, "unknown key '" + key + "'");
    }
  }
}

std::string path_of(std::string_view where, std::string_view key) {
  return where.empty() ? std::string(key)
                       : std::string(where) + "." + std::string(key);
}

std::uint64_t as_u64(const json& v, const std::string& where) {
  if (!v.is_number_unsigned()) bad(where, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

std::size_t as_size(const json& v, const std::string& where) {
  return static_cast<std::size_t>(as_u64(v, where));
}

int as_int(const json& v, const std::string& where) {
  if (!v.is_number_integer()) bad(where, "expected an integer");
  auto x = v.get<std::int64_t>();
  if (x < -(1 << 30) || x > (1 << 30)) bad(where, "integer out of range");
  return static_cast<int>(x);
}

double as_double(const json& v, const std::string& where) {
  if (!v.is_number()) bad(where, "expected a number");
  return v.get<double>();
}

bool as_bool(const json& v, const std::string& where) {
  if (!v.is_boolean()) bad(where, "expected true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& where) {
  if (!v.is_string()) bad(where, "expected a string");
  return v.get<std::string>();
}

template <typename F>
auto as_list(const json& v, const std::string& where, F&& item) {
  if (!v.is_array()) bad(where, "expected an array");
  std::vector<decltype(item(v, where))> out;
  for (const auto& x : v) out.push_back(item(x, where + "[]"));
  return out;
}

template <typename F>
void each(const json& j, std::string_view where,
          std::initializer_list<std::string_view> allowed, F&& fn) {
  check_keys(j, where, allowed);
  for (const auto& [key, value] : j.items()) fn(key, value, path_of(where, key));
}

}  // namespace

ExperimentConfig experiment_config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  each(j, "",
       {"seed", "model", "corpus", "pretrain", "unlearn", "lr_sweep", "quant",
        "eval", "classify_track", "jobs", "out"},
       [&](const std::string& k, const json& v, const std::string& w) {
         if (k == "seed") c.seed = as_u64(v, w);
         else if (k == "lr_sweep") c.lr_sweep = as_list(v, w, as_double);
         else if (k == "classify_track") c.classify_track = as_bool(v, w);
         else if (k == "jobs") c.jobs = as_int(v, w);
         else if (k == "out") c.out = as_string(v, w);
         else if (k == "model") {
           each(v, w,
                {"vocab_size", "context", "embed_dim", "hidden_dim",
                 "init_scale"},
                [&](const std::string& k2, const json& v2, const std::string& w2) {
                  if (k2 == "vocab_size") c.model.vocab_size = as_size(v2, w2);
                  else if (k2 == "context") c.model.context = as_size(v2, w2);
                  else if (k2 == "embed_dim") c.model.embed_dim = as_size(v2, w2);
                  else if (k2 == "hidden_dim") c.model.hidden_dim = as_size(v2, w2);
                  else c.init_scale = as_double(v2, w2);
                });
         } else if (k == "corpus") {
           each(v, w,
                {"forget", "retain", "holdout", "length", "classify_forget",
                 "classify_retain"},
                [&](const std::string& k2, const json& v2, const std::string& w2) {
                  std::size_t n = as_size(v2, w2);
                  if (k2 == "forget") c.corpus.forget = n;
                  else if (k2 == "retain") c.corpus.retain = n;
                  else if (k2 == "holdout") c.corpus.holdout = n;
                  else if (k2 == "length") c.corpus.length = n;
                  else if (k2 == "classify_forget") c.corpus.classify_forget = n;
                  else c.corpus.classify_retain = n;
                });
         } else if (k == "pretrain") {
           each(v, w, {"epochs", "lr", "batch_size", "weight_decay"},
                [&](const std::string& k2, const json& v2, const std::string& w2) {
                  if (k2 == "epochs") c.pretrain.epochs = as_int(v2, w2);
                  else if (k2 == "lr") c.pretrain.lr = as_double(v2, w2);
                  else if (k2 == "batch_size") c.pretrain.batch_size = as_size(v2, w2);
                  else c.pretrain.weight_decay = as_double(v2, w2);
                });
         } else if (k == "unlearn") {
           auto& u = c.unlearn;
           each(v, w,
                {"methods", "alphas", "gammas", "lr", "epochs", "batch_size",
                 "delta_q", "retain_weight", "weight_decay"},
                [&](const std::string& k2, const json& v2, const std::string& w2) {
                  if (k2 == "methods") {
                    u.methods = as_list(v2, w2, [](const json& x, const std::string& wx) {
                      return parse_method(as_string(x, wx));
                    });
                  } else if (k2 == "alphas") u.alphas = as_list(v2, w2, as_double);
                  else if (k2 == "gammas") u.gammas = as_list(v2, w2, as_double);
                  else if (k2 == "lr") u.base.lr = as_double(v2, w2);
                  else if (k2 == "epochs") u.base.epochs = as_int(v2, w2);
                  else if (k2 == "batch_size") u.base.batch_size = as_size(v2, w2);
                  else if (k2 == "delta_q") u.base.delta_q = as_double(v2, w2);
                  else if (k2 == "retain_weight") u.base.retain_weight = as_double(v2, w2);
                  else u.base.weight_decay = as_double(v2, w2);
                });
         } else if (k == "quant") {
           each(v, w, {"bits", "range_mode", "symmetric", "exempt_embeddings"},
                [&](const std::string& k2, const json& v2, const std::string& w2) {
                  if (k2 == "bits") c.quant.bits = as_list(v2, w2, as_int);
                  else if (k2 == "range_mode") {
                    c.quant.range_mode = parse_range_mode(as_string(v2, w2));
                  } else if (k2 == "symmetric") c.quant.symmetric = as_bool(v2, w2);
                  else c.quant.exempt_embeddings = as_bool(v2, w2);
                });
         } else {
           each(v, w, {"prompt_len"},
                [&](const std::string&, const json& v2, const std::string& w2) {
                  c.prompt_len = as_size(v2, w2);
                });
         }
       });
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return experiment_config_from_json(detail::read_file(path));
}

namespace {

ojson config_json(const ExperimentConfig& c, bool with_runtime) {
  ojson j;
  j["seed"] = c.seed;
  j["model"] = {{"vocab_size", c.model.vocab_size},
                {"context", c.model.context},
                {"embed_dim", c.model.embed_dim},
                {"hidden_dim", c.model.hidden_dim},
                {"init_scale", c.init_scale}};
  j["corpus"] = {{"forget", c.corpus.forget},
                 {"retain", c.corpus.retain},
                 {"holdout", c.corpus.holdout},
                 {"length", c.corpus.length},
                 {"classify_forget", c.corpus.classify_forget},
                 {"classify_retain", c.corpus.classify_retain}};
  j["pretrain"] = {{"epochs", c.pretrain.epochs},
                   {"lr", c.pretrain.lr},
                   {"batch_size", c.pretrain.batch_size},
                   {"weight_decay", c.pretrain.weight_decay}};
  auto methods = ojson::array();
  for (Method m : c.unlearn.methods) methods.push_back(to_string(m));
  const auto& b = c.unlearn.base;
  j["unlearn"] = {{"methods", methods},
                  {"alphas", c.unlearn.alphas},
                  {"gammas", c.unlearn.gammas},
                  {"lr", b.lr},
                  {"epochs", b.epochs},
                  {"batch_size", b.batch_size},
                  {"delta_q", b.delta_q},
                  {"retain_weight", b.retain_weight},
                  {"weight_decay", b.weight_decay}};
  j["lr_sweep"] = c.lr_sweep;
  j["quant"] = {{"bits", c.quant.bits},
                {"range_mode", to_string(c.quant.range_mode)},
                {"symmetric", c.quant.symmetric},
                {"exempt_embeddings", c.quant.exempt_embeddings}};
  j["eval"] = {{"prompt_len", c.prompt_len}};
  j["classify_track"] = c.classify_track;
  if (with_runtime) {
    j["jobs"] = c.jobs;
    j["out"] = c.out;
  }
  return j;
}

}  // namespace

std::string experiment_config_to_json(const ExperimentConfig& cfg,
                                      bool with_runtime) {
  return config_json(cfg, with_runtime).dump(2) + "\n";
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
  return content_hash(experiment_config_to_json(cfg, false)).substr(0, 12);
}

std::string GridPoint::label() const {
  switch (method) {
    case Method::kGA: return "GA";
    case Method::kGAGDR: return "GA_GDR_a" + format_double(alpha);
    case Method::kQuail:
      return "QUAIL_a" + format_double(alpha) + "_g" + format_double(gamma);
  }
  return "?";
}

UnlearnConfig GridPoint::config(const UnlearnConfig& base) const {
  UnlearnConfig c = base;
  c.method = method;
  c.alpha = method == Method::kGA ? 1.0 : alpha;
  c.gamma = method == Method::kQuail ? gamma : 0.0;
  return c;
}

std::vector<GridPoint> expand_grid(const UnlearnGrid& grid) {
  std::vector<GridPoint> out;
  for (Method m : grid.methods) {
    if (m == Method::kGA) {
      out.push_back({m, 1.0, 0.0});
    } else if (m == Method::kGAGDR) {
      for (double a : grid.alphas) out.push_back({m, a, 0.0});
    } else {
      for (double a : grid.alphas) {
        for (double g : grid.gammas) out.push_back({m, a, g});
      }
    }
  }
  return out;
}

namespace {

template <typename F>
auto stage(std::string_view name, const std::string& fingerprint, F&& fn) {
  auto where = [&](const std::exception& e) {
    return "stage '" + std::string(name) + "' (config " + fingerprint +
           "): " + e.what();
  };
  try {
    return fn();
  } catch (const IoError& e) {
    throw IoError(where(e));
  } catch (const ValidationError& e) {
    throw ValidationError(where(e));
  } catch (const NumericError& e) {
    throw NumericError(where(e));
  }
}

std::vector<Example> concat(std::span<const Example> a,
                            std::span<const Example> b) {
  std::vector<Example> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

EvalData Prepared::eval_data() const {
  EvalData d;
  d.forget = corpus.forget;
  d.holdout = corpus.holdout;
  d.qa_forget = corpus.qa_forget;
  d.qa_retain = corpus.qa_retain;
  d.forget_examples = forget_examples;
  d.retain_examples = retain_examples;
  d.prompt_len = cfg.prompt_len;
  d.first_target = kFirstTarget;
  return d;
}

Prepared prepare(const ExperimentConfig& cfg) {
  cfg.validate();
  const Rng root(cfg.seed);
  SynthCorpus corpus = synth_corpus(cfg.corpus, cfg.model.vocab_size,
                                    cfg.model.context, root.split("corpus"));
  auto forget = to_examples(corpus.forget);
  auto retain = to_examples(corpus.retain);
  auto all = concat(forget, retain);

  Model target = Model::initialized(cfg.model, root.split("init"), cfg.init_scale);
  Rng shuffle = root.split("train");
  TrainLog target_log = train(target, all, cfg.pretrain, shuffle);

  const Rng retrain_rng = root.split("retrain");
  Model retrain = Model::initialized(cfg.model, retrain_rng.split("init"),
                                     cfg.init_scale);
  Rng retrain_shuffle = retrain_rng.split("train");
  TrainLog retrain_log = train(retrain, retain, cfg.pretrain, retrain_shuffle);

  Prepared p{cfg,
             std::move(corpus),
             std::move(forget),
             std::move(retain),
             std::move(all),
             std::move(target),
             std::move(retrain),
             std::move(target_log),
             std::move(retrain_log),
             0.0,
             {}};
  p.retrain_auc =
      mia_auc(p.retrain, p.corpus.forget, p.corpus.holdout, kFirstTarget);
  p.cache = cache_target_logits(p.target, p.forget_examples);
  return p;
}

std::vector<MetricsReport> evaluate_model(const Prepared& p, const Model& m,
                                          const std::string& method,
                                          double alpha, double gamma) {
  const EvalData data = p.eval_data();
  std::vector<MetricsReport> out;
  auto add = [&](const Model& model, int bits) {
    MetricsReport r = full_report(model, p.retrain_auc, data);
    r.method = method;
    r.alpha = alpha;
    r.gamma = gamma;
    r.bits = bits;
    r.seed = p.cfg.seed;
    out.push_back(std::move(r));
  };
  add(m, 0);
  for (int b : p.cfg.quant.bits) add(dequantize_model(m, p.cfg.quant.at(b)), b);
  return out;
}

GridOutcome run_grid_point(const Prepared& p, const GridPoint& point,
                           std::optional<double> lr) {
  UnlearnConfig cfg = point.config(p.cfg.unlearn.base);
  std::string label = "unlearn/" + point.label();
  if (lr) {
    cfg.lr = *lr;
    label += "/lr=" + format_double(*lr);
  }
  const Rng rng = Rng(p.cfg.seed).split(label);
  GridOutcome o{point,
                unlearn_run(p.target, p.cache, cfg, p.forget_examples,
                            p.retain_examples, rng),
                {},
                {},
                {}};
  o.delta = delta_stats(p.target.params(), o.run.model.params());
  o.overlap = bit_sweep(p.target.params(), o.run.model.params(),
                        p.cfg.quant.bits, p.cfg.quant.at(p.cfg.quant.bits[0]));
  o.metrics = evaluate_model(p, o.run.model, to_string(point.method),
                             point.alpha, point.gamma);
  return o;
}

namespace {

ojson metrics_json(const MetricsReport& r) {
  ojson j;
  j["bits"] = r.bits == 0 ? ojson("fp") : ojson(r.bits);
  j["M1"] = r.vermem;
  j["M2"] = r.knowmem_f;
  j["M3"] = r.privleak;
  j["M4"] = r.knowmem_r;
  j["forget_acc"] = r.forget_acc;
  j["retain_acc"] = r.retain_acc;
  j["auc"] = r.auc;
  return j;
}

ojson metrics_list(std::span<const MetricsReport> rs) {
  auto a = ojson::array();
  for (const auto& r : rs) a.push_back(metrics_json(r));
  return a;
}

ojson delta_json(const DeltaStats& s) {
  ojson j;
  j["count"] = s.count;
  j["mean_abs"] = s.mean_abs;
  j["max_abs"] = s.max_abs;
  j["exact_match_fraction"] = s.exact_match_fraction;
  for (const auto& [q, v] : s.quantiles) j["q" + format_double(q)] = v;
  return j;
}

ojson overlap_summary(std::span<const OverlapReport> rs) {
  auto a = ojson::array();
  for (const auto& r : rs) {
    a.push_back({{"bits", r.bits},
                 {"delta", r.delta},
                 {"global_overlap", r.global_overlap},
                 {"tensorwise_overlap", r.tensorwise_overlap},
                 {"hamming_fraction", r.hamming_fraction}});
  }
  return a;
}

ojson epoch_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"forget_nll", e.forget_nll},
          {"retain_nll", e.retain_nll},
          {"hinge_mean", e.hinge_mean},
          {"margin_satisfied_frac", e.margin_satisfied_frac},
          {"mean_logit_gap", e.mean_logit_gap}};
}

const MetricsReport& at_bits(std::span<const MetricsReport> rs, int bits) {
  for (const auto& r : rs) {
    if (r.bits == bits) return r;
  }
  throw ValidationError("no metrics at " + std::to_string(bits) + " bits");
}

class OutDir {
 public:
  explicit OutDir(std::filesystem::path root) : root_(std::move(root)) {
    for (const char* sub : {"", "unlearned", "logs", "analytics"}) {
      std::error_code ec;
      std::filesystem::create_directories(root_ / sub, ec);
      if (ec) {
        throw IoError("cannot create '" + (root_ / sub).string() +
                      "': " + ec.message());
      }
    }
  }
  std::string path(const std::string& rel) const { return (root_ / rel).string(); }
  void write(const std::string& rel, std::string_view bytes) const {
    detail::write_file(path(rel), bytes);
  }
  /// Saves model + sidecar; returns the snapshot's content hash.
  std::string save(const std::string& rel, const Model& m) const {
    std::string bytes = encode_snapshot(m.params());
    write(rel, bytes);
    detail::write_file(sidecar_path(path(rel)), config_to_json(m.config()));
    return content_hash(bytes);
  }

 private:
  std::filesystem::path root_;
};

template <typename T, typename F>
std::vector<T> parallel_map(std::size_t n, int jobs, F&& fn) {
  std::vector<std::optional<T>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::max(1, jobs));
  if (threads == 1 || n <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<T> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

struct ClassifyOutcome {
  std::vector<MetricsReport> target;
  std::vector<MetricsReport> retrain;
  std::vector<std::pair<std::string, std::vector<MetricsReport>>> grid;
};

// Accuracy-only reports: forget accuracy doubles as the M1 analogue and
// retain accuracy as the M4 analogue.
ClassifyOutcome run_classify(const ExperimentConfig& cfg,
                             const SynthCorpus& corpus,
                             std::span<const GridPoint> grid) {
  ModelConfig mc = cfg.model;
  mc.task = Task::kBinaryClassify;
  const Rng root = Rng(cfg.seed).split("classify");
  const auto& f = corpus.classify_forget;
  const auto& r = corpus.classify_retain;
  auto all = concat(f, r);

  auto reports = [&](const Model& m, const std::string& method, double a,
                     double g) {
    std::vector<MetricsReport> out;
    auto add = [&](const Model& model, int bits) {
      MetricsReport rep;
      rep.method = method;
      rep.alpha = a;
      rep.gamma = g;
      rep.bits = bits;
      rep.seed = cfg.seed;
      rep.forget_acc = accuracy(model, f);
      rep.retain_acc = accuracy(model, r);
      rep.vermem = rep.forget_acc;
      rep.knowmem_r = rep.retain_acc;
      out.push_back(rep);
    };
    add(m, 0);
    for (int b : cfg.quant.bits) add(dequantize_model(m, cfg.quant.at(b)), b);
    return out;
  };

  Model target = Model::initialized(mc, root.split("init"), cfg.init_scale);
  Rng shuffle = root.split("train");
  train(target, all, cfg.pretrain, shuffle);
  Model retrain = train_retrain(mc, r, cfg.pretrain, cfg.init_scale,
                                root.split("retrain"));
  ClassifyOutcome out;
  out.target = reports(target, "target", 0.0, 0.0);
  out.retrain = reports(retrain, "retrain", 0.0, 0.0);
  LogitCache cache = cache_target_logits(target, f);
  auto results = parallel_map<std::vector<MetricsReport>>(
      grid.size(), cfg.jobs, [&](std::size_t i) {
        const auto& pt = grid[i];
        auto run = unlearn_run(target, cache, pt.config(cfg.unlearn.base), f, r,
                               root.split("unlearn/" + pt.label()));
        return reports(run.model, to_string(pt.method), pt.alpha, pt.gamma);
      });
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out.grid.emplace_back(grid[i].label(), std::move(results[i]));
  }
  return out;
}

std::string classify_csv_row(const MetricsReport& r) {
  return r.method + "," + format_double(r.alpha) + "," +
         format_double(r.gamma) + "," +
         (r.bits == 0 ? std::string("fp") : std::to_string(r.bits)) + "," +
         format_double(r.forget_acc) + ",,," + format_double(r.retain_acc) +
         "," + format_double(r.forget_acc) + "," + format_double(r.retain_acc) +
         "," + std::to_string(r.seed) + "\n";
}

}  // namespace

std::string run_experiment(const ExperimentConfig& cfg) {
  const std::string fp = config_fingerprint(cfg);
  stage("config", fp, [&] { cfg.validate(); return 0; });
  const OutDir out = stage("output", fp, [&] { return OutDir(cfg.out); });

  Prepared p = stage("pretrain", fp, [&] { return prepare(cfg); });
  const auto grid = expand_grid(cfg.unlearn);
  const int low_bits = *std::min_element(cfg.quant.bits.begin(), cfg.quant.bits.end());

  ojson summary;
  summary["tool"] = kToolName;
  summary["version"] = kToolVersion;
  summary["fingerprint"] = fp;
  summary["config"] = config_json(cfg, false);

  ojson hashes;
  stage("write-models", fp, [&] {
    out.write("corpus.json", corpus_to_json(p.corpus, cfg.model.vocab_size));
    hashes["target"] = out.save("target.qsnp", p.target);
    hashes["retrain"] = out.save("retrain.qsnp", p.retrain);
    std::string log;
    for (std::size_t e = 0; e < p.target_log.epoch_loss.size(); ++e) {
      log += ojson({{"epoch", e + 1},
                    {"target_loss", p.target_log.epoch_loss[e]},
                    {"retrain_loss", p.retrain_log.epoch_loss[e]}})
                 .dump() +
             "\n";
    }
    out.write("logs/pretrain.jsonl", log);
    return 0;
  });

  auto target_metrics = stage("evaluate-reference", fp, [&] {
    return evaluate_model(p, p.target, "target", 0.0, 0.0);
  });
  auto retrain_metrics = stage("evaluate-reference", fp, [&] {
    return evaluate_model(p, p.retrain, "retrain", 0.0, 0.0);
  });

  auto outcomes = stage("unlearn-grid", fp, [&] {
    return parallel_map<GridOutcome>(grid.size(), cfg.jobs, [&](std::size_t i) {
      return run_grid_point(p, grid[i]);
    });
  });

  std::string metrics_csv = metrics_csv_header();
  for (const auto& r : target_metrics) metrics_csv += metrics_csv_row(r);
  for (const auto& r : retrain_metrics) metrics_csv += metrics_csv_row(r);

  auto grid_json = ojson::array();
  stage("write-grid", fp, [&] {
    for (const auto& o : outcomes) {
      const std::string label = o.point.label();
      hashes[label] = out.save("unlearned/" + label + ".qsnp", o.run.model);
      out.write("logs/" + label + ".jsonl", epoch_log_jsonl(o.run.log));
      out.write("analytics/" + label + "_overlap.csv", overlap_csv(o.overlap));
      out.write("analytics/" + label + "_overlap.json",
                overlap_json(o.overlap, o.delta));
      for (const auto& r : o.metrics) metrics_csv += metrics_csv_row(r);
      grid_json.push_back({{"label", label},
                           {"method", to_string(o.point.method)},
                           {"alpha", o.point.alpha},
                           {"gamma", o.point.gamma},
                           {"delta_stats", delta_json(o.delta)},
                           {"overlap", overlap_summary(o.overlap)},
                           {"final_epoch", epoch_json(o.run.log.back())},
                           {"metrics", metrics_list(o.metrics)}});
    }
    out.write("metrics.csv", metrics_csv);
    return 0;
  });

  // Recommended point: lowest low-bit M1 among points keeping full-precision
  // M4 at >= 0.8 of the target's.
  const double target_m4 = at_bits(target_metrics, 0).knowmem_r;
  ojson recommended = nullptr;
  double best = 0.0;
  for (const auto& o : outcomes) {
    const double m4 = at_bits(o.metrics, 0).knowmem_r;
    const double m1 = at_bits(o.metrics, low_bits).vermem;
    if (m4 >= 0.8 * target_m4 && (recommended.is_null() || m1 < best)) {
      best = m1;
      recommended = {{"label", o.point.label()},
                     {"bits", low_bits},
                     {"M1", m1},
                     {"M4_fp", m4},
                     {"target_M4_fp", target_m4}};
    }
  }

  auto sweep_json = ojson::array();
  if (!cfg.lr_sweep.empty()) {
    const GridPoint pt{Method::kGAGDR,
                       cfg.unlearn.alphas.empty() ? 1.0 : cfg.unlearn.alphas[0],
                       0.0};
    auto sweeps = stage("lr-sweep", fp, [&] {
      return parallel_map<GridOutcome>(
          cfg.lr_sweep.size(), cfg.jobs,
          [&](std::size_t i) { return run_grid_point(p, pt, cfg.lr_sweep[i]); });
    });
    std::string csv = "lr,bits,overlap,M1_fp,M1_q,M4_fp\n";
    for (std::size_t i = 0; i < sweeps.size(); ++i) {
      const auto& o = sweeps[i];
      const auto& fpm = at_bits(o.metrics, 0);
      for (const auto& r : o.overlap) {
        csv += format_double(cfg.lr_sweep[i]) + "," + std::to_string(r.bits) +
               "," + format_double(r.global_overlap) + "," +
               format_double(fpm.vermem) + "," +
               format_double(at_bits(o.metrics, r.bits).vermem) + "," +
               format_double(fpm.knowmem_r) + "\n";
      }
      sweep_json.push_back({{"lr", cfg.lr_sweep[i]},
                            {"label", pt.label()},
                            {"delta_stats", delta_json(o.delta)},
                            {"overlap", overlap_summary(o.overlap)},
                            {"metrics", metrics_list(o.metrics)}});
    }
    stage("write-lr-sweep", fp, [&] { out.write("lr_sweep.csv", csv); return 0; });
  }

  ojson classify = nullptr;
  if (cfg.classify_track) {
    auto c = stage("classify-track", fp,
                   [&] { return run_classify(cfg, p.corpus, grid); });
    std::string csv = metrics_csv_header();
    for (const auto& r : c.target) csv += classify_csv_row(r);
    for (const auto& r : c.retrain) csv += classify_csv_row(r);
    auto rows = ojson::array();
    for (const auto& [label, rs] : c.grid) {
      for (const auto& r : rs) csv += classify_csv_row(r);
      auto accs = ojson::array();
      for (const auto& r : rs) {
        accs.push_back({{"bits", r.bits == 0 ? ojson("fp") : ojson(r.bits)},
                        {"forget_acc", r.forget_acc},
                        {"retain_acc", r.retain_acc}});
      }
      rows.push_back({{"label", label}, {"accuracy", accs}});
    }
    auto ref = [](std::span<const MetricsReport> rs) {
      auto a = ojson::array();
      for (const auto& r : rs) {
        a.push_back({{"bits", r.bits == 0 ? ojson("fp") : ojson(r.bits)},
                     {"forget_acc", r.forget_acc},
                     {"retain_acc", r.retain_acc}});
      }
      return a;
    };
    classify = {{"target", ref(c.target)}, {"retrain", ref(c.retrain)}, {"grid", rows}};
    stage("write-classify", fp, [&] {
      out.write("classify_metrics.csv", csv);
      return 0;
    });
  }

  summary["snapshots"] = hashes;
  summary["retrain_auc"] = p.retrain_auc;
  summary["target"] = metrics_list(target_metrics);
  summary["retrain"] = metrics_list(retrain_metrics);
  summary["grid"] = grid_json;
  summary["recommended"] = recommended;
  summary["lr_sweep"] = sweep_json;
  summary["classify"] = classify;
  std::string text = summary.dump(2) + "\n";
  stage("write-summary", fp, [&] { out.write("summary.json", text); return 0; });
  return text;
}

namespace {

ojson seqs_json(std::span<const Sequence> seqs) {
  auto a = ojson::array();
  for (const auto& s : seqs) a.push_back(s);
  return a;
}

ojson qa_json(std::span<const QAPair> qa) {
  auto a = ojson::array();
  for (const auto& p : qa) a.push_back({{"prompt", p.prompt}, {"answer", p.answer}});
  return a;
}

ojson examples_json(std::span<const Example> ex) {
  auto a = ojson::array();
  for (const auto& e : ex) a.push_back({{"tokens", e.tokens}, {"label", e.label}});
  return a;
}

}  // namespace

std::string corpus_to_json(const SynthCorpus& c, std::size_t vocab_size) {
  ojson j;
  j["vocab_size"] = vocab_size;
  j["forget"] = seqs_json(c.forget);
  j["retain"] = seqs_json(c.retain);
  j["holdout"] = seqs_json(c.holdout);
  j["qa_forget"] = qa_json(c.qa_forget);
  j["qa_retain"] = qa_json(c.qa_retain);
  j["classify_forget"] = examples_json(c.classify_forget);
  j["classify_retain"] = examples_json(c.classify_retain);
  return j.dump() + "\n";
}

SynthCorpus corpus_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("corpus is not valid JSON: ") + e.what());
  }
  check_keys(j, "corpus",
             {"vocab_size", "forget", "retain", "holdout", "qa_forget",
              "qa_retain", "classify_forget", "classify_retain"});
  SynthCorpus c;
  try {
    const auto v = j.at("vocab_size").get<std::size_t>();
    auto tokens = [&](const json& a) {
      auto t = a.get<std::vector<TokenId>>();
      for (TokenId x : t) {
        if (x >= v) throw ValidationError("corpus token out of vocabulary");
      }
      return t;
    };
    auto seqs = [&](const char* key) {
      std::vector<Sequence> out;
      for (const auto& s : j.at(key)) out.push_back(tokens(s));
      return out;
    };
    auto qa = [&](const char* key) {
      std::vector<QAPair> out;
      for (const auto& p : j.at(key)) {
        out.push_back({tokens(p.at("prompt")), tokens(p.at("answer"))});
      }
      return out;
    };
    auto examples = [&](const char* key) {
      std::vector<Example> out;
      for (const auto& e : j.at(key)) {
        out.push_back({tokens(e.at("tokens")), e.at("label").get<TokenId>()});
      }
      return out;
    };
    c.forget = seqs("forget");
    c.retain = seqs("retain");
    c.holdout = seqs("holdout");
    c.qa_forget = qa("qa_forget");
    c.qa_retain = qa("qa_retain");
    c.classify_forget = examples("classify_forget");
    c.classify_retain = examples("classify_retain");
  } catch (const json::exception& e) {
    throw ValidationError(std::string("corpus JSON: ") + e.what());
  }
  return c;
}

}  // namespace qunlearn
