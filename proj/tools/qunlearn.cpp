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

// qunlearn: train, unlearn, quantize and analyze tiny models.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

#include "qunlearn/analytics.hpp"
#include "qunlearn/detail/bytes.hpp"
#include "qunlearn/detail/format.hpp"
#include "qunlearn/experiment.hpp"
#include "qunlearn/snapshot_io.hpp"

namespace {

using namespace qunlearn;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<int> bits;
  std::vector<std::string> methods;
  std::vector<double> alphas;
  std::vector<double> gammas;
  std::optional<double> delta_q;
  std::optional<double> lr;
  std::optional<int> jobs;
};

void add_config(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Experiment config JSON");
  cmd->add_option("--seed", c.seed, "Override the seed");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{}
                                          : load_experiment_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.out) cfg.out = *c.out;
  if (!c.bits.empty()) cfg.quant.bits = c.bits;
  if (!c.methods.empty()) {
    cfg.unlearn.methods.clear();
    for (const auto& m : c.methods) cfg.unlearn.methods.push_back(parse_method(m));
  }
  if (!c.alphas.empty()) cfg.unlearn.alphas = c.alphas;
  if (!c.gammas.empty()) cfg.unlearn.gammas = c.gammas;
  if (c.delta_q) cfg.unlearn.base.delta_q = *c.delta_q;
  if (c.lr) cfg.unlearn.base.lr = *c.lr;
  if (c.jobs) cfg.jobs = *c.jobs;
  cfg.validate();
  return cfg;
}

// Range policy from the config's quant section unless given on the command line.
QuantConfig quant_options(const Common& c, int bits,
                          const std::optional<std::string>& range_mode,
                          bool symmetric) {
  ExperimentConfig cfg = resolve(c);
  QuantConfig q{bits, cfg.quant.range_mode, cfg.quant.symmetric || symmetric,
                false, false};
  if (range_mode) q.range_mode = parse_range_mode(*range_mode);
  q.validate();
  return q;
}

SynthCorpus read_corpus(const std::string& path) {
  return corpus_from_json(detail::read_file(path));
}

void write_text(const std::string& path, const std::string& text) {
  detail::write_file(path, text);
}

int run(int argc, char** argv) {
  CLI::App app{"Quantization-robust unlearning laboratory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));
  Common c;

  auto* synth = app.add_subcommand("synth", "Generate the synthetic corpus");
  add_config(synth, c);
  std::string corpus_out = "corpus.json";
  synth->add_option("--out", corpus_out, "Corpus JSON path");

  std::string corpus_path, model_out;
  auto* train_cmd = app.add_subcommand("train", "Train the target model on forget + retain");
  auto* retrain_cmd = app.add_subcommand("retrain", "Train from scratch on retain only");
  for (auto* cmd : {train_cmd, retrain_cmd}) {
    add_config(cmd, c);
    cmd->add_option("--corpus", corpus_path, "Corpus JSON")->required();
    cmd->add_option("--out", model_out, "Output snapshot (.qsnp)")->required();
  }

  auto* unlearn_cmd = app.add_subcommand("unlearn", "Unlearn the forget set from a target model");
  add_config(unlearn_cmd, c);
  std::string target_path, log_path;
  std::string method = "GA_GDR";
  double alpha = 1.0, gamma = 0.0;
  unlearn_cmd->add_option("--target", target_path, "Target snapshot")->required();
  unlearn_cmd->add_option("--corpus", corpus_path, "Corpus JSON")->required();
  unlearn_cmd->add_option("--method", method, "GA, GA_GDR or QUAIL");
  unlearn_cmd->add_option("--alpha", alpha, "Forget-loss weight");
  unlearn_cmd->add_option("--gamma", gamma, "Hinge weight (QUAIL)");
  unlearn_cmd->add_option("--delta-q", c.delta_q, "Logit margin");
  unlearn_cmd->add_option("--lr", c.lr, "Learning rate");
  unlearn_cmd->add_option("--out", model_out, "Output snapshot")->required();
  unlearn_cmd->add_option("--log", log_path, "Per-epoch JSON-lines log");

  auto* quantize_cmd = app.add_subcommand("quantize", "Quantize a snapshot");
  add_config(quantize_cmd, c);
  std::string in_path, qsnq_path, deq_path;
  std::optional<std::string> range_mode;
  int qbits = 4;
  bool symmetric = false;
  quantize_cmd->add_option("--in", in_path, "Source snapshot")->required();
  quantize_cmd->add_option("--bits", qbits, "Bit width (2-16)");
  quantize_cmd->add_option("--range-mode", range_mode, "global or per_tensor");
  quantize_cmd->add_flag("--symmetric", symmetric, "Symmetric range");
  quantize_cmd->add_option("--qsnq", qsnq_path, "Write bucket indices (.qsnq)");
  quantize_cmd->add_option("--out", deq_path, "Write the dequantized snapshot (.qsnp)");

  auto* overlap_cmd = app.add_subcommand("overlap", "Bucket overlap between two snapshots");
  add_config(overlap_cmd, c);
  std::string ref_path, un_path, csv_path, json_path;
  overlap_cmd->add_option("--ref", ref_path, "Reference snapshot")->required();
  overlap_cmd->add_option("--un", un_path, "Compared snapshot")->required();
  overlap_cmd->add_option("--bits", c.bits, "Bit widths")->delimiter(',');
  overlap_cmd->add_option("--range-mode", range_mode, "global or per_tensor");
  overlap_cmd->add_flag("--symmetric", symmetric, "Symmetric range");
  overlap_cmd->add_option("--csv", csv_path, "Per-tensor/per-layer CSV");
  overlap_cmd->add_option("--json", json_path, "Full JSON report");

  auto* eval_cmd = app.add_subcommand("eval", "M1-M4 metrics of a model");
  add_config(eval_cmd, c);
  std::string model_path, retrain_path;
  eval_cmd->add_option("--model", model_path, "Model snapshot")->required();
  eval_cmd->add_option("--retrain", retrain_path, "Retrain snapshot")->required();
  eval_cmd->add_option("--corpus", corpus_path, "Corpus JSON")->required();
  eval_cmd->add_option("--bits", c.bits, "Also evaluate at these widths")->delimiter(',');
  eval_cmd->add_option("--method", method, "Label for the method column");
  eval_cmd->add_option("--alpha", alpha, "Label for the alpha column");
  eval_cmd->add_option("--gamma", gamma, "Label for the gamma column");

  auto* exp_cmd = app.add_subcommand("experiment", "Run the full pipeline");
  auto* sweep_cmd = app.add_subcommand("sweep", "GA_GDR overlap versus learning rate");
  std::vector<double> lrs;
  for (auto* cmd : {exp_cmd, sweep_cmd}) {
    add_config(cmd, c);
    cmd->add_option("--out", c.out, "Output directory");
    cmd->add_option("--bits", c.bits, "Bit widths")->delimiter(',');
    cmd->add_option("--alpha", c.alphas, "Alpha grid")->delimiter(',');
    cmd->add_option("--delta-q", c.delta_q, "Logit margin");
    cmd->add_option("--jobs", c.jobs, "Concurrent grid points");
  }
  exp_cmd->add_option("--method", c.methods, "Methods")->delimiter(',');
  exp_cmd->add_option("--gamma", c.gammas, "Gamma grid")->delimiter(',');
  exp_cmd->add_option("--lr", c.lr, "Unlearning learning rate");
  sweep_cmd->add_option("--lr", lrs, "Learning rates")->delimiter(',')->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (*synth) {
    ExperimentConfig cfg = resolve(c);
    SynthCorpus corpus = synth_corpus(cfg.corpus, cfg.model.vocab_size,
                                      cfg.model.context,
                                      Rng(cfg.seed).split("corpus"));
    write_text(corpus_out, corpus_to_json(corpus, cfg.model.vocab_size));
    std::cout << "wrote " << corpus_out << "\n";
  } else if (*train_cmd || *retrain_cmd) {
    ExperimentConfig cfg = resolve(c);
    SynthCorpus corpus = read_corpus(corpus_path);
    auto retain = to_examples(corpus.retain);
    Rng root(cfg.seed);
    Model m(cfg.model);
    if (*train_cmd) {
      auto data = to_examples(corpus.forget);
      data.insert(data.end(), retain.begin(), retain.end());
      m = Model::initialized(cfg.model, root.split("init"), cfg.init_scale);
      Rng shuffle = root.split("train");
      auto log = train(m, data, cfg.pretrain, shuffle);
      std::cout << "final loss " << detail::format_double(log.epoch_loss.back()) << "\n";
    } else {
      m = train_retrain(cfg.model, retain, cfg.pretrain, cfg.init_scale,
                        root.split("retrain"));
    }
    save_model(m, model_out);
    std::cout << "wrote " << model_out << "\n";
  } else if (*unlearn_cmd) {
    ExperimentConfig cfg = resolve(c);
    Model target = load_model(target_path);
    SynthCorpus corpus = read_corpus(corpus_path);
    GridPoint pt{parse_method(method), alpha, gamma};
    UnlearnConfig ucfg = pt.config(cfg.unlearn.base);
    ucfg.validate();
    auto res = unlearn_run(target, ucfg, to_examples(corpus.forget),
                           to_examples(corpus.retain),
                           Rng(cfg.seed).split("unlearn/" + pt.label()));
    save_model(res.model, model_out);
    std::string log = epoch_log_jsonl(res.log);
    if (!log_path.empty()) write_text(log_path, log);
    std::cout << log;
  } else if (*quantize_cmd) {
    if (qsnq_path.empty() && deq_path.empty()) {
      throw ValidationError("quantize needs --qsnq and/or --out");
    }
    QuantConfig q = quant_options(c, qbits, range_mode, symmetric);
    WeightSnapshot s = load_snapshot(in_path);
    QuantizedSnapshot qs =
        quantize_snapshot(s, q, std::filesystem::path(in_path).filename().string());
    if (!qsnq_path.empty()) save_quantized(qs, qsnq_path);
    if (!deq_path.empty()) {
      save_snapshot(dequantize_snapshot(qs), deq_path);
      const std::string side = sidecar_path(in_path);
      if (std::filesystem::exists(side)) {
        write_text(sidecar_path(deq_path), detail::read_file(side));
      }
    }
    std::cout << "quantized " << s.size() << " tensors at " << qbits << " bits\n";
  } else if (*overlap_cmd) {
    std::vector<int> bits = c.bits;
    c.bits.clear();
    if (bits.empty()) bits = resolve(c).quant.bits;
    QuantConfig base = quant_options(c, bits[0], range_mode, symmetric);
    WeightSnapshot ref = load_snapshot(ref_path);
    WeightSnapshot un = load_snapshot(un_path);
    auto reports = bit_sweep(ref, un, bits, base);
    for (const auto& r : reports) {
      std::cout << "bits=" << r.bits
                << " global_overlap=" << detail::format_double(r.global_overlap)
                << " tensorwise_overlap=" << detail::format_double(r.tensorwise_overlap)
                << " hamming_fraction=" << detail::format_double(r.hamming_fraction)
                << " delta=" << detail::format_double(r.delta) << "\n";
    }
    if (!csv_path.empty()) write_text(csv_path, overlap_csv(reports));
    if (!json_path.empty()) {
      write_text(json_path, overlap_json(reports, delta_stats(ref, un)));
    }
  } else if (*eval_cmd) {
    std::vector<int> bits = c.bits;
    c.bits.clear();
    ExperimentConfig cfg = resolve(c);
    Model m = load_model(model_path);
    Model retrain = load_model(retrain_path);
    SynthCorpus corpus = read_corpus(corpus_path);
    auto fe = to_examples(corpus.forget);
    auto re = to_examples(corpus.retain);
    EvalData d{corpus.forget, corpus.holdout, corpus.qa_forget, corpus.qa_retain,
               fe, re, cfg.prompt_len, kFirstTarget};
    const double auc_r = mia_auc(retrain, corpus.forget, corpus.holdout, kFirstTarget);
    std::cout << metrics_csv_header();
    auto emit = [&](const Model& model, int b) {
      MetricsReport r = full_report(model, auc_r, d);
      r.method = method;
      r.alpha = alpha;
      r.gamma = gamma;
      r.bits = b;
      r.seed = cfg.seed;
      std::cout << metrics_csv_row(r);
    };
    emit(m, 0);
    for (int b : bits) emit(dequantize_model(m, cfg.quant.at(b)), b);
  } else if (*exp_cmd) {
    ExperimentConfig cfg = resolve(c);
    run_experiment(cfg);
    std::cout << "wrote " << (std::filesystem::path(cfg.out) / "summary.json").string()
              << "\n";
  } else if (*sweep_cmd) {
    ExperimentConfig cfg = resolve(c);
    cfg.lr_sweep = lrs;
    cfg.unlearn.methods = {Method::kGAGDR};
    cfg.unlearn.alphas.resize(1);
    cfg.classify_track = false;
    cfg.validate();
    run_experiment(cfg);
    std::cout << detail::read_file(
        (std::filesystem::path(cfg.out) / "lr_sweep.csv").string());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
