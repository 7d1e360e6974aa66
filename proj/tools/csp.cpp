// Copyright 2026 The CSP Authors.
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

// csp: command-line front end for the csp library.
//
// Exit status: 0 success, 1 usage error, 2 runtime error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>

#include "csp/calibration.hpp"
#include "csp/distill.hpp"
#include "csp/ensemble.hpp"
#include "csp/eval.hpp"
#include "csp/experiment.hpp"

using namespace csp;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const std::vector<std::string> kModelTypes{"iid", "crf", "ar"};

// ---- Shared option groups -------------------------------------------------------

struct TrainFlags {
  std::string config;
  std::optional<double> lr;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<double> smoothing;
  std::optional<int> patience;

  void add(CLI::App* app) {
    app->add_option("--config", config, "training config JSON")->check(CLI::ExistingFile);
    app->add_option("--lr", lr, "learning rate (overrides the config)");
    app->add_option("--epochs", epochs, "epochs (overrides the config)");
    app->add_option("--seed", seed, "initialization seed (overrides the config)");
    app->add_option("--label-smoothing", smoothing, "label smoothing (overrides the config)");
    app->add_option("--patience", patience, "early-stopping patience, <= 0 disables (overrides the config)");
  }

  training::TrainConfig resolve() const {
    training::TrainConfig c = config.empty() ? training::TrainConfig{} : training::load_train_config(config);
    if (lr) c.lr = *lr;
    if (epochs) c.epochs = *epochs;
    if (seed) c.seed = *seed;
    if (smoothing) c.label_smoothing = *smoothing;
    if (patience) c.early_stop_patience = *patience;
    c.validate();
    return c;
  }
};

struct HeldFlags {
  std::string held;
  std::size_t folds = 10;
  std::size_t fold = 0;
  std::uint64_t split_seed = 1;

  void add(CLI::App* app) {
    app->add_option("--held", held, "held-out JSONL for early stopping (default: a fold of --data)")
        ->check(CLI::ExistingFile);
    app->add_option("--folds", folds, "folds when carving the held set out of --data")->check(CLI::Range(2, 1000));
    app->add_option("--fold", fold, "which fold is held out");
    app->add_option("--split-seed", split_seed, "seed of the fold assignment");
  }

  std::pair<data::Dataset, data::Dataset> resolve(const data::Dataset& all) const {
    if (!held.empty()) return {all, data::load_jsonl(held)};
    if (fold >= folds) throw UsageError("--fold must be < --folds");
    return data::split_dataset(all, folds, fold, split_seed);
  }
};

// A single model or an ensemble read from a manifest.
struct PredictorFlags {
  std::string model;
  std::string manifest;
  std::size_t k = 0;
  bool teacher_forced = false;

  void add(CLI::App* app) {
    auto* m = app->add_option("--model", model, "model file")->check(CLI::ExistingFile);
    auto* e = app->add_option("--ensemble", manifest, "ensemble manifest JSON")->check(CLI::ExistingFile);
    m->excludes(e);
    app->add_option("--k", k, "use the first K members of the ensemble (default: all)")->needs(e);
    app->add_flag("--teacher-forced", teacher_forced, "condition AR models on gold labels");
  }

  taggers::ArMode mode() const {
    return teacher_forced ? taggers::ArMode::kTeacherForced : taggers::ArMode::kFreeRunning;
  }

  ensemble::Ensemble load() const {
    if (!model.empty()) return ensemble::Ensemble({taggers::load_model(model)});
    if (manifest.empty()) throw UsageError("one of --model or --ensemble is required");
    std::vector<std::size_t> subset;
    for (std::size_t i = 1; i <= k; ++i) subset.push_back(i);
    return ensemble::load_ensemble(manifest, subset);
  }
};

void check_labels(const ensemble::Ensemble& ens, const data::Dataset& d) {
  if (ens.num_labels() != d.vocab.size())
    throw ArgumentError("model has " + std::to_string(ens.num_labels()) + " labels, data has " +
                        std::to_string(d.vocab.size()));
}

std::vector<std::vector<std::uint32_t>> gold_of(const data::Dataset& d) {
  std::vector<std::vector<std::uint32_t>> g;
  for (const auto& s : d.sequences) g.push_back(s.gold);
  return g;
}

std::vector<std::vector<std::uint32_t>> argmaxes(const kernels::BatchDistributions& dists) {
  std::vector<std::vector<std::uint32_t>> out;
  for (const auto& seq : dists) {
    out.emplace_back();
    for (const auto& p : seq) out.back().push_back(static_cast<std::uint32_t>(argmax(p)));
  }
  return out;
}

// Log-probabilities used as logits; for a single non-ensemble model these are
// the model's own logits.
std::vector<std::vector<std::vector<double>>> logits_of(const ensemble::Ensemble& ens, const data::Dataset& d,
                                                        taggers::ArMode mode) {
  std::vector<std::vector<std::vector<double>>> out;
  if (ens.size() == 1) {
    for (const auto& s : d.sequences) out.push_back(taggers::token_logits(ens.member(0), s, mode));
    return out;
  }
  for (const auto& seq : ensemble::ensemble_batch(ens, d, mode)) {
    out.emplace_back();
    for (const auto& p : seq) {
      std::vector<double> z(p.size());
      for (std::size_t y = 0; y < p.size(); ++y) z[y] = std::log(std::max(p[y], 1e-300));
      out.back().push_back(std::move(z));
    }
  }
  return out;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

json report_summary(const calibration::CalibrationReport& r, const eval::SpanScores& s) {
  return {{"tokens", r.tokens},   {"accuracy", r.accuracy},
          {"nll", r.nll},         {"ece", r.ece},
          {"ece_k", r.ece_k},     {"brier", r.brier},
          {"bs_plus", r.bs_plus}, {"bs_minus", r.bs_minus},
          {"balanced_ece", r.balanced_ece}, {"balanced_brier", r.balanced_brier},
          {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
}

// Writes the report JSON / reliability CSV if asked and prints a one-line summary.
void emit_report(const kernels::BatchDistributions& dists, const data::Dataset& d, std::size_t bins,
                 const std::string& out, const std::string& reliability) {
  const auto gold = gold_of(d);
  const auto r = calibration::evaluate(dists, gold, d.vocab, bins);
  const auto spans = eval::span_f1(argmaxes(dists), gold, d.vocab);
  if (!out.empty()) write_file(out, calibration::report_to_json(r));
  if (!reliability.empty()) {
    std::ofstream rel(reliability, std::ios::binary | std::ios::trunc);
    if (!rel) throw std::runtime_error("cannot write '" + reliability + "'");
    calibration::write_reliability_csv(rel, r.reliability);
  }
  std::cout << report_summary(r, spans).dump() << "\n";
}

// ---- Subcommands -------------------------------------------------------------------

void cmd_gen_data(CLI::App& root) {
  struct Opts {
    std::size_t states = 5, obs = 20, seqs = 2000, test_seqs = 0;
    int min_len = 5, max_len = 15;
    std::uint64_t seed = 1;
    std::string out = "data.jsonl", test_out;
  };
  auto o = std::make_shared<Opts>();
  auto* app = root.add_subcommand("gen-data", "sample a labelled dataset from a random HMM");
  app->add_option("--states", o->states, "hidden states (labels)")->check(CLI::Range(2, 100000));
  app->add_option("--obs", o->obs, "observation symbols")->check(CLI::Range(1, 100000000));
  app->add_option("--seqs", o->seqs, "sequences written to --out")->check(CLI::PositiveNumber);
  app->add_option("--min-len", o->min_len, "shortest sequence")->check(CLI::PositiveNumber);
  app->add_option("--max-len", o->max_len, "longest sequence")->check(CLI::PositiveNumber);
  app->add_option("--seed", o->seed, "HMM and sampling seed");
  app->add_option("--out", o->out, "output JSONL");
  auto* to = app->add_option("--test-out", o->test_out, "second JSONL from the same HMM");
  app->add_option("--test-seqs", o->test_seqs, "sequences written to --test-out")->needs(to);
  app->callback([o] {
    if (!o->test_out.empty() && o->test_seqs == 0) throw UsageError("--test-out needs --test-seqs > 0");
    auto [all, spec] = data::generate_hmm(o->states, o->obs, o->seqs + o->test_seqs, {o->min_len, o->max_len}, o->seed);
    std::vector<data::TokenSequence> head(all.sequences.begin(), all.sequences.begin() + o->seqs);
    data::save_jsonl(o->out, data::make_dataset(std::move(head), all.vocab, all.obs_vocab_size));
    if (!o->test_out.empty()) {
      std::vector<data::TokenSequence> tail(all.sequences.begin() + o->seqs, all.sequences.end());
      data::save_jsonl(o->test_out, data::make_dataset(std::move(tail), all.vocab, all.obs_vocab_size));
    }
    std::cout << "wrote " << o->seqs << " sequences to " << o->out;
    if (!o->test_out.empty()) std::cout << " and " << o->test_seqs << " to " << o->test_out;
    std::cout << "\n";
  });
}

void append_to_manifest(const std::string& manifest_path, const std::string& model_path,
                        const data::Dataset& d, taggers::ModelType type, std::uint64_t seed) {
  ensemble::Manifest man;
  if (fs::exists(manifest_path)) {
    man = ensemble::load_manifest(manifest_path);
    if (man.labels != d.vocab.labels()) throw ArgumentError("manifest labels differ from the data's labels");
  } else {
    man.labels = d.vocab.labels();
  }
  const fs::path base = fs::absolute(manifest_path).parent_path();
  const fs::path rel = fs::absolute(model_path).lexically_relative(base);
  man.members.push_back({man.members.size() + 1, seed, type, rel.empty() ? model_path : rel.generic_string()});
  ensemble::save_manifest(manifest_path, man);
}

void cmd_train(CLI::App& root) {
  struct Opts {
    std::string data, out = "model.bin", history, manifest;
    std::string type = "iid";
    TrainFlags train;
    HeldFlags held;
  };
  auto o = std::make_shared<Opts>();
  auto* app = root.add_subcommand("train", "train one tagger");
  app->add_option("--type", o->type, "iid, crf or ar")->check(CLI::IsMember(kModelTypes));
  app->add_option("--data", o->data, "training JSONL")->required()->check(CLI::ExistingFile);
  app->add_option("--out", o->out, "model file to write");
  app->add_option("--history", o->history, "per-epoch CSV");
  app->add_option("--manifest", o->manifest, "append the model to this ensemble manifest");
  o->train.add(app);
  o->held.add(app);
  app->callback([o] {
    const auto cfg = o->train.resolve();
    const auto [tr, held] = o->held.resolve(data::load_jsonl(o->data));
    const auto r = training::train(taggers::parse_model_type(o->type), tr, held, cfg);
    taggers::save_model(o->out, r.params);
    if (!o->history.empty()) {
      std::ofstream h(o->history, std::ios::binary | std::ios::trunc);
      training::write_history_csv(h, r.history);
    }
    if (!o->manifest.empty()) append_to_manifest(o->manifest, o->out, tr, taggers::parse_model_type(o->type), cfg.seed);
    std::cout << "epochs " << r.history.size() - 1 << ", best epoch " << r.best_epoch << ", held nll "
              << kernels::mean_nll(r.params, held) << ", wrote " << o->out << "\n";
  });
}

void cmd_ensemble_eval(CLI::App& root) {
  struct Opts {
    std::string manifest, data;
    std::vector<std::size_t> ks;
    std::size_t bins = calibration::kDefaultBins;
    bool teacher_forced = false;
  };
  auto o = std::make_shared<Opts>();
  auto* app = root.add_subcommand("ensemble-eval", "evaluate ensemble prefixes of a manifest");
  app->add_option("--ensemble", o->manifest, "ensemble manifest JSON")->required()->check(CLI::ExistingFile);
  app->add_option("--data", o->data, "evaluation JSONL")->required()->check(CLI::ExistingFile);
  app->add_option("--k", o->ks, "ensemble sizes (default: all members)")->delimiter(',');
  app->add_option("--bins", o->bins, "reliability bins")->check(CLI::PositiveNumber);
  app->add_flag("--teacher-forced", o->teacher_forced, "condition AR models on gold labels");
  app->callback([o] {
    const auto d = data::load_jsonl(o->data);
    const auto all = ensemble::load_ensemble(o->manifest);
    check_labels(all, d);
    auto ks = o->ks.empty() ? std::vector<std::size_t>{all.size()} : o->ks;
    const auto mode = o->teacher_forced ? taggers::ArMode::kTeacherForced : taggers::ArMode::kFreeRunning;
    const auto gold = gold_of(d);
    for (auto k : ks) {
      if (k < 1 || k > all.size()) throw UsageError("K must be in [1, " + std::to_string(all.size()) + "]");
      const ensemble::Ensemble ens(std::vector<taggers::Model>(all.members().begin(), all.members().begin() + k));
      const auto dists = ensemble::ensemble_batch(ens, d, mode);
      const auto r = calibration::evaluate(dists, gold, d.vocab, o->bins);
      auto row = report_summary(r, eval::span_f1(argmaxes(dists), gold, d.vocab));
      row["k"] = k;
      std::cout << row.dump() << "\n";
    }
  });
}

void cmd_memoize(CLI::App& root) {
  struct Opts {
    std::string manifest, data, out = "teacher.tstr";
    std::size_t vprime = 64, k = 0;
  };
  auto o = std::make_shared<Opts>();
  auto* app = root.add_subcommand("memoize", "store truncated ensemble distributions for distillation");
  app->add_option("--ensemble", o->manifest, "ensemble manifest JSON")->required()->check(CLI::ExistingFile);
  app->add_option("--data", o->data, "training JSONL the student will see")->required()->check(CLI::ExistingFile);
  app->add_option("--vprime", o->vprime, "labels kept per token (clamped to V)")->check(CLI::PositiveNumber);
  app->add_option("--k", o->k, "use the first K members (default: all)");
  app->add_option("--out", o->out, "teacher store to write");
  app->callback([o] {
    PredictorFlags p;
    p.manifest = o->manifest;
    p.k = o->k;
    const auto ens = p.load();
    const auto d = data::load_jsonl(o->data);
    check_labels(ens, d);
    std::size_t vprime = o->vprime;
    if (vprime > ens.num_labels()) {
      std::cerr << "note: --vprime " << vprime << " exceeds V = " << ens.num_labels() << "; using " << ens.num_labels()
                << "\n";
      vprime = ens.num_labels();
    }
    const auto h = distill::memoize_teacher(ens, d, vprime, o->out);
    std::cout << "wrote " << h.token_count << " records (V' = " << h.vprime << ", " << h.file_bytes() << " bytes) to "
              << o->out << "\n";
  });
}

void cmd_distill(CLI::App& root) {
  struct Opts {
    std::string data, teacher, out = "student.bin", history;
    std::string type = "iid";
    std::optional<double> beta, temperature, smoothing;
    bool renormalize = false;
    TrainFlags train;
    HeldFlags held;
  };
  auto o = std::make_shared<Opts>();
  auto* app = root.add_subcommand("distill", "train a student on gold labels and a teacher store");
  app->add_option("--type", o->type, "iid or ar")->check(CLI::IsMember(kModelTypes));
  app->add_option("--data", o->data, "training JSONL (same order as memoized)")->required()->check(CLI::ExistingFile);
  app->add_option("--teacher", o->teacher, "teacher store")->required()->check(CLI::ExistingFile);
  app->add_option("--beta", o->beta, "weight of the distillation term (default 5/6)");
  app->add_option("--temperature", o->temperature, "student temperature (default 1)");
  app->add_flag("--renormalize", o->renormalize, "renormalize truncated teacher distributions");
  app->add_option("--out", o->out, "student model file");
  app->add_option("--history", o->history, "per-epoch CSV");
  o->train.add(app);
  o->held.add(app);
  app->callback([o] {
    auto tc = o->train.resolve();
    auto dc = distill::DistillConfig::ner_defaults();
    if (o->beta) dc.beta = *o->beta;
    if (o->temperature) dc.temperature = *o->temperature;
    dc.label_smoothing = tc.label_smoothing;
    dc.renormalize_teacher = o->renormalize;
    dc.vprime = distill::read_store_header(o->teacher).vprime;
    dc.validate();
    const auto all = data::load_jsonl(o->data);
    data::Dataset held;
    if (!o->held.held.empty()) {
      held = data::load_jsonl(o->held.held);
    } else {
      // The teacher store is aligned with every training token, so the held
      // set for early stopping must come from a separate file.
      if (tc.early_stop_patience > 0) throw UsageError("distill needs --held unless --patience 0 disables early stopping");
    }
    const auto r = distill::train_student(all, held, o->teacher, taggers::parse_model_type(o->type), dc, tc);
    taggers::save_model(o->out, r.params);
    if (!o->history.empty()) {
      std::ofstream h(o->history, std::ios::binary | std::ios::trunc);
      training::write_history_csv(h, r.history);
    }
    std::cout << "epochs " << r.history.size() - 1 << ", wrote " << o->out << "\n";
  });
}

void cmd_calibrate(CLI::App& root) {
  auto* app = root.add_subcommand("calibrate", "temperature scaling");
  app->require_subcommand(1);

  struct FitOpts {
    PredictorFlags pred;
    std::string held, out;
  };
  auto f = std::make_shared<FitOpts>();
  auto* fit = app->add_subcommand("fit", "fit T on held-out data and print it with the NLL before and after");
  f->pred.add(fit);
  fit->add_option("--held", f->held, "held-out JSONL")->required()->check(CLI::ExistingFile);
  fit->add_option("--out", f->out, "write {\"temperature\": T, ...} JSON here");
  fit->callback([f] {
    const auto ens = f->pred.load();
    const auto d = data::load_jsonl(f->held);
    check_labels(ens, d);
    std::vector<std::vector<double>> flat;
    std::vector<std::uint32_t> gold;
    const auto logits = logits_of(ens, d, f->pred.mode());
    for (std::size_t s = 0; s < d.sequences.size(); ++s)
      for (std::size_t t = 0; t < d.sequences[s].size(); ++t) {
        flat.push_back(logits[s][t]);
        gold.push_back(d.sequences[s].gold[t]);
      }
    const auto r = calibration::fit_temperature(flat, gold);
    const json j{{"temperature", r.temperature}, {"nll_before", r.nll_at_one}, {"nll_after", r.nll_at_fit},
                 {"degenerate", r.degenerate}};
    if (!f->out.empty()) write_file(f->out, j.dump(2) + "\n");
    std::cout << j.dump() << "\n";
  });

  struct ApplyOpts {
    PredictorFlags pred;
    std::string data, out, reliability, fit_file;
    std::optional<double> temperature;
    std::size_t bins = calibration::kDefaultBins;
  };
  auto a = std::make_shared<ApplyOpts>();
  auto* apply = app->add_subcommand("apply", "evaluate with temperature-scaled distributions");
  a->pred.add(apply);
  apply->add_option("--data", a->data, "evaluation JSONL")->required()->check(CLI::ExistingFile);
  auto* t = apply->add_option("--temperature", a->temperature, "temperature T > 0");
  auto* ff = apply->add_option("--fit", a->fit_file, "JSON written by 'calibrate fit --out'")->check(CLI::ExistingFile);
  t->excludes(ff);
  apply->add_option("--out", a->out, "report JSON");
  apply->add_option("--reliability", a->reliability, "reliability CSV");
  apply->add_option("--bins", a->bins, "reliability bins")->check(CLI::PositiveNumber);
  apply->callback([a] {
    double T = 1.0;
    if (a->temperature) {
      T = *a->temperature;
    } else if (!a->fit_file.empty()) {
      std::ifstream in(a->fit_file);
      T = json::parse(in).at("temperature").get<double>();
    } else {
      throw UsageError("one of --temperature or --fit is required");
    }
    const auto ens = a->pred.load();
    const auto d = data::load_jsonl(a->data);
    check_labels(ens, d);
    kernels::BatchDistributions dists;
    for (const auto& seq : logits_of(ens, d, a->pred.mode())) {
      dists.emplace_back();
      for (const auto& z : seq) dists.back().push_back(calibration::apply_temperature(z, T));
    }
    emit_report(dists, d, a->bins, a->out, a->reliability);
  });
}

void cmd_report(CLI::App& root) {
  struct Opts {
    PredictorFlags pred;
    std::string data, out, reliability;
    std::size_t bins = calibration::kDefaultBins;
  };
  auto o = std::make_shared<Opts>();
  auto* app = root.add_subcommand("report", "calibration report and span F1 for a model or ensemble");
  o->pred.add(app);
  app->add_option("--data", o->data, "evaluation JSONL")->required()->check(CLI::ExistingFile);
  app->add_option("--out", o->out, "report JSON");
  app->add_option("--reliability", o->reliability, "reliability CSV");
  app->add_option("--bins", o->bins, "reliability bins")->check(CLI::PositiveNumber);
  app->callback([o] {
    const auto ens = o->pred.load();
    const auto d = data::load_jsonl(o->data);
    check_labels(ens, d);
    emit_report(ensemble::ensemble_batch(ens, d, o->pred.mode()), d, o->bins, o->out, o->reliability);
  });
}

void cmd_pr_curve(CLI::App& root) {
  struct Opts {
    PredictorFlags pred;
    std::string data, out, type;
  };
  auto o = std::make_shared<Opts>();
  auto* app = root.add_subcommand("pr-curve", "precision/recall curve over token-level entity probabilities");
  o->pred.add(app);
  app->add_option("--data", o->data, "evaluation JSONL")->required()->check(CLI::ExistingFile);
  app->add_option("--type", o->type, "entity type (default: all types pooled)");
  app->add_option("--out", o->out, "CSV with threshold,precision,recall");
  app->callback([o] {
    const auto ens = o->pred.load();
    const auto d = data::load_jsonl(o->data);
    check_labels(ens, d);
    const auto dists = ensemble::ensemble_batch(ens, d, o->pred.mode());
    const auto events = eval::pr_events(dists, gold_of(d), d.vocab,
                                        o->type.empty() ? std::nullopt : std::optional<std::string>(o->type));
    const auto curve = eval::pr_curve(events);
    if (!o->out.empty()) {
      std::ofstream out(o->out, std::ios::binary | std::ios::trunc);
      if (!out) throw std::runtime_error("cannot write '" + o->out + "'");
      eval::write_pr_csv(out, curve);
    }
    std::cout << json{{"auc", curve.auc}, {"points", curve.points.size()}, {"events", events.size()}}.dump() << "\n";
  });
}

void cmd_experiment(CLI::App& root) {
  struct Opts {
    std::string config, out;
    std::vector<std::uint64_t> seeds;
  };
  auto o = std::make_shared<Opts>();
  auto* app = root.add_subcommand("experiment", "run a full train/ensemble/distill/evaluate experiment");
  app->add_option("--config", o->config, "experiment config JSON")->required()->check(CLI::ExistingFile);
  app->add_option("--out", o->out, "output directory (overrides the config)");
  app->add_option("--seeds", o->seeds, "replicate seeds (overrides the config)")->delimiter(',');
  app->callback([o] {
    auto cfg = experiment::load_experiment_config(o->config);
    if (!o->out.empty()) cfg.output_dir = o->out;
    if (!o->seeds.empty()) cfg.seeds = o->seeds;
    const auto s = experiment::run_experiment(cfg);
    experiment::write_summary_csv(std::cout, s);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble distillation and calibration for sequence taggers"};
  app.require_subcommand(1);
  app.fallthrough(false);
  cmd_gen_data(app);
  cmd_train(app);
  cmd_ensemble_eval(app);
  cmd_memoize(app);
  cmd_distill(app);
  cmd_calibrate(app);
  cmd_report(app);
  cmd_pr_curve(app);
  cmd_experiment(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
