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

#include "csp/experiment.hpp"

#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "csp/ensemble.hpp"
#include "json.hpp"

namespace csp::experiment {

namespace fs = std::filesystem;
using json = nlohmann::json;

void ExperimentConfig::validate() const {
  if (task.kind == TaskSpec::Kind::kHmm) {
    if (task.states < 2 || task.obs_symbols < 1) throw ArgumentError("task needs >= 2 states and >= 1 symbol");
    if (task.train_seqs < n_folds || task.test_seqs < 1) throw ArgumentError("task is too small");
    if (task.min_len < 1 || task.max_len < task.min_len) throw ArgumentError("bad sequence length range");
  } else {
    for (const auto& p : {task.train_path, task.test_path})
      if (!fs::exists(p)) throw ArgumentError("dataset '" + p + "' does not exist");
  }
  if (k_values.empty()) throw ArgumentError("k_values is empty");
  for (auto k : k_values)
    if (k < 1) throw ArgumentError("every K must be >= 1");
  if (n_folds < 2) throw ArgumentError("n_folds must be >= 2");
  if (diversity == Diversity::kFold && max_k() > n_folds)
    throw ArgumentError("fold diversity needs K <= n_folds");
  if (seeds.empty()) throw ArgumentError("no replicate seeds");
  if (student_type == taggers::ModelType::kCrf && !vprimes.empty())
    throw ArgumentError("students cannot be CRFs");
  distill.validate();
  member_train.validate();
  if (student_train) student_train->validate();
  if (sgdr_train) {
    sgdr_train->validate();
    if (sgdr_train->schedule != training::TrainConfig::Schedule::kSgdr)
      throw ArgumentError("sgdr_train must use the sgdr schedule");
    if (sgdr_snapshots < 1) throw ArgumentError("sgdr_snapshots must be >= 1");
  }
}

std::size_t ExperimentConfig::max_k() const {
  return k_values.empty() ? 0 : *std::max_element(k_values.begin(), k_values.end());
}

// ---- Config I/O ---------------------------------------------------------------------

namespace {

taggers::ModelType type_of(const json& v) { return taggers::parse_model_type(v.get<std::string>()); }

ExperimentConfig config_from_json(const json& j, const fs::path& base) {
  if (!j.is_object()) throw ArgumentError("experiment config must be a JSON object");
  ExperimentConfig c;
  for (auto& [key, v] : j.items()) {
    if (key == "task") {
      for (auto& [tk, tv] : v.items()) {
        if (tk == "kind") {
          const auto s = tv.get<std::string>();
          if (s == "hmm") c.task.kind = TaskSpec::Kind::kHmm;
          else if (s == "files") c.task.kind = TaskSpec::Kind::kFiles;
          else throw ArgumentError("unknown task kind '" + s + "'");
        } else if (tk == "states") c.task.states = tv.get<std::size_t>();
        else if (tk == "obs_symbols") c.task.obs_symbols = tv.get<std::size_t>();
        else if (tk == "train_seqs") c.task.train_seqs = tv.get<std::size_t>();
        else if (tk == "test_seqs") c.task.test_seqs = tv.get<std::size_t>();
        else if (tk == "min_len") c.task.min_len = tv.get<int>();
        else if (tk == "max_len") c.task.max_len = tv.get<int>();
        else if (tk == "train") c.task.train_path = (base / tv.get<std::string>()).string();
        else if (tk == "test") c.task.test_path = (base / tv.get<std::string>()).string();
        else throw ArgumentError("unknown task key '" + tk + "'");
      }
    } else if (key == "member_type") c.member_type = type_of(v);
    else if (key == "student_type") c.student_type = type_of(v);
    else if (key == "k_values") c.k_values = v.get<std::vector<std::size_t>>();
    else if (key == "diversity") {
      const auto s = v.get<std::string>();
      if (s == "fold") c.diversity = Diversity::kFold;
      else if (s == "seed") c.diversity = Diversity::kSeed;
      else throw ArgumentError("unknown diversity '" + s + "'");
    } else if (key == "n_folds") c.n_folds = v.get<std::size_t>();
    else if (key == "vprimes") c.vprimes = v.get<std::vector<std::size_t>>();
    else if (key == "beta") c.distill.beta = v.get<double>();
    else if (key == "temperature") c.distill.temperature = v.get<double>();
    else if (key == "label_smoothing") c.distill.label_smoothing = v.get<double>();
    else if (key == "renormalize_teacher") c.distill.renormalize_teacher = v.get<bool>();
    else if (key == "seeds") c.seeds = v.get<std::vector<std::uint64_t>>();
    else if (key == "member_train") c.member_train = training::train_config_from_json_text(v.dump());
    else if (key == "student_train") c.student_train = training::train_config_from_json_text(v.dump());
    else if (key == "sgdr_train") c.sgdr_train = training::train_config_from_json_text(v.dump());
    else if (key == "sgdr_snapshots") c.sgdr_snapshots = v.get<std::size_t>();
    else if (key == "n_bins") c.n_bins = v.get<std::size_t>();
    else if (key == "output_dir") c.output_dir = v.get<std::string>();
    else throw ArgumentError("unknown experiment config key '" + key + "'");
  }
  c.validate();
  return c;
}

}  // namespace

ExperimentConfig experiment_config_from_json_text(const std::string& text) {
  try {
    return config_from_json(json::parse(text), fs::path{});
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("malformed experiment config: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open '" + path + "'");
  try {
    return config_from_json(json::parse(in), fs::path(path).parent_path());
  } catch (const json::exception& e) {
    throw ArgumentError("malformed experiment config '" + path + "': " + e.what());
  }
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
  json task;
  if (c.task.kind == TaskSpec::Kind::kHmm) {
    task = {{"kind", "hmm"},
            {"states", c.task.states},
            {"obs_symbols", c.task.obs_symbols},
            {"train_seqs", c.task.train_seqs},
            {"test_seqs", c.task.test_seqs},
            {"min_len", c.task.min_len},
            {"max_len", c.task.max_len}};
  } else {
    task = {{"kind", "files"}, {"train", c.task.train_path}, {"test", c.task.test_path}};
  }
  json j = {{"task", task},
            {"member_type", taggers::to_string(c.member_type)},
            {"student_type", taggers::to_string(c.student_type)},
            {"k_values", c.k_values},
            {"diversity", c.diversity == Diversity::kFold ? "fold" : "seed"},
            {"n_folds", c.n_folds},
            {"vprimes", c.vprimes},
            {"beta", c.distill.beta},
            {"temperature", c.distill.temperature},
            {"label_smoothing", c.distill.label_smoothing},
            {"renormalize_teacher", c.distill.renormalize_teacher},
            {"seeds", c.seeds},
            {"member_train", json::parse(training::train_config_to_json(c.member_train))},
            {"sgdr_snapshots", c.sgdr_snapshots},
            {"n_bins", c.n_bins},
            {"output_dir", c.output_dir}};
  if (c.student_train) j["student_train"] = json::parse(training::train_config_to_json(*c.student_train));
  if (c.sgdr_train) j["sgdr_train"] = json::parse(training::train_config_to_json(*c.sgdr_train));
  return j.dump(2);
}

const ModelResult& ReplicateResult::get(const std::string& name) const {
  for (const auto& m : models)
    if (m.name == name) return m;
  throw ArgumentError("no result named '" + name + "'");
}

int member_threads() {
  if (const char* env = std::getenv("CSP_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

// ---- Running ---------------------------------------------------------------------

namespace {

using Dists = kernels::BatchDistributions;

std::uint64_t member_seed(std::uint64_t replicate, std::size_t i) { return replicate * 1000 + i + 1; }
std::uint64_t student_seed(std::uint64_t replicate) { return replicate * 1000 + 999; }

template <typename F>
auto stage(const std::string& name, std::string& current, F&& f) {
  current = name;
  try {
    return f();
  } catch (const ExperimentError&) {
    throw;
  } catch (const std::exception& e) {
    throw ExperimentError(name, e.what());
  }
}

std::vector<std::vector<std::uint32_t>> golds(const data::Dataset& d) {
  std::vector<std::vector<std::uint32_t>> out;
  out.reserve(d.sequences.size());
  for (const auto& s : d.sequences) out.push_back(s.gold);
  return out;
}

ModelResult score(const std::string& name, const Dists& dists, const data::Dataset& test, std::size_t n_bins) {
  ModelResult r;
  r.name = name;
  const auto gold = golds(test);
  r.report = calibration::evaluate(dists, gold, test.vocab, n_bins);
  r.auc = eval::pr_curve(eval::pr_events(dists, gold, test.vocab)).auc;
  std::vector<std::vector<std::uint32_t>> pred;
  for (const auto& seq : dists) {
    auto& row = pred.emplace_back();
    for (const auto& d : seq) row.push_back(static_cast<std::uint32_t>(argmax(d)));
  }
  r.spans = eval::span_f1(pred, gold, test.vocab);
  return r;
}

// Mean of the scalar metrics of `rows`; reliability bins are not averaged.
ModelResult average(const std::string& name, const std::vector<ModelResult>& rows) {
  ModelResult r;
  r.name = name;
  const double n = static_cast<double>(rows.size());
  auto& a = r.report;
  a.tokens = rows.front().report.tokens;
  a.k = rows.front().report.k;
  a.n_bins = rows.front().report.n_bins;
  for (const auto& m : rows) {
    const auto& b = m.report;
    a.accuracy += b.accuracy / n;
    a.nll += b.nll / n;
    a.brier += b.brier / n;
    a.bs_plus += b.bs_plus / n;
    a.bs_minus += b.bs_minus / n;
    a.ece += b.ece / n;
    a.ece_k += b.ece_k / n;
    a.balanced_ece += b.balanced_ece / n;
    a.balanced_brier += b.balanced_brier / n;
    r.auc += m.auc / n;
    r.spans.precision += m.spans.precision / n;
    r.spans.recall += m.spans.recall / n;
    r.spans.f1 += m.spans.f1 / n;
  }
  return r;
}

Dists mix(const std::vector<Dists>& members, std::size_t k) {
  Dists out(members.front().size());
  std::vector<TokenDistribution> column(k);
  for (std::size_t s = 0; s < out.size(); ++s) {
    out[s].resize(members.front()[s].size());
    for (std::size_t t = 0; t < out[s].size(); ++t) {
      for (std::size_t i = 0; i < k; ++i) column[i] = members[i][s][t];
      out[s][t] = ensemble::mixture(column);
    }
  }
  return out;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << text;
}

void write_model_files(const fs::path& dir, const ModelResult& r) {
  write_text(dir / ("report-" + r.name + ".json"), calibration::report_to_json(r.report) + "\n");
  if (!r.report.reliability.bins.empty()) {
    std::ofstream rel(dir / ("reliability-" + r.name + ".csv"), std::ios::binary);
    calibration::write_reliability_csv(rel, r.report.reliability);
  }
}

std::pair<data::Dataset, data::Dataset> load_task(const TaskSpec& t, std::uint64_t seed) {
  if (t.kind == TaskSpec::Kind::kFiles) return {data::load_jsonl(t.train_path), data::load_jsonl(t.test_path)};
  auto [all, spec] = data::generate_hmm(t.states, t.obs_symbols, t.train_seqs + t.test_seqs,
                                        {t.min_len, t.max_len}, seed);
  std::vector<data::TokenSequence> tr(all.sequences.begin(), all.sequences.begin() + t.train_seqs);
  std::vector<data::TokenSequence> te(all.sequences.begin() + t.train_seqs, all.sequences.end());
  return {data::make_dataset(std::move(tr), all.vocab, all.obs_vocab_size),
          data::make_dataset(std::move(te), all.vocab, all.obs_vocab_size)};
}

class ScratchDir {
 public:
  explicit ScratchDir(const fs::path& requested) {
    if (!requested.empty()) {
      path_ = requested;
      return;
    }
    std::string tmpl = (fs::temp_directory_path() / "csp-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw std::runtime_error("cannot create a scratch directory");
    path_ = tmpl;
    owned_ = true;
  }
  ~ScratchDir() {
    std::error_code ec;
    if (owned_) fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  bool owned_ = false;
};

ReplicateResult run_replicate(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& out_dir,
                              std::string& current) {
  const bool write = !out_dir.empty();
  ScratchDir scratch(out_dir);
  const fs::path dir = scratch.path();
  if (write) fs::create_directories(dir / "members");

  auto [train, test] = stage("data", current, [&] { return load_task(cfg.task, seed); });
  const std::size_t V = train.vocab.size();
  const std::size_t K = cfg.max_k();

  // Members.
  std::vector<training::TrainResult> members(K);
  stage("train-members", current, [&] {
    std::vector<std::exception_ptr> errors(K);
#pragma omp parallel for num_threads(member_threads()) schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(K); ++i) {
      try {
        const std::size_t fold = cfg.diversity == Diversity::kFold ? i : cfg.n_folds - 1;
        auto [tr, held] = data::split_dataset(train, cfg.n_folds, fold, seed);
        training::TrainConfig tc = cfg.member_train;
        tc.seed = member_seed(seed, i);
        members[i] = training::train(cfg.member_type, tr, held, tc);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    return 0;
  });

  if (write) {
    stage("save-members", current, [&] {
      ensemble::Manifest man;
      man.labels = train.vocab.labels();
      for (std::size_t i = 0; i < K; ++i) {
        const std::string rel = "members/member-" + std::to_string(i + 1) + ".bin";
        taggers::save_model((dir / rel).string(), members[i].params);
        man.members.push_back({i + 1, member_seed(seed, i), cfg.member_type, rel});
        std::ofstream h(dir / ("history-member-" + std::to_string(i + 1) + ".csv"), std::ios::binary);
        training::write_history_csv(h, members[i].history);
      }
      ensemble::save_manifest((dir / "manifest.json").string(), man);
      return 0;
    });
  }

  ReplicateResult rep;
  rep.seed = seed;
  const auto eval_mode = taggers::ArMode::kFreeRunning;

  // Individuals and ensembles.
  std::vector<Dists> member_dists(K);
  stage("evaluate-members", current, [&] {
    std::vector<ModelResult> rows;
    for (std::size_t i = 0; i < K; ++i) {
      member_dists[i] = kernels::batch_distributions(members[i].params, test, eval_mode);
      rows.push_back(score("member-" + std::to_string(i + 1), member_dists[i], test, cfg.n_bins));
    }
    rep.models.push_back(average("individual", rows));
    for (auto& r : rows) rep.models.push_back(std::move(r));
    std::vector<std::size_t> ks = cfg.k_values;
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    for (auto k : ks) {
      ModelResult r = score("ensemble-" + std::to_string(k), mix(member_dists, k), test, cfg.n_bins);
      r.k = k;
      rep.models.push_back(std::move(r));
    }
    return 0;
  });

  // Students distilled from the largest ensemble.
  if (!cfg.vprimes.empty()) {
    std::vector<taggers::Model> teacher_members;
    for (const auto& m : members) teacher_members.push_back(m.params);
    const ensemble::Ensemble teacher(std::move(teacher_members));
    auto [student_train, student_held] = data::split_dataset(train, cfg.n_folds, cfg.n_folds - 1, seed);
    for (auto vp : cfg.vprimes) {
      const std::size_t vprime = vp == 0 ? V : std::min(vp, V);
      const std::string name = "student-v" + std::to_string(vprime);
      const fs::path store = dir / ("teacher-v" + std::to_string(vprime) + ".tstr");
      stage("memoize-" + name, current, [&] {
        return distill::memoize_teacher(teacher, student_train, vprime, store.string());
      });
      auto result = stage("distill-" + name, current, [&] {
        distill::DistillConfig dc = cfg.distill;
        dc.vprime = vprime;
        training::TrainConfig tc = cfg.student_train.value_or(cfg.member_train);
        tc.seed = student_seed(seed);
        return distill::train_student(student_train, student_held, store.string(), cfg.student_type, dc, tc);
      });
      stage("evaluate-" + name, current, [&] {
        ModelResult r = score(name, kernels::batch_distributions(result.params, test, eval_mode), test, cfg.n_bins);
        r.vprime = vprime;
        rep.models.push_back(std::move(r));
        if (write) {
          taggers::save_model((dir / "members" / (name + ".bin")).string(), result.params);
          std::ofstream h(dir / ("history-" + name + ".csv"), std::ios::binary);
          training::write_history_csv(h, result.history);
        }
        return 0;
      });
    }
  }

  // Single-run snapshot ensemble.
  if (cfg.sgdr_train) {
    auto result = stage("train-sgdr", current, [&] {
      auto [tr, held] = data::split_dataset(train, cfg.n_folds, cfg.n_folds - 1, seed);
      training::TrainConfig tc = *cfg.sgdr_train;
      tc.seed = member_seed(seed, 0);
      return training::train(cfg.member_type, tr, held, tc);
    });
    stage("evaluate-sgdr", current, [&] {
      rep.models.push_back(
          score("sgdr-final", kernels::batch_distributions(result.params, test, eval_mode), test, cfg.n_bins));
      const std::size_t k = std::min(cfg.sgdr_snapshots, result.snapshots.size());
      const auto ens = ensemble::sgdr_snapshots_to_ensemble(result.snapshots, k);
      ModelResult r = score("sgdr-snapshots", ensemble::ensemble_batch(ens, test, eval_mode), test, cfg.n_bins);
      r.k = k;
      rep.models.push_back(std::move(r));
      return 0;
    });
  }

  if (write) {
    stage("write-reports", current, [&] {
      const auto gold = golds(test);
      for (const auto& r : rep.models) write_model_files(dir, r);
      // PR curves are recomputed from the saved per-model distributions.
      auto pr = [&](const std::string& name, const Dists& d) {
        std::ofstream out(dir / ("pr-" + name + ".csv"), std::ios::binary);
        eval::write_pr_csv(out, eval::pr_curve(eval::pr_events(d, gold, test.vocab)));
      };
      for (std::size_t i = 0; i < K; ++i) pr("member-" + std::to_string(i + 1), member_dists[i]);
      for (auto k : cfg.k_values) pr("ensemble-" + std::to_string(k), mix(member_dists, k));
      return 0;
    });
  }
  return rep;
}

}  // namespace

void write_summary_csv(std::ostream& out, const ExperimentSummary& s) {
  out << "seed,model,k,vprime,tokens,accuracy,nll,ece,ece_k,brier,bs_plus,bs_minus,balanced_ece,"
         "balanced_brier,auc,precision,recall,f1\n";
  out.precision(17);
  for (const auto& rep : s.replicates)
    for (const auto& m : rep.models) {
      const auto& r = m.report;
      out << rep.seed << ',' << m.name << ',' << m.k << ',' << m.vprime << ',' << r.tokens << ',' << r.accuracy
          << ',' << r.nll << ',' << r.ece << ',' << r.ece_k << ',' << r.brier << ',' << r.bs_plus << ','
          << r.bs_minus << ',' << r.balanced_ece << ',' << r.balanced_brier << ',' << m.auc << ','
          << m.spans.precision << ',' << m.spans.recall << ',' << m.spans.f1 << '\n';
    }
}

ExperimentSummary run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path out = cfg.output_dir;
  const fs::path stale = out / "STALE";
  std::string current = "setup";
  if (!out.empty()) {
    fs::create_directories(out);
    write_text(stale, "running\n");
    write_text(out / "config.json", experiment_config_to_json(cfg) + "\n");
  }
  ExperimentSummary summary;
  try {
    for (auto seed : cfg.seeds) {
      const fs::path rep_dir = out.empty() ? fs::path{} : out / ("seed-" + std::to_string(seed));
      summary.replicates.push_back(run_replicate(cfg, seed, rep_dir, current));
    }
    if (!out.empty()) {
      current = "write-summary";
      std::ofstream csv(out / "summary.csv", std::ios::binary);
      write_summary_csv(csv, summary);
      if (!csv) throw std::runtime_error("cannot write summary.csv");
    }
  } catch (const std::exception& e) {
    const std::string stage_name =
        dynamic_cast<const ExperimentError*>(&e) ? static_cast<const ExperimentError&>(e).stage() : current;
    if (!out.empty()) write_text(stale, "failed at stage " + stage_name + "\n");
    if (dynamic_cast<const ExperimentError*>(&e)) throw;
    throw ExperimentError(stage_name, e.what());
  }
  if (!out.empty()) fs::remove(stale);
  return summary;
}

}  // namespace csp::experiment
