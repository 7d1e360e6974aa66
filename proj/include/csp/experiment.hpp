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

#pragma once
// End-to-end runs: train members, evaluate them and their ensembles, memoize the
// largest ensemble, distill students, optionally train an SGDR snapshot
// ensemble, and write every report under the output directory.

#include <optional>
#include <string>
#include <vector>

#include "csp/calibration.hpp"
#include "csp/distill.hpp"
#include "csp/eval.hpp"
#include "csp/training.hpp"

namespace csp::experiment {

class ExperimentError : public std::runtime_error {
 public:
  ExperimentError(const std::string& stage, const std::string& what)
      : std::runtime_error("stage '" + stage + "' failed: " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct TaskSpec {
  enum class Kind { kHmm, kFiles };
  Kind kind = Kind::kHmm;
  // kHmm: a fresh random HMM per replicate seed.
  std::size_t states = 5;
  std::size_t obs_symbols = 20;
  std::size_t train_seqs = 2000;
  std::size_t test_seqs = 500;
  int min_len = 5;
  int max_len = 15;
  // kFiles: JSONL datasets shared by every replicate.
  std::string train_path;
  std::string test_path;
};

enum class Diversity {
  kFold,  // member i holds out fold i (and uses its own seed)
  kSeed,  // every member sees the same split; only the seed differs
};

struct ExperimentConfig {
  TaskSpec task;
  taggers::ModelType member_type = taggers::ModelType::kIid;
  taggers::ModelType student_type = taggers::ModelType::kIid;
  std::vector<std::size_t> k_values{1, 3, 5};  // ensembles are prefixes of the members
  Diversity diversity = Diversity::kFold;
  std::size_t n_folds = 10;
  std::vector<std::size_t> vprimes{0};  // 0 = all labels; empty = no students
  distill::DistillConfig distill = distill::DistillConfig::ner_defaults();
  std::vector<std::uint64_t> seeds{1};  // one replicate per seed
  training::TrainConfig member_train;
  std::optional<training::TrainConfig> student_train;  // defaults to member_train
  std::optional<training::TrainConfig> sgdr_train;     // enables the snapshot ensemble
  std::size_t sgdr_snapshots = 5;
  std::size_t n_bins = calibration::kDefaultBins;
  std::string output_dir;  // empty: nothing written

  void validate() const;
  std::size_t max_k() const;
};

ExperimentConfig experiment_config_from_json_text(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);
std::string experiment_config_to_json(const ExperimentConfig& cfg);

// One evaluated predictor within a replicate. Names: member-<i>, individual
// (mean over members), ensemble-<K>, student-v<V'>, sgdr-final, sgdr-snapshots.
struct ModelResult {
  std::string name;
  std::size_t k = 1;
  std::size_t vprime = 0;
  calibration::CalibrationReport report;
  double auc = 0.0;
  eval::SpanScores spans;
};

struct ReplicateResult {
  std::uint64_t seed = 0;
  std::vector<ModelResult> models;
  const ModelResult& get(const std::string& name) const;  // throws ArgumentError
};

struct ExperimentSummary {
  std::vector<ReplicateResult> replicates;
};

// Workers for member training: CSP_THREADS if set, else 1.
int member_threads();

ExperimentSummary run_experiment(const ExperimentConfig& cfg);

// Column order: seed,model,k,vprime,tokens,accuracy,nll,ece,ece_k,brier,bs_plus,
// bs_minus,balanced_ece,balanced_brier,auc,precision,recall,f1
void write_summary_csv(std::ostream& out, const ExperimentSummary& s);

}  // namespace csp::experiment
