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

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "csp/data.hpp"
#include "csp/kernels.hpp"
#include "csp/taggers.hpp"

namespace csp::training {

struct SgdrSchedule {
  double eta_min = 0.0;
  double eta_max = 0.1;
  int cycle_len = 10;  // T_i, in optimizer steps (epochs: training is full-batch)
  int t_mult = 1;
};

struct TrainConfig {
  enum class Schedule { kConstant, kSgdr };

  double lr = 0.1;
  double momentum = 0.9;
  int epochs = 100;
  std::uint64_t seed = 1;
  double label_smoothing = 0.0;
  // Stop after this many epochs without held-NLL improvement; <= 0 disables
  // early stopping. Ignored under SGDR.
  int early_stop_patience = 5;
  // Standard deviation of the Gaussian parameter initialization.
  double init_scale = 0.1;
  double l2 = 0.0;
  Schedule schedule = Schedule::kConstant;
  SgdrSchedule sgdr;
  taggers::FeatureKind features = taggers::FeatureKind::kUnigram;
  std::size_t hash_buckets = 1 << 14;

  void validate() const;
};

// Reads a flat JSON object ({"lr":0.1,"epochs":50,"schedule":"sgdr",...}).
// Unknown keys are an error.
TrainConfig load_train_config(const std::string& path);
TrainConfig train_config_from_json_text(const std::string& text);
std::string train_config_to_json(const TrainConfig& cfg);

// (1 - lambda) + lambda / V at gold, lambda / V elsewhere.
TokenDistribution smoothed_target(std::uint32_t gold, std::size_t V, double lambda);
// Cross-entropy of a target distribution against softmax(logits).
double cross_entropy(std::span<const double> target, std::span<const double> logits);

// eta_min + (eta_max - eta_min) * (1 + cos(pi * step / T_i)) / 2, for step in [0, T_i].
double sgdr_lr(int step_in_cycle, int cycle_len, const SgdrSchedule& s);
double sgdr_lr(int step_in_cycle, const TrainConfig& cfg);

struct HistoryRow {
  int epoch = 0;
  double train_nll = 0.0;  // training objective at the parameters before the step
  double held_nll = 0.0;   // held NLL after the step (epoch 0: at initialization)
  double lr = 0.0;
};

struct Snapshot {
  taggers::Model params;
  int step = 0;
  double lr_at_save = 0.0;
};

struct TrainResult {
  taggers::Model params;
  std::vector<HistoryRow> history;
  std::vector<Snapshot> snapshots;
  int best_epoch = 0;
};

// Gaussian initialization N(0, init_scale^2) for every parameter, seeded.
taggers::Model init_model(taggers::ModelType type, const taggers::FeatureMap& features,
                          std::size_t num_labels, double init_scale, std::uint64_t seed);
taggers::FeatureMap make_feature_map(const TrainConfig& cfg, std::size_t obs_vocab);

struct TrainOptions {
  kernels::Objective objective;               // label smoothing is taken from the config
  std::optional<taggers::Model> warm_start;   // replaces the random initialization
};

// Full-batch gradient descent with momentum. Returns the best held-NLL
// checkpoint under early stopping, otherwise the final parameters.
TrainResult train(taggers::ModelType type, const data::Dataset& train_data, const data::Dataset& held,
                  const TrainConfig& cfg, const TrainOptions& opts = {});

void write_history_csv(std::ostream& out, const std::vector<HistoryRow>& history);

}  // namespace csp::training
