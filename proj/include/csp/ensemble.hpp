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

#include <string>
#include <vector>

#include "csp/data.hpp"
#include "csp/kernels.hpp"
#include "csp/taggers.hpp"
#include "csp/training.hpp"

namespace csp::ensemble {

// Uniformly weighted collection of K >= 1 taggers over one label vocabulary.
class Ensemble {
 public:
  Ensemble() = default;
  explicit Ensemble(std::vector<taggers::Model> members);

  std::size_t size() const { return members_.size(); }
  std::size_t num_labels() const;
  const std::vector<taggers::Model>& members() const { return members_; }
  const taggers::Model& member(std::size_t i) const { return members_.at(i); }

 private:
  std::vector<taggers::Model> members_;
};

// Elementwise mean of K distributions over the same V labels.
TokenDistribution mixture(const std::vector<TokenDistribution>& dists);

// Per-position mixture of every member's token-level distribution (CRF members
// contribute forward-backward marginals). Teacher-forced AR members need gold.
std::vector<TokenDistribution> ensemble_marginals(const Ensemble& ens, const data::TokenSequence& seq,
                                                  taggers::ArMode mode = taggers::ArMode::kTeacherForced);
// Argmax of ensemble_marginals per position, ties to the lowest label.
std::vector<std::uint32_t> ensemble_predict(const Ensemble& ens, const data::TokenSequence& seq,
                                            taggers::ArMode mode = taggers::ArMode::kFreeRunning);

// Mixture distributions for every sequence, parallel over sequences.
kernels::BatchDistributions ensemble_batch(const Ensemble& ens, const data::Dataset& d,
                                           taggers::ArMode mode = taggers::ArMode::kTeacherForced);

// ---- Run directories ------------------------------------------------------------

struct ManifestEntry {
  std::size_t id = 0;  // 1-based, seed order
  std::uint64_t seed = 0;
  taggers::ModelType model_type = taggers::ModelType::kIid;
  std::string path;    // relative to the manifest's directory unless absolute
};

struct Manifest {
  std::vector<std::string> labels;
  std::vector<ManifestEntry> members;
};

void save_manifest(const std::string& path, const Manifest& m);
Manifest load_manifest(const std::string& path);

// Loads members listed in <run_dir>/manifest.json. `subset` holds 1-based member
// ids; members are always taken in seed order so {1..k} is a prefix of {1..k+1}.
Ensemble build_ensemble(const std::string& run_dir, const std::vector<std::size_t>& subset);
// Same, from an explicit manifest file path; an empty subset loads every member.
Ensemble load_ensemble(const std::string& manifest_path, const std::vector<std::size_t>& subset = {});

// Wraps the last k snapshots of an SGDR run as an ensemble.
Ensemble sgdr_snapshots_to_ensemble(const std::vector<training::Snapshot>& snapshots, std::size_t k);

}  // namespace csp::ensemble
