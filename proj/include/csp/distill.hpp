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
#include "csp/ensemble.hpp"
#include "csp/taggers.hpp"
#include "csp/teacher_store.hpp"
#include "csp/training.hpp"

namespace csp::distill {

struct DistillConfig {
  double beta = 0.5;          // weight on the distillation term
  double temperature = 1.0;   // applied to the student logits only
  std::size_t vprime = 64;    // top-V' truncation of the teacher
  double label_smoothing = 0.1;
  bool renormalize_teacher = false;

  // Token-level NER recipe: beta = 5/6, no label smoothing.
  static DistillConfig ner_defaults();
  void validate() const;
};

// -sum_{j in support} p_teacher(j) * log softmax(log(student) / temperature)_j,
// with student probabilities clamped at 1e-12.
double kd_loss(std::span<const double> student, const TruncatedDistribution& teacher, double temperature);
double kd_loss_from_logits(std::span<const double> logits, const TruncatedDistribution& teacher,
                           double temperature);

// Per-token mean of (1 - beta) * smoothed NLL + beta * KD.
double student_loss(const data::TokenSequence& seq, const std::vector<TokenDistribution>& student_dists,
                    const std::vector<TruncatedDistribution>& teacher_records, const DistillConfig& cfg);

// Streams one truncated mixture record per training token (dataset order) to
// `out`. AR members are evaluated with teacher forcing.
TeacherStoreHeader memoize_teacher(const ensemble::Ensemble& ens, const data::Dataset& data,
                                   std::size_t vprime, const std::string& out);

// Trains a fresh IID or AR student on (data, teacher store) with the
// interpolated loss. With beta = 0 this is exactly training::train.
training::TrainResult train_student(const data::Dataset& data, const data::Dataset& held,
                                    const std::string& store_path, taggers::ModelType model_type,
                                    const DistillConfig& cfg, const training::TrainConfig& tcfg);

}  // namespace csp::distill
