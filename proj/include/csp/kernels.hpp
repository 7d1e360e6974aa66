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

// Batch kernels over a whole dataset. Each has an OpenMP implementation and a
// plain serial reference with the same contract; tests check they agree and the
// benchmark target compares their speed.
//
// The parallel objective reduces per-block partial sums in a fixed order over a
// partition that depends only on the number of sequences, so results are
// bit-identical across runs and thread counts.

#include <span>
#include <vector>

#include "csp/data.hpp"
#include "csp/taggers.hpp"
#include "csp/teacher_store.hpp"

namespace csp::kernels {

// Token-level training objective, averaged over all tokens of the dataset:
//   (1 - beta) * CE(smoothed gold, p) + beta * KD(teacher, p_tau)
// CRF models support only the plain sequence NLL (smoothing 0, beta 0).
struct Objective {
  double label_smoothing = 0.0;
  double beta = 0.0;
  double temperature = 1.0;
  bool renormalize_teacher = false;
  // One record per token, in dataset order. Required when beta > 0.
  std::span<const distill::TruncatedDistribution> teacher;
};

// Loss for a single token given its logits; adds d(loss)/d(logits) * scale into dlogits.
double token_objective(std::span<const double> logits, std::uint32_t gold,
                       const distill::TruncatedDistribution* teacher, const Objective& obj,
                       double scale, std::span<double> dlogits);

// Mean objective over tokens; grad (same shape as model) receives the gradient.
double objective_and_gradient(const taggers::Model& m, const data::Dataset& d, const Objective& obj,
                              taggers::Model& grad);
double objective_and_gradient_serial(const taggers::Model& m, const data::Dataset& d,
                                     const Objective& obj, taggers::Model& grad);

double objective_value(const taggers::Model& m, const data::Dataset& d, const Objective& obj);

// Mean per-token negative log-likelihood of the gold labels (sequence NLL per
// token for the CRF).
double mean_nll(const taggers::Model& m, const data::Dataset& d);

using BatchDistributions = std::vector<std::vector<TokenDistribution>>;

BatchDistributions batch_distributions(const taggers::Model& m, const data::Dataset& d,
                                       taggers::ArMode mode = taggers::ArMode::kTeacherForced);
BatchDistributions batch_distributions_serial(const taggers::Model& m, const data::Dataset& d,
                                              taggers::ArMode mode = taggers::ArMode::kTeacherForced);

std::vector<std::vector<std::uint32_t>> batch_decode(const taggers::Model& m, const data::Dataset& d);

// Offsets of each sequence's first token in the flattened token stream.
std::vector<std::size_t> token_offsets(const data::Dataset& d);

}  // namespace csp::kernels
