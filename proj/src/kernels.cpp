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

#include "csp/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace csp::kernels {

using taggers::ArParams;
using taggers::CrfParams;
using taggers::IidParams;
using taggers::Model;
using taggers::ModelType;

namespace {

constexpr std::size_t kMaxBlocks = 16;
constexpr double kProbFloor = 1e-12;

void check_objective(const Model& m, const data::Dataset& d, const Objective& obj) {
  if (obj.beta < 0.0 || obj.beta > 1.0) throw ArgumentError("beta must be in [0, 1]");
  if (!(obj.temperature > 0.0)) throw ArgumentError("temperature must be > 0");
  if (obj.label_smoothing < 0.0 || obj.label_smoothing >= 1.0)
    throw ArgumentError("label smoothing must be in [0, 1)");
  if (taggers::model_type(m) == ModelType::kCrf && (obj.beta != 0.0 || obj.label_smoothing != 0.0))
    throw ArgumentError("CRF models train on the plain sequence NLL only");
  if (obj.beta > 0.0 && obj.teacher.size() != d.total_tokens)
    throw ArgumentError("teacher records (" + std::to_string(obj.teacher.size()) +
                        ") do not match dataset tokens (" + std::to_string(d.total_tokens) + ")");
}

// Sum (not mean) of token losses for one sequence; gradient * scale goes into grad when given.
double sequence_objective(const Model& m, const data::TokenSequence& seq, std::size_t offset,
                          const Objective& obj, double scale, Model* grad) {
  const std::size_t V = taggers::num_labels(m);
  switch (taggers::model_type(m)) {
    case ModelType::kCrf: {
      const auto& p = std::get<CrfParams>(m);
      if (grad) return taggers::crf_nll_accumulate(p, seq, scale, std::get<CrfParams>(*grad));
      auto fb = taggers::crf_forward_backward(p, seq.tokens);
      return fb.log_z - taggers::crf_path_score(p, seq.tokens, seq.gold);
    }
    case ModelType::kIid:
    case ModelType::kAr: {
      const bool ar = taggers::model_type(m) == ModelType::kAr;
      std::vector<double> logits(V), dlogits(V);
      double total = 0.0;
      for (std::size_t t = 0; t < seq.size(); ++t) {
        std::size_t prev = 0;
        if (ar) {
          const auto& p = std::get<ArParams>(m);
          prev = t == 0 ? p.bos() : seq.gold[t - 1];
          taggers::ar_logits_at(p, seq.tokens, t, prev, logits);
        } else {
          std::get<IidParams>(m).emission.scores(seq.tokens, t, logits);
        }
        const distill::TruncatedDistribution* teacher =
            obj.beta > 0.0 ? &obj.teacher[offset + t] : nullptr;
        std::fill(dlogits.begin(), dlogits.end(), 0.0);
        total += token_objective(logits, seq.gold[t], teacher, obj, scale, dlogits);
        if (!grad) continue;
        if (ar) {
          auto& g = std::get<ArParams>(*grad);
          std::get<ArParams>(m).emission.backprop(seq.tokens, t, dlogits, g.emission);
          auto row = g.prev_label.row(prev);
          for (std::size_t y = 0; y < V; ++y) row[y] += dlogits[y];
        } else {
          std::get<IidParams>(m).emission.backprop(seq.tokens, t, dlogits,
                                                   std::get<IidParams>(*grad).emission);
        }
      }
      return total;
    }
  }
  return 0.0;
}

void add_into(Model& dst, const Model& src) {
  auto d = taggers::param_blocks(dst);
  auto s = taggers::param_blocks(src);
  for (std::size_t b = 0; b < d.size(); ++b)
    for (std::size_t i = 0; i < d[b].size(); ++i) d[b][i] += s[b][i];
}

void zero(Model& m) {
  for (auto b : taggers::param_blocks(m)) std::fill(b.begin(), b.end(), 0.0);
}

void check_finite(double loss, const Model& m, const data::Dataset& d,
                  const std::vector<std::size_t>& offsets, const Objective& obj, std::size_t lo,
                  std::size_t hi) {
  if (std::isfinite(loss)) return;
  for (std::size_t i = lo; i < hi; ++i) {
    if (!std::isfinite(sequence_objective(m, d.sequences[i], offsets[i], obj, 1.0, nullptr)))
      throw TrainingError("non-finite loss at sequence " + std::to_string(i));
  }
  throw TrainingError("non-finite loss in sequences [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + ")");
}

}  // namespace

double token_objective(std::span<const double> logits, std::uint32_t gold,
                       const distill::TruncatedDistribution* teacher, const Objective& obj,
                       double scale, std::span<double> dlogits) {
  const std::size_t V = logits.size();
  double loss = 0.0;
  if (obj.beta < 1.0) {
    const double w = 1.0 - obj.beta;
    const double lse = log_sum_exp(logits);
    const double off = obj.label_smoothing / static_cast<double>(V);
    double nll = 0.0;
    for (std::size_t y = 0; y < V; ++y) {
      const double target = (y == gold ? 1.0 - obj.label_smoothing : 0.0) + off;
      if (target != 0.0) nll -= target * (logits[y] - lse);
      dlogits[y] += scale * w * (std::exp(logits[y] - lse) - target);
    }
    loss += w * nll;
  }
  if (obj.beta > 0.0) {
    const double tau = obj.temperature;
    std::vector<double> scaled(logits.begin(), logits.end());
    for (double& z : scaled) z /= tau;
    const double lse = log_sum_exp(scaled);
    const double mass = obj.renormalize_teacher ? teacher->mass() : 1.0;
    double kd = 0.0, tsum = 0.0;
    for (std::size_t j = 0; j < teacher->size(); ++j) {
      const std::uint32_t y = teacher->indices[j];
      const double tp = static_cast<double>(teacher->probs[j]) / mass;
      const double logp = std::max(scaled[y] - lse, std::log(kProbFloor));
      kd -= tp * logp;
      tsum += tp;
      dlogits[y] -= scale * obj.beta * tp / tau;
    }
    for (std::size_t y = 0; y < V; ++y) dlogits[y] += scale * obj.beta * tsum * std::exp(scaled[y] - lse) / tau;
    loss += obj.beta * kd;
  }
  return loss;
}

std::vector<std::size_t> token_offsets(const data::Dataset& d) {
  std::vector<std::size_t> off(d.sequences.size() + 1, 0);
  for (std::size_t i = 0; i < d.sequences.size(); ++i) off[i + 1] = off[i] + d.sequences[i].size();
  return off;
}

double objective_and_gradient(const Model& m, const data::Dataset& d, const Objective& obj, Model& grad) {
  check_objective(m, d, obj);
  zero(grad);
  const std::size_t N = d.sequences.size();
  if (N == 0 || d.total_tokens == 0) return 0.0;
  const auto offsets = token_offsets(d);
  const double scale = 1.0 / static_cast<double>(d.total_tokens);
  const std::size_t B = std::min(N, kMaxBlocks);

  std::vector<Model> block_grads(B, taggers::zeros_like(m));
  std::vector<double> block_loss(B, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(B); ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * N / B, hi = (static_cast<std::size_t>(b) + 1) * N / B;
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i)
      acc += sequence_objective(m, d.sequences[i], offsets[i], obj, scale, &block_grads[b]);
    block_loss[b] = acc;
  }
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t lo = b * N / B, hi = (b + 1) * N / B;
    check_finite(block_loss[b], m, d, offsets, obj, lo, hi);
    total += block_loss[b];
    add_into(grad, block_grads[b]);
  }
  return total * scale;
}

double objective_and_gradient_serial(const Model& m, const data::Dataset& d, const Objective& obj,
                                     Model& grad) {
  check_objective(m, d, obj);
  zero(grad);
  if (d.total_tokens == 0) return 0.0;
  const auto offsets = token_offsets(d);
  const double scale = 1.0 / static_cast<double>(d.total_tokens);
  double total = 0.0;
  for (std::size_t i = 0; i < d.sequences.size(); ++i) {
    const double l = sequence_objective(m, d.sequences[i], offsets[i], obj, scale, &grad);
    check_finite(l, m, d, offsets, obj, i, i + 1);
    total += l;
  }
  return total * scale;
}

double objective_value(const Model& m, const data::Dataset& d, const Objective& obj) {
  check_objective(m, d, obj);
  const std::size_t N = d.sequences.size();
  if (N == 0 || d.total_tokens == 0) return 0.0;
  const auto offsets = token_offsets(d);
  const std::size_t B = std::min(N, kMaxBlocks);
  std::vector<double> block_loss(B, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(B); ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * N / B, hi = (static_cast<std::size_t>(b) + 1) * N / B;
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += sequence_objective(m, d.sequences[i], offsets[i], obj, 1.0, nullptr);
    block_loss[b] = acc;
  }
  double total = 0.0;
  for (double l : block_loss) total += l;
  return total / static_cast<double>(d.total_tokens);
}

double mean_nll(const Model& m, const data::Dataset& d) { return objective_value(m, d, Objective{}); }

BatchDistributions batch_distributions(const Model& m, const data::Dataset& d, taggers::ArMode mode) {
  BatchDistributions out(d.sequences.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(d.sequences.size()); ++i)
    out[i] = taggers::token_distributions(m, d.sequences[i], mode);
  return out;
}

BatchDistributions batch_distributions_serial(const Model& m, const data::Dataset& d, taggers::ArMode mode) {
  BatchDistributions out;
  out.reserve(d.sequences.size());
  for (const auto& s : d.sequences) out.push_back(taggers::token_distributions(m, s, mode));
  return out;
}

std::vector<std::vector<std::uint32_t>> batch_decode(const Model& m, const data::Dataset& d) {
  std::vector<std::vector<std::uint32_t>> out(d.sequences.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(d.sequences.size()); ++i)
    out[i] = taggers::decode(m, d.sequences[i].tokens);
  return out;
}

}  // namespace csp::kernels
