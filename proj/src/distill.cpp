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

#include "csp/distill.hpp"

#include <algorithm>
#include <cmath>

#include "csp/kernels.hpp"

namespace csp::distill {

namespace {
constexpr double kProbFloor = 1e-12;
constexpr std::size_t kMemoizeChunk = 1024;
}  // namespace

DistillConfig DistillConfig::ner_defaults() {
  DistillConfig c;
  c.beta = 5.0 / 6.0;
  c.label_smoothing = 0.0;
  return c;
}

void DistillConfig::validate() const {
  if (beta < 0.0 || beta > 1.0) throw ArgumentError("beta must be in [0, 1]");
  if (!(temperature > 0.0)) throw ArgumentError("temperature must be > 0");
  if (vprime < 1) throw ArgumentError("V' must be >= 1");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) throw ArgumentError("label smoothing must be in [0, 1)");
}

double kd_loss_from_logits(std::span<const double> logits, const TruncatedDistribution& teacher,
                           double temperature) {
  if (!(temperature > 0.0)) throw ArgumentError("temperature must be > 0");
  std::vector<double> scaled(logits.begin(), logits.end());
  for (double& z : scaled) z /= temperature;
  const double lse = log_sum_exp(scaled);
  double loss = 0.0;
  for (std::size_t j = 0; j < teacher.size(); ++j) {
    if (teacher.indices[j] >= logits.size()) throw ArgumentError("teacher index out of range");
    const double logp = std::max(scaled[teacher.indices[j]] - lse, std::log(kProbFloor));
    loss -= static_cast<double>(teacher.probs[j]) * logp;
  }
  return loss;
}

double kd_loss(std::span<const double> student, const TruncatedDistribution& teacher, double temperature) {
  std::vector<double> logits(student.size());
  for (std::size_t y = 0; y < student.size(); ++y) logits[y] = std::log(std::max(student[y], kProbFloor));
  return kd_loss_from_logits(logits, teacher, temperature);
}

double student_loss(const data::TokenSequence& seq, const std::vector<TokenDistribution>& student_dists,
                    const std::vector<TruncatedDistribution>& teacher_records, const DistillConfig& cfg) {
  cfg.validate();
  if (student_dists.size() != seq.size() || teacher_records.size() != seq.size())
    throw ArgumentError("student/teacher/sequence lengths are not aligned");
  double total = 0.0;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const auto& p = student_dists[t];
    const std::size_t V = p.size();
    double nll = 0.0;
    const double off = cfg.label_smoothing / static_cast<double>(V);
    for (std::size_t y = 0; y < V; ++y) {
      const double target = (y == seq.gold[t] ? 1.0 - cfg.label_smoothing : 0.0) + off;
      if (target != 0.0) nll -= target * std::log(std::max(p[y], kProbFloor));
    }
    double tok = 0.0;
    if (cfg.beta < 1.0) tok += (1.0 - cfg.beta) * nll;
    if (cfg.beta > 0.0) tok += cfg.beta * kd_loss(p, teacher_records[t], cfg.temperature);
    total += tok;
  }
  return total / static_cast<double>(seq.size());
}

TeacherStoreHeader memoize_teacher(const ensemble::Ensemble& ens, const data::Dataset& data,
                                   std::size_t vprime, const std::string& out) {
  if (data.empty()) throw ArgumentError("cannot memoize an empty dataset");
  const std::size_t V = ens.num_labels();
  if (V != data.vocab.size()) throw ArgumentError("ensemble and dataset label counts differ");
  if (vprime < 1 || vprime > V) throw ArgumentError("V' must be in [1, V]");
  TeacherStoreWriter writer(out, static_cast<std::uint32_t>(vprime), static_cast<std::uint32_t>(V));
  const std::size_t N = data.sequences.size();
  std::vector<std::vector<TokenDistribution>> chunk;
  for (std::size_t lo = 0; lo < N; lo += kMemoizeChunk) {
    const std::size_t hi = std::min(N, lo + kMemoizeChunk);
    chunk.assign(hi - lo, {});
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(hi - lo); ++i)
      chunk[i] = ensemble::ensemble_marginals(ens, data.sequences[lo + i], taggers::ArMode::kTeacherForced);
    for (const auto& seq : chunk)
      for (const auto& dist : seq) writer.append(truncate_topk(dist, vprime));
  }
  return writer.finish();
}

training::TrainResult train_student(const data::Dataset& data, const data::Dataset& held,
                                    const std::string& store_path, taggers::ModelType model_type,
                                    const DistillConfig& cfg, const training::TrainConfig& tcfg) {
  cfg.validate();
  if (model_type == taggers::ModelType::kCrf)
    throw ArgumentError("students are IID or AR taggers; CRF students are not supported");
  const TeacherStoreHeader header = read_store_header(store_path);
  if (header.token_count != data.total_tokens)
    throw ArgumentError("teacher store has " + std::to_string(header.token_count) +
                        " records but the dataset has " + std::to_string(data.total_tokens) + " tokens");
  if (header.vocab_size != data.vocab.size())
    throw ArgumentError("teacher store label count does not match the dataset");

  const auto records = read_all_records(store_path);
  training::TrainConfig student_cfg = tcfg;
  student_cfg.label_smoothing = cfg.label_smoothing;
  training::TrainOptions opts;
  opts.objective.beta = cfg.beta;
  opts.objective.temperature = cfg.temperature;
  opts.objective.renormalize_teacher = cfg.renormalize_teacher;
  opts.objective.teacher = records;
  return training::train(model_type, data, held, student_cfg, opts);
}

}  // namespace csp::distill
