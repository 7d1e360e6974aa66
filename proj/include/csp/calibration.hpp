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
#include <map>
#include <string>
#include <vector>

#include "csp/core.hpp"
#include "csp/data.hpp"

namespace csp::calibration {

inline constexpr std::size_t kDefaultBins = 10;

// A predicted probability for a binary event and whether the event happened.
struct BinaryEvent {
  double prob = 0.0;
  bool outcome = false;
};

struct PredictionRecord {
  double confidence = 0.0;
  bool correct = false;
  std::uint32_t class_id = 0;
  std::size_t sequence = 0;
  std::size_t position = 0;
};

double brier(const std::vector<BinaryEvent>& events);

struct StratifiedBrier {
  double bs_plus = 0.0;   // positive events only
  double bs_minus = 0.0;  // negative events only
};
StratifiedBrier stratified_brier(const std::vector<BinaryEvent>& events);

// ---- Adaptive binning -----------------------------------------------------------

struct ReliabilityBin {
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double accuracy = 0.0;
  double lower = 0.0;  // smallest confidence in the bin
  double upper = 0.0;  // largest confidence in the bin
};

struct ReliabilityBins {
  std::vector<ReliabilityBin> bins;
  std::size_t total = 0;
};

// Stable ascending sort of the confidences, cut into n_bins contiguous groups
// whose sizes differ by at most one (larger groups first).
std::vector<std::vector<double>> adaptive_groups(const std::vector<double>& confidences, std::size_t n_bins);
ReliabilityBins adaptive_bins(const std::vector<PredictionRecord>& records, std::size_t n_bins);

double ece(const std::vector<PredictionRecord>& records, std::size_t n_bins = kDefaultBins);
double ece_from_bins(const ReliabilityBins& bins);

// One record per token: the argmax label with its probability.
std::vector<PredictionRecord> top1_records(const std::vector<std::vector<TokenDistribution>>& dists,
                                           const std::vector<std::vector<std::uint32_t>>& gold);

enum class TopKMode { kPooled, kPerRank };

// k records per token (the j-th most probable label, ties to the lower index),
// scored as one pooled ECE or as the mean of per-rank ECEs.
double ece_topk(const std::vector<TokenDistribution>& dists, const std::vector<std::uint32_t>& gold,
                std::size_t k, std::size_t n_bins = kDefaultBins, TopKMode mode = TopKMode::kPooled);

// ---- Balanced metrics -----------------------------------------------------------

using ClassRecords = std::map<std::string, std::vector<PredictionRecord>>;
using ClassCounts = std::map<std::string, std::size_t>;

struct TypeLevelView {
  ClassRecords records;  // per type: one record per token, confidence = p(type)
  ClassCounts counts;    // per type: tokens whose gold label has that type
  std::vector<BinaryEvent> events;  // every (token, type) pair as a binary event
};

// Collapses B-/I- labels into entity types (O excluded) and builds per-type
// records over all tokens.
TypeLevelView type_level_view(const std::vector<std::vector<TokenDistribution>>& dists,
                              const std::vector<std::vector<std::uint32_t>>& gold,
                              const data::LabelVocab& vocab);

// Keeps, per class c, the 2 * N_c most confident records (stable on ties).
// Classes with N_c = 0 are dropped and reported in `skipped`.
ClassRecords balanced_filter(const ClassRecords& records, const ClassCounts& counts,
                             std::vector<std::string>* skipped = nullptr);
double balanced_ece(const ClassRecords& records, const ClassCounts& counts, std::size_t n_bins = kDefaultBins);
double balanced_brier(const ClassRecords& records, const ClassCounts& counts);

// ---- Temperature scaling --------------------------------------------------------

struct TemperatureFit {
  double temperature = 1.0;
  double nll_at_one = 0.0;
  double nll_at_fit = 0.0;
  bool degenerate = false;  // every logit vector was constant; T = 1 returned
};

double temperature_nll(const std::vector<std::vector<double>>& logits, const std::vector<std::uint32_t>& gold,
                       double temperature);
// Golden-section search on log T over [-4, 4] to 1e-6; never worse than T = 1.
TemperatureFit fit_temperature(const std::vector<std::vector<double>>& logits,
                               const std::vector<std::uint32_t>& gold);
TokenDistribution apply_temperature(std::span<const double> logits, double temperature);

// ---- Reports ----------------------------------------------------------------------

struct CalibrationReport {
  std::size_t tokens = 0;
  double accuracy = 0.0;
  double nll = 0.0;
  double brier = 0.0;
  double bs_plus = 0.0;
  double bs_minus = 0.0;
  double ece = 0.0;       // top-1
  double ece_k = 0.0;     // pooled top-k, k = min(5, V)
  std::size_t k = 0;
  double balanced_ece = 0.0;
  double balanced_brier = 0.0;
  std::size_t n_bins = kDefaultBins;
  ReliabilityBins reliability;
};

CalibrationReport evaluate(const std::vector<std::vector<TokenDistribution>>& dists,
                           const std::vector<std::vector<std::uint32_t>>& gold, const data::LabelVocab& vocab,
                           std::size_t n_bins = kDefaultBins);

std::string report_to_json(const CalibrationReport& r);
CalibrationReport report_from_json(const std::string& text);
void write_reliability_csv(std::ostream& out, const ReliabilityBins& bins);
ReliabilityBins read_reliability_csv(std::istream& in);

}  // namespace csp::calibration
