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

#include "csp/calibration.hpp"

namespace csp::eval {

struct Span {
  std::string type;
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // exclusive
  auto operator<=>(const Span&) const = default;
};

// IOB2 spans. An I-X that does not continue an X span opens a new one. Tags
// without a B-/I- prefix (other than O) are single-token spans of their own type.
std::vector<Span> extract_spans(const std::vector<std::string>& tags);
std::vector<std::string> render_iob2(const std::vector<Span>& spans, std::size_t length);

struct SpanScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t predicted = 0;
  std::size_t gold = 0;
  std::size_t matched = 0;
  bool precision_undefined = false;  // no predicted spans; precision reported as 0
};

// Micro-averaged exact-match span scores over all sequences.
SpanScores span_f1(const std::vector<std::vector<std::string>>& pred,
                   const std::vector<std::vector<std::string>>& gold);
SpanScores span_f1(const std::vector<std::vector<std::uint32_t>>& pred,
                   const std::vector<std::vector<std::uint32_t>>& gold, const data::LabelVocab& vocab);

// ---- Precision / recall ---------------------------------------------------------

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  bool operator==(const PrPoint&) const = default;
};

struct PrCurve {
  std::vector<PrPoint> points;  // ascending threshold
  double auc = 0.0;
  bool operator==(const PrCurve&) const = default;
};

// Sweeps thresholds (default: every distinct confidence) predicting positive
// where prob >= threshold. AUC is the trapezoid rule over the points sorted by
// recall, starting from (recall 0, precision 1).
PrCurve pr_curve(const std::vector<calibration::BinaryEvent>& events,
                 const std::optional<std::vector<double>>& thresholds = std::nullopt);

// Events for PR analysis: one per (token, entity type). With `type` set, only
// that type's events; otherwise all types pooled.
std::vector<calibration::BinaryEvent> pr_events(const std::vector<std::vector<TokenDistribution>>& dists,
                                                const std::vector<std::vector<std::uint32_t>>& gold,
                                                const data::LabelVocab& vocab,
                                                const std::optional<std::string>& type = std::nullopt);

void write_pr_csv(std::ostream& out, const PrCurve& curve);
PrCurve read_pr_csv(std::istream& in);

}  // namespace csp::eval
