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

#include "csp/eval.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace csp::eval {

std::vector<Span> extract_spans(const std::vector<std::string>& tags) {
  std::vector<Span> spans;
  std::optional<Span> open;
  auto close = [&](std::size_t at) {
    if (open) {
      open->end = at;
      spans.push_back(*open);
      open.reset();
    }
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& tag = tags[i];
    if (tag == "O") {
      close(i);
      continue;
    }
    const bool prefixed = tag.size() > 2 && tag[1] == '-' && (tag[0] == 'B' || tag[0] == 'I');
    if (!prefixed) {
      close(i);
      spans.push_back({tag, i, i + 1});
      continue;
    }
    const std::string type = tag.substr(2);
    if (tag[0] == 'I' && open && open->type == type) continue;
    close(i);
    open = Span{type, i, 0};
  }
  close(tags.size());
  return spans;
}

std::vector<std::string> render_iob2(const std::vector<Span>& spans, std::size_t length) {
  std::vector<std::string> tags(length, "O");
  for (const auto& s : spans) {
    if (s.start >= s.end || s.end > length) throw ArgumentError("span out of range");
    tags[s.start] = "B-" + s.type;
    for (std::size_t i = s.start + 1; i < s.end; ++i) tags[i] = "I-" + s.type;
  }
  return tags;
}

SpanScores span_f1(const std::vector<std::vector<std::string>>& pred,
                   const std::vector<std::vector<std::string>>& gold) {
  if (pred.size() != gold.size()) throw ArgumentError("span_f1: sequence counts differ");
  SpanScores s;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != gold[i].size())
      throw ArgumentError("span_f1: length mismatch in sequence " + std::to_string(i));
    const auto p = extract_spans(pred[i]);
    const auto g = extract_spans(gold[i]);
    const std::set<Span> gs(g.begin(), g.end());
    s.predicted += p.size();
    s.gold += g.size();
    for (const auto& span : p) s.matched += gs.count(span);
  }
  if (s.predicted == 0) {
    s.precision_undefined = true;
  } else {
    s.precision = static_cast<double>(s.matched) / static_cast<double>(s.predicted);
  }
  if (s.gold > 0) s.recall = static_cast<double>(s.matched) / static_cast<double>(s.gold);
  if (s.precision + s.recall > 0.0) s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

SpanScores span_f1(const std::vector<std::vector<std::uint32_t>>& pred,
                   const std::vector<std::vector<std::uint32_t>>& gold, const data::LabelVocab& vocab) {
  auto to_tags = [&](const std::vector<std::vector<std::uint32_t>>& ids) {
    std::vector<std::vector<std::string>> out;
    out.reserve(ids.size());
    for (const auto& seq : ids) {
      auto& row = out.emplace_back();
      for (auto y : seq) row.push_back(vocab.label(y));
    }
    return out;
  };
  return span_f1(to_tags(pred), to_tags(gold));
}

// ---- Precision / recall ---------------------------------------------------------

namespace {

double trapezoid_auc(std::vector<PrPoint> pts) {
  std::stable_sort(pts.begin(), pts.end(), [](const PrPoint& a, const PrPoint& b) {
    if (a.recall != b.recall) return a.recall < b.recall;
    return a.threshold > b.threshold;
  });
  double auc = 0.0, r0 = 0.0, p0 = 1.0;
  for (const auto& p : pts) {
    auc += (p.recall - r0) * (p.precision + p0) / 2.0;
    r0 = p.recall;
    p0 = p.precision;
  }
  return auc;
}

}  // namespace

PrCurve pr_curve(const std::vector<calibration::BinaryEvent>& events,
                 const std::optional<std::vector<double>>& thresholds) {
  std::size_t positives = 0;
  for (const auto& e : events) positives += e.outcome ? 1 : 0;
  if (positives == 0) throw ArgumentError("pr_curve: no positive events");

  std::vector<double> taus;
  if (thresholds) {
    taus = *thresholds;
  } else {
    for (const auto& e : events) taus.push_back(e.prob);
  }
  std::sort(taus.begin(), taus.end());
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());

  // Events by descending probability; walk thresholds from the top down.
  std::vector<calibration::BinaryEvent> sorted = events;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.prob > b.prob; });
  PrCurve curve;
  curve.points.resize(taus.size());
  std::size_t tp = 0, fp = 0, next = 0;
  for (std::size_t i = taus.size(); i-- > 0;) {
    while (next < sorted.size() && sorted[next].prob >= taus[i]) {
      (sorted[next].outcome ? tp : fp)++;
      ++next;
    }
    PrPoint& pt = curve.points[i];
    pt.threshold = taus[i];
    // No predicted positives: precision 0 by convention.
    pt.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    pt.recall = static_cast<double>(tp) / static_cast<double>(positives);
  }
  curve.auc = trapezoid_auc(curve.points);
  return curve;
}

std::vector<calibration::BinaryEvent> pr_events(const std::vector<std::vector<TokenDistribution>>& dists,
                                                const std::vector<std::vector<std::uint32_t>>& gold,
                                                const data::LabelVocab& vocab,
                                                const std::optional<std::string>& type) {
  const auto view = calibration::type_level_view(dists, gold, vocab);
  if (!type) return view.events;
  auto it = view.records.find(*type);
  if (it == view.records.end()) throw ArgumentError("unknown entity type '" + *type + "'");
  std::vector<calibration::BinaryEvent> out;
  out.reserve(it->second.size());
  for (const auto& r : it->second) out.push_back({r.confidence, r.correct});
  return out;
}

void write_pr_csv(std::ostream& out, const PrCurve& curve) {
  out << "threshold,precision,recall\n";
  out.precision(17);
  for (const auto& p : curve.points) out << p.threshold << ',' << p.precision << ',' << p.recall << '\n';
}

PrCurve read_pr_csv(std::istream& in) {
  PrCurve curve;
  std::string line;
  std::getline(in, line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    PrPoint p;
    char c1 = 0, c2 = 0;
    if (!(ss >> p.threshold >> c1 >> p.precision >> c2 >> p.recall) || c1 != ',' || c2 != ',')
      throw ParseError("PR CSV: expected threshold,precision,recall", lineno);
    curve.points.push_back(p);
  }
  curve.auc = trapezoid_auc(curve.points);
  return curve;
}

}  // namespace csp::eval
