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

#include "csp/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace csp::calibration {

using json = nlohmann::json;

double brier(const std::vector<BinaryEvent>& events) {
  if (events.empty()) throw ArgumentError("brier of no events");
  double s = 0.0;
  for (const auto& e : events) {
    const double d = e.prob - (e.outcome ? 1.0 : 0.0);
    s += d * d;
  }
  return s / static_cast<double>(events.size());
}

StratifiedBrier stratified_brier(const std::vector<BinaryEvent>& events) {
  std::vector<BinaryEvent> pos, neg;
  for (const auto& e : events) (e.outcome ? pos : neg).push_back(e);
  if (pos.empty()) throw ArgumentError("stratified brier: positive stratum is empty");
  if (neg.empty()) throw ArgumentError("stratified brier: negative stratum is empty");
  return {brier(pos), brier(neg)};
}

// ---- Binning ------------------------------------------------------------------------

namespace {

std::vector<std::size_t> sorted_order(std::size_t n, const auto& conf_of) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return conf_of(a) < conf_of(b); });
  return order;
}

// Group sizes for n items in b bins, larger bins first.
std::vector<std::size_t> group_sizes(std::size_t n, std::size_t b) {
  if (b < 1) throw ArgumentError("n_bins must be >= 1");
  if (b > n) throw ArgumentError("n_bins (" + std::to_string(b) + ") exceeds number of items (" +
                                 std::to_string(n) + ")");
  std::vector<std::size_t> sizes(b, n / b);
  for (std::size_t i = 0; i < n % b; ++i) ++sizes[i];
  return sizes;
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

}  // namespace

std::vector<std::vector<double>> adaptive_groups(const std::vector<double>& confidences, std::size_t n_bins) {
  const auto sizes = group_sizes(confidences.size(), n_bins);
  const auto order = sorted_order(confidences.size(), [&](std::size_t i) { return confidences[i]; });
  std::vector<std::vector<double>> groups;
  std::size_t pos = 0;
  for (auto sz : sizes) {
    groups.emplace_back();
    for (std::size_t i = 0; i < sz; ++i) groups.back().push_back(confidences[order[pos++]]);
  }
  return groups;
}

ReliabilityBins adaptive_bins(const std::vector<PredictionRecord>& records, std::size_t n_bins) {
  const auto sizes = group_sizes(records.size(), n_bins);
  const auto order = sorted_order(records.size(), [&](std::size_t i) { return records[i].confidence; });
  ReliabilityBins out;
  out.total = records.size();
  std::size_t pos = 0;
  for (auto sz : sizes) {
    ReliabilityBin bin;
    bin.count = sz;
    double conf = 0.0, correct = 0.0;
    for (std::size_t i = 0; i < sz; ++i) {
      const auto& r = records[order[pos + i]];
      conf += r.confidence;
      correct += r.correct ? 1.0 : 0.0;
    }
    bin.lower = records[order[pos]].confidence;
    bin.upper = records[order[pos + sz - 1]].confidence;
    bin.mean_confidence = conf / static_cast<double>(sz);
    bin.accuracy = correct / static_cast<double>(sz);
    out.bins.push_back(bin);
    pos += sz;
  }
  return out;
}

double ece_from_bins(const ReliabilityBins& bins) {
  double e = 0.0;
  for (const auto& b : bins.bins)
    e += static_cast<double>(b.count) / static_cast<double>(bins.total) * std::abs(b.mean_confidence - b.accuracy);
  return e;
}

double ece(const std::vector<PredictionRecord>& records, std::size_t n_bins) {
  return ece_from_bins(adaptive_bins(records, n_bins));
}

std::vector<PredictionRecord> top1_records(const std::vector<std::vector<TokenDistribution>>& dists,
                                           const std::vector<std::vector<std::uint32_t>>& gold) {
  if (dists.size() != gold.size()) throw ArgumentError("distributions and gold differ in sequence count");
  std::vector<PredictionRecord> out;
  for (std::size_t s = 0; s < dists.size(); ++s) {
    if (dists[s].size() != gold[s].size()) throw ArgumentError("sequence length mismatch");
    for (std::size_t t = 0; t < dists[s].size(); ++t) {
      const auto y = static_cast<std::uint32_t>(argmax(dists[s][t]));
      out.push_back({dists[s][t][y], y == gold[s][t], y, s, t});
    }
  }
  return out;
}

double ece_topk(const std::vector<TokenDistribution>& dists, const std::vector<std::uint32_t>& gold,
                std::size_t k, std::size_t n_bins, TopKMode mode) {
  if (dists.size() != gold.size()) throw ArgumentError("distributions and gold differ in length");
  if (dists.empty()) throw ArgumentError("ece_topk of no tokens");
  if (k < 1 || k > dists.front().size()) throw ArgumentError("k must be in [1, V]");
  std::vector<std::vector<PredictionRecord>> by_rank(k);
  std::vector<std::uint32_t> order;
  for (std::size_t t = 0; t < dists.size(); ++t) {
    const auto& d = dists[t];
    order.resize(d.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return d[a] > d[b]; });
    for (std::size_t j = 0; j < k; ++j) by_rank[j].push_back({d[order[j]], order[j] == gold[t], order[j], 0, t});
  }
  if (mode == TopKMode::kPerRank) {
    double s = 0.0;
    for (const auto& r : by_rank) s += ece(r, n_bins);
    return s / static_cast<double>(k);
  }
  std::vector<PredictionRecord> pooled;
  pooled.reserve(dists.size() * k);
  // Token-major order: all k records of token 1, then token 2, ...
  for (std::size_t t = 0; t < dists.size(); ++t)
    for (std::size_t j = 0; j < k; ++j) pooled.push_back(by_rank[j][t]);
  return ece(pooled, n_bins);
}

// ---- Balanced metrics -------------------------------------------------------------

TypeLevelView type_level_view(const std::vector<std::vector<TokenDistribution>>& dists,
                              const std::vector<std::vector<std::uint32_t>>& gold,
                              const data::LabelVocab& vocab) {
  if (dists.size() != gold.size()) throw ArgumentError("distributions and gold differ in sequence count");
  // Type index for every label; O is excluded.
  std::vector<std::string> types;
  std::vector<int> type_of(vocab.size(), -1);
  for (std::size_t y = 0; y < vocab.size(); ++y) {
    const std::string t = data::tag_type(vocab.label(y));
    if (t == "O") continue;
    auto it = std::find(types.begin(), types.end(), t);
    if (it == types.end()) {
      types.push_back(t);
      it = types.end() - 1;
    }
    type_of[y] = static_cast<int>(it - types.begin());
  }
  TypeLevelView view;
  for (const auto& t : types) {
    view.records[t];
    view.counts[t] = 0;
  }
  std::vector<double> mass(types.size());
  for (std::size_t s = 0; s < dists.size(); ++s) {
    if (dists[s].size() != gold[s].size()) throw ArgumentError("sequence length mismatch");
    for (std::size_t t = 0; t < dists[s].size(); ++t) {
      std::fill(mass.begin(), mass.end(), 0.0);
      for (std::size_t y = 0; y < vocab.size(); ++y)
        if (type_of[y] >= 0) mass[type_of[y]] += dists[s][t][y];
      const int gold_type = type_of[gold[s][t]];
      if (gold_type >= 0) ++view.counts[types[gold_type]];
      for (std::size_t c = 0; c < types.size(); ++c) {
        const bool hit = gold_type == static_cast<int>(c);
        const double p = std::min(1.0, mass[c]);
        view.records[types[c]].push_back({p, hit, static_cast<std::uint32_t>(c), s, t});
        view.events.push_back({p, hit});
      }
    }
  }
  return view;
}

ClassRecords balanced_filter(const ClassRecords& records, const ClassCounts& counts,
                             std::vector<std::string>* skipped) {
  ClassRecords out;
  for (const auto& [cls, recs] : records) {
    auto it = counts.find(cls);
    const std::size_t n = it == counts.end() ? 0 : it->second;
    if (n == 0) {
      warn("class '" + cls + "' has no gold tokens; skipped in balanced metrics");
      if (skipped) skipped->push_back(cls);
      continue;
    }
    std::vector<std::size_t> order(recs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return recs[a].confidence > recs[b].confidence; });
    const std::size_t keep = std::min(recs.size(), 2 * n);
    auto& dst = out[cls];
    for (std::size_t i = 0; i < keep; ++i) dst.push_back(recs[order[i]]);
  }
  return out;
}

namespace {

template <typename Metric>
double balanced_combine(const ClassRecords& records, const ClassCounts& counts, Metric metric) {
  const ClassRecords kept = balanced_filter(records, counts);
  if (kept.empty()) throw ArgumentError("balanced metric: no class has gold tokens");
  double total_n = 0.0;
  for (const auto& [cls, recs] : kept) total_n += static_cast<double>(counts.at(cls));
  double s = 0.0;
  for (const auto& [cls, recs] : kept) s += static_cast<double>(counts.at(cls)) / total_n * metric(recs);
  return s;
}

}  // namespace

double balanced_ece(const ClassRecords& records, const ClassCounts& counts, std::size_t n_bins) {
  return balanced_combine(records, counts, [&](const std::vector<PredictionRecord>& recs) {
    return ece(recs, std::min(n_bins, recs.size()));
  });
}

double balanced_brier(const ClassRecords& records, const ClassCounts& counts) {
  return balanced_combine(records, counts, [](const std::vector<PredictionRecord>& recs) {
    std::vector<BinaryEvent> ev;
    ev.reserve(recs.size());
    for (const auto& r : recs) ev.push_back({r.confidence, r.correct});
    return brier(ev);
  });
}

// ---- Temperature scaling ------------------------------------------------------------

double temperature_nll(const std::vector<std::vector<double>>& logits, const std::vector<std::uint32_t>& gold,
                       double temperature) {
  if (logits.empty() || logits.size() != gold.size()) throw ArgumentError("logits and gold must align");
  double s = 0.0;
  std::vector<double> scaled;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    scaled.assign(logits[i].begin(), logits[i].end());
    for (double& z : scaled) z /= temperature;
    s += log_sum_exp(scaled) - scaled[gold[i]];
  }
  return s / static_cast<double>(logits.size());
}

TemperatureFit fit_temperature(const std::vector<std::vector<double>>& logits,
                               const std::vector<std::uint32_t>& gold) {
  if (logits.empty()) throw ArgumentError("fit_temperature needs data");
  for (const auto& row : logits)
    for (double z : row)
      if (!std::isfinite(z)) throw ArgumentError("fit_temperature: non-finite logit");
  TemperatureFit fit;
  fit.nll_at_one = temperature_nll(logits, gold, 1.0);
  fit.nll_at_fit = fit.nll_at_one;
  const bool degenerate = std::all_of(logits.begin(), logits.end(), [](const std::vector<double>& row) {
    return std::all_of(row.begin(), row.end(), [&](double z) { return z == row.front(); });
  });
  if (degenerate) {
    warn("all logit vectors are constant; temperature fixed at 1");
    fit.degenerate = true;
    return fit;
  }
  auto f = [&](double log_t) { return temperature_nll(logits, gold, std::exp(log_t)); };
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = -4.0, b = 4.0;
  double c = b - invphi * (b - a), d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > 1e-6) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  const double log_t = 0.5 * (a + b);
  const double nll = f(log_t);
  if (nll <= fit.nll_at_one) {
    fit.temperature = std::exp(log_t);
    fit.nll_at_fit = nll;
  }
  return fit;
}

TokenDistribution apply_temperature(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw ArgumentError("temperature must be > 0");
  std::vector<double> scaled(logits.begin(), logits.end());
  for (double& z : scaled) z /= temperature;
  softmax_inplace(scaled);
  return scaled;
}

// ---- Reports ----------------------------------------------------------------------

CalibrationReport evaluate(const std::vector<std::vector<TokenDistribution>>& dists,
                           const std::vector<std::vector<std::uint32_t>>& gold, const data::LabelVocab& vocab,
                           std::size_t n_bins) {
  CalibrationReport r;
  r.n_bins = n_bins;
  const auto top1 = top1_records(dists, gold);
  if (top1.empty()) throw ArgumentError("evaluate: no tokens");
  r.tokens = top1.size();
  double correct = 0.0, nll = 0.0;
  std::vector<TokenDistribution> flat;
  std::vector<std::uint32_t> flat_gold;
  for (std::size_t s = 0; s < dists.size(); ++s)
    for (std::size_t t = 0; t < dists[s].size(); ++t) {
      flat.push_back(dists[s][t]);
      flat_gold.push_back(gold[s][t]);
      nll -= std::log(std::max(dists[s][t][gold[s][t]], 1e-12));
    }
  for (const auto& rec : top1) correct += rec.correct ? 1.0 : 0.0;
  r.accuracy = correct / static_cast<double>(r.tokens);
  r.nll = nll / static_cast<double>(r.tokens);
  r.reliability = adaptive_bins(top1, std::min(n_bins, top1.size()));
  r.ece = ece_from_bins(r.reliability);
  r.k = std::min<std::size_t>(5, vocab.size());
  r.ece_k = ece_topk(flat, flat_gold, r.k, std::min(n_bins, flat.size() * r.k));

  const TypeLevelView view = type_level_view(dists, gold, vocab);
  if (!view.events.empty()) {
    r.brier = brier(view.events);
    const bool has_pos = std::any_of(view.events.begin(), view.events.end(), [](auto& e) { return e.outcome; });
    const bool has_neg = std::any_of(view.events.begin(), view.events.end(), [](auto& e) { return !e.outcome; });
    if (has_pos && has_neg) {
      const auto sb = stratified_brier(view.events);
      r.bs_plus = sb.bs_plus;
      r.bs_minus = sb.bs_minus;
    }
    if (has_pos) {
      r.balanced_ece = balanced_ece(view.records, view.counts, n_bins);
      r.balanced_brier = balanced_brier(view.records, view.counts);
    }
  }
  return r;
}

std::string report_to_json(const CalibrationReport& r) {
  json bins = json::array();
  for (const auto& b : r.reliability.bins)
    bins.push_back({{"count", b.count},
                    {"mean_conf", b.mean_confidence},
                    {"accuracy", b.accuracy},
                    {"lower", b.lower},
                    {"upper", b.upper}});
  json j = {{"tokens", r.tokens},
            {"accuracy", r.accuracy},
            {"nll", r.nll},
            {"brier", r.brier},
            {"bs_plus", r.bs_plus},
            {"bs_minus", r.bs_minus},
            {"ece", r.ece},
            {"ece_k", r.ece_k},
            {"k", r.k},
            {"balanced_ece", r.balanced_ece},
            {"balanced_brier", r.balanced_brier},
            {"n_bins", r.n_bins},
            {"reliability", bins}};
  return j.dump(2);
}

CalibrationReport report_from_json(const std::string& text) {
  json j = json::parse(text);
  CalibrationReport r;
  r.tokens = j.at("tokens").get<std::size_t>();
  r.accuracy = j.at("accuracy").get<double>();
  r.nll = j.at("nll").get<double>();
  r.brier = j.at("brier").get<double>();
  r.bs_plus = j.at("bs_plus").get<double>();
  r.bs_minus = j.at("bs_minus").get<double>();
  r.ece = j.at("ece").get<double>();
  r.ece_k = j.at("ece_k").get<double>();
  r.k = j.at("k").get<std::size_t>();
  r.balanced_ece = j.at("balanced_ece").get<double>();
  r.balanced_brier = j.at("balanced_brier").get<double>();
  r.n_bins = j.at("n_bins").get<std::size_t>();
  for (const auto& b : j.at("reliability")) {
    ReliabilityBin bin;
    bin.count = b.at("count").get<std::size_t>();
    bin.mean_confidence = b.at("mean_conf").get<double>();
    bin.accuracy = b.at("accuracy").get<double>();
    bin.lower = b.at("lower").get<double>();
    bin.upper = b.at("upper").get<double>();
    r.reliability.total += bin.count;
    r.reliability.bins.push_back(bin);
  }
  return r;
}

void write_reliability_csv(std::ostream& out, const ReliabilityBins& bins) {
  out << "bin_index,count,mean_conf,accuracy,lower,upper\n";
  out.precision(17);
  for (std::size_t i = 0; i < bins.bins.size(); ++i) {
    const auto& b = bins.bins[i];
    out << i << ',' << b.count << ',' << b.mean_confidence << ',' << b.accuracy << ',' << b.lower << ','
        << b.upper << '\n';
  }
}

ReliabilityBins read_reliability_csv(std::istream& in) {
  ReliabilityBins out;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw ParseError("reliability CSV: expected 6 columns", out.bins.size() + 2);
    ReliabilityBin b;
    b.count = std::stoull(cells[1]);
    b.mean_confidence = std::stod(cells[2]);
    b.accuracy = std::stod(cells[3]);
    b.lower = std::stod(cells[4]);
    b.upper = std::stod(cells[5]);
    out.total += b.count;
    out.bins.push_back(b);
  }
  return out;
}

}  // namespace csp::calibration
