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
// Reference computations written directly from the definitions, shared by the
// unit tests and the acceptance binary. Deliberately slow and simple.

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "csp/calibration.hpp"
#include "csp/taggers.hpp"

namespace csp::oracles {

using calibration::PredictionRecord;
using taggers::CrfParams;

// Path score computed straight from the parameters.
inline double oracle_score(const CrfParams& p, const std::vector<std::uint32_t>& x, const std::vector<std::uint32_t>& y) {
  double s = p.start[y.front()] + p.stop[y.back()];
  for (std::size_t t = 0; t < x.size(); ++t) {
    s += p.emission.weights(x[t], y[t]) + p.emission.bias[y[t]];
    if (t > 0) s += p.transitions(y[t - 1], y[t]);
  }
  return s;
}

struct Enumeration {
  double log_z = 0.0;
  std::vector<std::vector<double>> marginals;
  std::vector<std::uint32_t> best;
  double best_score = -std::numeric_limits<double>::infinity();
};

// Sums over all V^T label paths.
inline Enumeration enumerate_paths(const CrfParams& p, const std::vector<std::uint32_t>& x) {
  const std::size_t V = p.start.size(), T = x.size();
  std::size_t total = 1;
  for (std::size_t t = 0; t < T; ++t) total *= V;
  std::vector<double> scores(total);
  std::vector<std::vector<std::uint32_t>> paths(total);
  double mx = -std::numeric_limits<double>::infinity();
  Enumeration e;
  for (std::size_t code = 0; code < total; ++code) {
    std::vector<std::uint32_t> y(T);
    std::size_t c = code;
    for (std::size_t t = 0; t < T; ++t) {
      y[t] = static_cast<std::uint32_t>(c % V);
      c /= V;
    }
    scores[code] = oracle_score(p, x, y);
    mx = std::max(mx, scores[code]);
    paths[code] = y;
  }
  double z = 0.0;
  for (double s : scores) z += std::exp(s - mx);
  e.log_z = mx + std::log(z);
  e.marginals.assign(T, std::vector<double>(V, 0.0));
  for (std::size_t code = 0; code < total; ++code) {
    const double w = std::exp(scores[code] - e.log_z);
    for (std::size_t t = 0; t < T; ++t) e.marginals[t][paths[code][t]] += w;
    if (scores[code] > e.best_score) {
      e.best_score = scores[code];
      e.best = paths[code];
    }
  }
  return e;
}

// Reference implementations written from the metric definitions.

inline double oracle_ece(std::vector<std::pair<double, bool>> recs, std::size_t bins) {
  std::vector<std::size_t> idx(recs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return recs[a].first < recs[b].first || (recs[a].first == recs[b].first && a < b);
  });
  const std::size_t n = recs.size();
  double e = 0.0;
  std::size_t pos = 0;
  for (std::size_t b = 0; b < bins; ++b) {
    const std::size_t size = n / bins + (b < n % bins ? 1 : 0);
    double conf = 0.0, acc = 0.0;
    for (std::size_t j = pos; j < pos + size; ++j) {
      conf += recs[idx[j]].first;
      acc += recs[idx[j]].second;
    }
    e += std::abs(conf - acc) / static_cast<double>(n);
    pos += size;
  }
  return e;
}

inline double oracle_brier(const std::vector<std::pair<double, bool>>& recs) {
  double s = 0.0;
  for (auto [p, o] : recs) s += (p - o) * (p - o);
  return s / static_cast<double>(recs.size());
}

inline std::vector<std::pair<double, bool>> oracle_topk(const std::vector<TokenDistribution>& d,
                                                 const std::vector<std::uint32_t>& gold, std::size_t k) {
  std::vector<std::pair<double, bool>> out;
  for (std::size_t t = 0; t < d.size(); ++t) {
    std::vector<std::uint32_t> order(d[t].size());
    for (std::uint32_t y = 0; y < order.size(); ++y) order[y] = y;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return d[t][a] > d[t][b] || (d[t][a] == d[t][b] && a < b); });
    for (std::size_t j = 0; j < k; ++j) out.push_back({d[t][order[j]], order[j] == gold[t]});
  }
  return out;
}

inline std::vector<std::pair<double, bool>> oracle_keep(const std::vector<PredictionRecord>& recs, std::size_t n) {
  std::vector<std::size_t> idx(recs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return recs[a].confidence > recs[b].confidence || (recs[a].confidence == recs[b].confidence && a < b);
  });
  std::vector<std::pair<double, bool>> out;
  for (std::size_t i = 0; i < std::min(2 * n, idx.size()); ++i) out.push_back({recs[idx[i]].confidence, recs[idx[i]].correct});
  return out;
}

}  // namespace csp::oracles
