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

#include "csp/training.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace csp::training {

using json = nlohmann::json;
using taggers::Model;

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ArgumentError("lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ArgumentError("momentum must be in [0, 1)");
  if (epochs < 0) throw ArgumentError("epochs must be >= 0");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0)
    throw ArgumentError("label_smoothing must be in [0, 1)");
  if (init_scale < 0.0) throw ArgumentError("init_scale must be >= 0");
  if (l2 < 0.0) throw ArgumentError("l2 must be >= 0");
  if (schedule == Schedule::kSgdr) {
    if (sgdr.eta_min > sgdr.eta_max) throw ArgumentError("sgdr: eta_min must be <= eta_max");
    if (sgdr.eta_min < 0.0) throw ArgumentError("sgdr: eta_min must be >= 0");
    if (sgdr.cycle_len < 1) throw ArgumentError("sgdr: cycle_len must be >= 1");
    if (sgdr.t_mult < 1) throw ArgumentError("sgdr: t_mult must be >= 1");
  }
  if (features == taggers::FeatureKind::kWindow && hash_buckets == 0)
    throw ArgumentError("window features need hash_buckets > 0");
}

TrainConfig train_config_from_json_text(const std::string& text) {
  json j = json::parse(text);
  if (!j.is_object()) throw ArgumentError("training config must be a JSON object");
  TrainConfig c;
  for (auto& [key, v] : j.items()) {
    if (key == "lr") c.lr = v.get<double>();
    else if (key == "momentum") c.momentum = v.get<double>();
    else if (key == "epochs") c.epochs = v.get<int>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "label_smoothing") c.label_smoothing = v.get<double>();
    else if (key == "early_stop_patience") c.early_stop_patience = v.get<int>();
    else if (key == "init_scale") c.init_scale = v.get<double>();
    else if (key == "l2") c.l2 = v.get<double>();
    else if (key == "schedule") {
      const auto s = v.get<std::string>();
      if (s == "constant") c.schedule = TrainConfig::Schedule::kConstant;
      else if (s == "sgdr") c.schedule = TrainConfig::Schedule::kSgdr;
      else throw ArgumentError("unknown schedule '" + s + "'");
    } else if (key == "eta_min") c.sgdr.eta_min = v.get<double>();
    else if (key == "eta_max") c.sgdr.eta_max = v.get<double>();
    else if (key == "cycle_len") c.sgdr.cycle_len = v.get<int>();
    else if (key == "t_mult") c.sgdr.t_mult = v.get<int>();
    else if (key == "features") {
      const auto s = v.get<std::string>();
      if (s == "unigram") c.features = taggers::FeatureKind::kUnigram;
      else if (s == "window") c.features = taggers::FeatureKind::kWindow;
      else throw ArgumentError("unknown feature kind '" + s + "'");
    } else if (key == "hash_buckets") c.hash_buckets = v.get<std::size_t>();
    else throw ArgumentError("unknown training config key '" + key + "'");
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return train_config_from_json_text(ss.str());
}

std::string train_config_to_json(const TrainConfig& c) {
  json j = {{"lr", c.lr},
            {"momentum", c.momentum},
            {"epochs", c.epochs},
            {"seed", c.seed},
            {"label_smoothing", c.label_smoothing},
            {"early_stop_patience", c.early_stop_patience},
            {"init_scale", c.init_scale},
            {"l2", c.l2},
            {"schedule", c.schedule == TrainConfig::Schedule::kSgdr ? "sgdr" : "constant"},
            {"eta_min", c.sgdr.eta_min},
            {"eta_max", c.sgdr.eta_max},
            {"cycle_len", c.sgdr.cycle_len},
            {"t_mult", c.sgdr.t_mult},
            {"features", c.features == taggers::FeatureKind::kWindow ? "window" : "unigram"},
            {"hash_buckets", c.hash_buckets}};
  return j.dump();
}

TokenDistribution smoothed_target(std::uint32_t gold, std::size_t V, double lambda) {
  if (gold >= V) throw ArgumentError("gold label out of range");
  TokenDistribution t(V, lambda / static_cast<double>(V));
  t[gold] += 1.0 - lambda;
  return t;
}

double cross_entropy(std::span<const double> target, std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  double ce = 0.0;
  for (std::size_t y = 0; y < logits.size(); ++y)
    if (target[y] != 0.0) ce -= target[y] * (logits[y] - lse);
  return ce;
}

double sgdr_lr(int step_in_cycle, int cycle_len, const SgdrSchedule& s) {
  if (cycle_len < 1 || step_in_cycle < 0 || step_in_cycle > cycle_len)
    throw ArgumentError("sgdr step out of range");
  if (step_in_cycle == cycle_len) return s.eta_min;
  const double frac = static_cast<double>(step_in_cycle) / static_cast<double>(cycle_len);
  return s.eta_min + 0.5 * (s.eta_max - s.eta_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

double sgdr_lr(int step_in_cycle, const TrainConfig& cfg) {
  return sgdr_lr(step_in_cycle, cfg.sgdr.cycle_len, cfg.sgdr);
}

taggers::FeatureMap make_feature_map(const TrainConfig& cfg, std::size_t obs_vocab) {
  if (cfg.features == taggers::FeatureKind::kWindow)
    return taggers::FeatureMap::window(obs_vocab, cfg.hash_buckets);
  return taggers::FeatureMap::unigram(obs_vocab);
}

Model init_model(taggers::ModelType type, const taggers::FeatureMap& features, std::size_t num_labels,
                 double init_scale, std::uint64_t seed) {
  Model m = taggers::make_model(type, features, num_labels);
  if (init_scale == 0.0) return m;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, init_scale);
  for (auto block : taggers::param_blocks(m))
    for (double& v : block) v = normal(rng);
  return m;
}

namespace {

double l2_term(const Model& m, double l2, Model* grad) {
  if (l2 == 0.0) return 0.0;
  double sq = 0.0;
  auto w = taggers::param_blocks(m);
  for (std::size_t b = 0; b < w.size(); ++b)
    for (double v : w[b]) sq += v * v;
  if (grad) {
    auto g = taggers::param_blocks(*grad);
    for (std::size_t b = 0; b < w.size(); ++b)
      for (std::size_t i = 0; i < w[b].size(); ++i) g[b][i] += l2 * w[b][i];
  }
  return 0.5 * l2 * sq;
}

std::size_t first_non_finite(const Model& m, const data::Dataset& d) {
  for (std::size_t i = 0; i < d.sequences.size(); ++i) {
    const auto one = data::make_dataset({d.sequences[i]}, d.vocab, d.obs_vocab_size);
    if (!std::isfinite(kernels::mean_nll(m, one))) return i;
  }
  return d.sequences.size();
}

}  // namespace

TrainResult train(taggers::ModelType type, const data::Dataset& train_data, const data::Dataset& held,
                  const TrainConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  if (train_data.empty()) throw ArgumentError("training data is empty");
  const bool sgdr = cfg.schedule == TrainConfig::Schedule::kSgdr;
  const bool early_stop = !sgdr && cfg.early_stop_patience > 0;
  if (early_stop && held.empty()) throw ArgumentError("early stopping needs a non-empty held set");

  Model model = opts.warm_start ? *opts.warm_start
                                : init_model(type, make_feature_map(cfg, train_data.obs_vocab_size),
                                             train_data.vocab.size(), cfg.init_scale, cfg.seed);
  if (taggers::model_type(model) != type) throw ArgumentError("warm start has the wrong model type");
  if (taggers::num_labels(model) != train_data.vocab.size())
    throw ArgumentError("model label count does not match the data");

  kernels::Objective obj = opts.objective;
  obj.label_smoothing = cfg.label_smoothing;

  Model grad = taggers::zeros_like(model);
  Model velocity = taggers::zeros_like(model);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  TrainResult result;
  auto held_nll = [&](const Model& m) { return held.empty() ? nan : kernels::mean_nll(m, held); };
  double best_held = held_nll(model);
  result.history.push_back({0, kernels::objective_value(model, train_data, obj) + l2_term(model, cfg.l2, nullptr),
                            best_held, 0.0});
  Model best = model;
  int since_best = 0;
  int cycle_len = cfg.sgdr.cycle_len;
  int step_in_cycle = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double lr = cfg.lr;
    if (sgdr) lr = sgdr_lr(++step_in_cycle, cycle_len, cfg.sgdr);

    double loss = kernels::objective_and_gradient(model, train_data, obj, grad);
    loss += l2_term(model, cfg.l2, &grad);
    if (!std::isfinite(loss))
      throw TrainingError("training loss became non-finite at epoch " + std::to_string(epoch) +
                          ", training sequence " + std::to_string(first_non_finite(model, train_data)));

    auto w = taggers::param_blocks(model);
    auto g = taggers::param_blocks(grad);
    auto v = taggers::param_blocks(velocity);
    for (std::size_t b = 0; b < w.size(); ++b)
      for (std::size_t i = 0; i < w[b].size(); ++i) {
        v[b][i] = cfg.momentum * v[b][i] + g[b][i];
        w[b][i] -= lr * v[b][i];
      }

    const double h = held_nll(model);
    if (!held.empty() && !std::isfinite(h))
      throw TrainingError("held NLL became non-finite at epoch " + std::to_string(epoch) + ", held sequence " +
                          std::to_string(first_non_finite(model, held)));
    result.history.push_back({epoch, loss, h, lr});

    if (sgdr && step_in_cycle == cycle_len) {
      result.snapshots.push_back({model, epoch, lr});
      step_in_cycle = 0;
      cycle_len *= cfg.sgdr.t_mult;
    }
    if (early_stop) {
      if (h < best_held) {
        best_held = h;
        best = model;
        result.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= cfg.early_stop_patience) {
        break;
      }
    }
  }
  if (early_stop) {
    result.params = std::move(best);
  } else {
    result.params = std::move(model);
    result.best_epoch = result.history.back().epoch;
  }
  return result;
}

void write_history_csv(std::ostream& out, const std::vector<HistoryRow>& history) {
  out << "epoch,train_nll,held_nll,lr\n";
  out.precision(17);
  for (const auto& r : history) out << r.epoch << ',' << r.train_nll << ',' << r.held_nll << ',' << r.lr << '\n';
}

}  // namespace csp::training
