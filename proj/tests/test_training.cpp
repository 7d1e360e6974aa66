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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "csp/kernels.hpp"
#include "csp/training.hpp"
#include "test_util.hpp"

using namespace csp;
using namespace csp::training;
using taggers::Model;
using taggers::ModelType;

TEST(SmoothedTarget, Examples) {
  const auto one_hot = smoothed_target(2, 4, 0.0);
  EXPECT_EQ(one_hot, (std::vector<double>{0, 0, 1, 0}));
  const auto s = smoothed_target(1, 4, 0.1);
  EXPECT_DOUBLE_EQ(s[1], 0.925);
  EXPECT_DOUBLE_EQ(s[0], 0.025);
  EXPECT_NEAR(std::accumulate(s.begin(), s.end(), 0.0), 1.0, 1e-15);
  EXPECT_THROW(smoothed_target(4, 4, 0.1), ArgumentError);
}

TEST(SmoothedTarget, ZeroSmoothingCrossEntropyIsNll) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto z = csp::testing::random_vector(rng, 5, 3.0);
    const std::uint32_t y = rng() % 5;
    EXPECT_EQ(cross_entropy(smoothed_target(y, 5, 0.0), z), log_sum_exp(z) - z[y]);
  }
}

TEST(Sgdr, ScheduleShape) {
  SgdrSchedule s{0.01, 0.5, 10, 1};
  EXPECT_DOUBLE_EQ(sgdr_lr(0, 10, s), 0.5);
  EXPECT_DOUBLE_EQ(sgdr_lr(10, 10, s), 0.01);
  EXPECT_NEAR(sgdr_lr(5, 10, s), 0.255, 1e-15);
  for (int i = 0; i < 10; ++i) EXPECT_GE(sgdr_lr(i, 10, s), sgdr_lr(i + 1, 10, s));
  EXPECT_THROW(sgdr_lr(11, 10, s), ArgumentError);
}

TEST(Config, JsonRoundTripAndValidation) {
  const auto c = train_config_from_json_text(
      R"({"lr":0.3,"epochs":7,"schedule":"sgdr","eta_min":0.001,"eta_max":0.3,"cycle_len":4,"t_mult":2,)"
      R"("features":"window","hash_buckets":128,"label_smoothing":0.1})");
  EXPECT_EQ(c.epochs, 7);
  EXPECT_EQ(c.schedule, TrainConfig::Schedule::kSgdr);
  EXPECT_EQ(c.sgdr.t_mult, 2);
  EXPECT_EQ(c.features, taggers::FeatureKind::kWindow);
  const auto back = train_config_from_json_text(train_config_to_json(c));
  EXPECT_EQ(train_config_to_json(back), train_config_to_json(c));
  EXPECT_THROW(train_config_from_json_text(R"({"learning_rate":0.1})"), ArgumentError);
  EXPECT_THROW(train_config_from_json_text(R"({"label_smoothing":1.0})"), ArgumentError);
  EXPECT_THROW(train_config_from_json_text(R"({"schedule":"sgdr","eta_min":0.5,"eta_max":0.1})"), ArgumentError);
  EXPECT_THROW(train_config_from_json_text(R"({"schedule":"sgdr","cycle_len":0})"), ArgumentError);
}

namespace {

data::Dataset separable(std::size_t n, std::uint64_t seed) {
  // Observation o always carries label o % 3.
  std::mt19937_64 rng(seed);
  std::vector<data::TokenSequence> seqs;
  for (std::size_t i = 0; i < n; ++i) {
    data::TokenSequence s;
    for (int t = 0; t < 6; ++t) {
      const auto o = static_cast<std::uint32_t>(rng() % 9);
      s.tokens.push_back(o);
      s.gold.push_back(o % 3);
    }
    seqs.push_back(s);
  }
  return data::make_dataset(seqs, csp::testing::numbered_labels(3), 9);
}

double accuracy(const Model& m, const data::Dataset& d) {
  double ok = 0;
  for (const auto& s : d.sequences) {
    const auto y = taggers::decode(m, s.tokens);
    for (std::size_t t = 0; t < s.size(); ++t) ok += y[t] == s.gold[t];
  }
  return ok / static_cast<double>(d.total_tokens);
}

}  // namespace

TEST(Train, SeparableToyReachesFullAccuracy) {
  const auto train_set = separable(100, 1), held = separable(30, 2);
  TrainConfig cfg;
  cfg.epochs = 50;
  const auto r = train(ModelType::kIid, train_set, held, cfg);
  EXPECT_GE(accuracy(r.params, held), 0.99);
}

TEST(Train, DeterministicAndEarlyStoppingSelectsBest) {
  std::mt19937_64 rng(3);
  const auto d = csp::testing::random_dataset(rng, 60, 8, 12, 3);
  auto [tr, held] = data::split_dataset(d, 5, 0, 1);
  TrainConfig cfg;
  cfg.epochs = 80;
  cfg.lr = 2.0;
  cfg.early_stop_patience = 3;
  cfg.features = taggers::FeatureKind::kWindow;
  cfg.hash_buckets = 256;
  for (auto type : {ModelType::kIid, ModelType::kCrf, ModelType::kAr}) {
    const auto a = train(type, tr, held, cfg);
    const auto b = train(type, tr, held, cfg);
    EXPECT_TRUE(a.params == b.params);
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
      EXPECT_EQ(a.history[i].train_nll, b.history[i].train_nll);
      EXPECT_EQ(a.history[i].held_nll, b.history[i].held_nll);
    }
    EXPECT_TRUE(a.snapshots.empty());
    EXPECT_LE(kernels::mean_nll(a.params, held), a.history.front().held_nll);
    EXPECT_EQ(kernels::mean_nll(a.params, held), a.history[a.best_epoch].held_nll);
  }
}

TEST(Train, SgdrSnapshotsAtCycleMinima) {
  std::mt19937_64 rng(4);
  const auto d = csp::testing::random_dataset(rng, 20, 6, 8, 3);
  TrainConfig cfg;
  cfg.schedule = TrainConfig::Schedule::kSgdr;
  cfg.sgdr = {0.001, 0.5, 3, 2};
  cfg.epochs = 21;
  const auto r = train(ModelType::kIid, d, d, cfg);
  ASSERT_EQ(r.snapshots.size(), 3u);  // cycles of 3, 6, 12 steps
  EXPECT_EQ(r.snapshots[0].step, 3);
  EXPECT_EQ(r.snapshots[1].step, 9);
  EXPECT_EQ(r.snapshots[2].step, 21);
  for (const auto& s : r.snapshots) {
    EXPECT_EQ(s.lr_at_save, cfg.sgdr.eta_min);
    EXPECT_EQ(r.history[s.step].lr, cfg.sgdr.eta_min);
  }
  EXPECT_TRUE(r.snapshots.back().params == r.params);
  for (const auto& h : r.history)
    if (h.epoch > 0 && h.lr == cfg.sgdr.eta_min)
      EXPECT_TRUE(std::any_of(r.snapshots.begin(), r.snapshots.end(), [&](auto& s) { return s.step == h.epoch; }));
}

TEST(Train, DivergenceNamesSequence) {
  std::mt19937_64 rng(5);
  const auto d = csp::testing::random_dataset(rng, 10, 5, 6, 3);
  TrainConfig cfg;
  cfg.lr = 1e308;
  cfg.epochs = 5;
  cfg.early_stop_patience = 0;
  try {
    train(ModelType::kIid, d, data::Dataset{}, cfg);
    FAIL() << "expected divergence";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("sequence"), std::string::npos) << e.what();
  }
}

TEST(Train, HistoryCsv) {
  std::ostringstream out;
  write_history_csv(out, {{0, 1.5, 1.25, 0.0}, {1, 1.0, 0.75, 0.1}});
  EXPECT_EQ(out.str(), "epoch,train_nll,held_nll,lr\n0,1.5,1.25,0\n1,1,0.75,0.10000000000000001\n");
}

// ---- Kernels -----------------------------------------------------------------------

namespace {

std::vector<distill::TruncatedDistribution> random_teacher(std::mt19937_64& rng, std::size_t n, std::size_t V,
                                                           std::size_t vprime) {
  std::vector<distill::TruncatedDistribution> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(distill::truncate_topk(csp::testing::random_distribution(rng, V), vprime));
  return out;
}

}  // namespace

TEST(Kernels, ParallelMatchesSerialBitForBit) {
  std::mt19937_64 rng(6);
  const auto d = csp::testing::random_dataset(rng, 57, 9, 10, 4);
  const auto teacher = random_teacher(rng, d.total_tokens, 4, 3);
  for (auto type : {ModelType::kIid, ModelType::kCrf, ModelType::kAr}) {
    Model m = taggers::make_model(type, taggers::FeatureMap::window(10, 64), 4);
    csp::testing::randomize(m, rng);
    kernels::Objective obj;
    if (type != ModelType::kCrf) {
      obj.label_smoothing = 0.1;
      obj.beta = 0.6;
      obj.temperature = 2.0;
      obj.teacher = teacher;
    }
    Model g1 = taggers::zeros_like(m), g2 = taggers::zeros_like(m);
    const double a = kernels::objective_and_gradient(m, d, obj, g1);
    const double b = kernels::objective_and_gradient_serial(m, d, obj, g2);
    EXPECT_NEAR(a, b, 1e-12);
    EXPECT_NEAR(a, kernels::objective_value(m, d, obj), 1e-12);
    const auto b1 = taggers::param_blocks(std::as_const(g1));
    const auto b2 = taggers::param_blocks(std::as_const(g2));
    for (std::size_t k = 0; k < b1.size(); ++k)
      for (std::size_t i = 0; i < b1[k].size(); ++i) EXPECT_NEAR(b1[k][i], b2[k][i], 1e-12);
    // Repeated parallel evaluation is bit-identical.
    Model g3 = taggers::zeros_like(m);
    EXPECT_EQ(kernels::objective_and_gradient(m, d, obj, g3), a);
    EXPECT_TRUE(g3 == g1);
    for (auto mode : {taggers::ArMode::kTeacherForced, taggers::ArMode::kFreeRunning})
      EXPECT_EQ(kernels::batch_distributions(m, d, mode), kernels::batch_distributions_serial(m, d, mode));
  }
}

TEST(Kernels, ObjectiveGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  const auto d = csp::testing::random_dataset(rng, 6, 5, 5, 3);
  const auto teacher = random_teacher(rng, d.total_tokens, 3, 2);
  const double h = 1e-5;
  for (auto type : {ModelType::kIid, ModelType::kAr}) {
    for (bool renorm : {false, true}) {
      Model m = taggers::make_model(type, taggers::FeatureMap::window(5, 8), 3);
      csp::testing::randomize(m, rng);
      kernels::Objective obj;
      obj.label_smoothing = 0.2;
      obj.beta = 0.5;
      obj.temperature = 1.7;
      obj.renormalize_teacher = renorm;
      obj.teacher = teacher;
      Model g = taggers::zeros_like(m);
      kernels::objective_and_gradient(m, d, obj, g);
      auto w = taggers::param_blocks(m);
      const auto gb = taggers::param_blocks(std::as_const(g));
      for (std::size_t b = 0; b < w.size(); ++b) {
        double diff2 = 0, n2 = 0;
        for (std::size_t i = 0; i < w[b].size(); ++i) {
          const double orig = w[b][i];
          w[b][i] = orig + h;
          const double up = kernels::objective_value(m, d, obj);
          w[b][i] = orig - h;
          const double down = kernels::objective_value(m, d, obj);
          w[b][i] = orig;
          const double fd = (up - down) / (2 * h);
          diff2 += (fd - gb[b][i]) * (fd - gb[b][i]);
          n2 += fd * fd;
        }
        EXPECT_LE(std::sqrt(diff2), 1e-4 * std::max(std::sqrt(n2), 1e-8)) << "block " << b;
      }
    }
  }
}

TEST(Kernels, CrfRejectsSmoothingAndDistillation) {
  std::mt19937_64 rng(8);
  const auto d = csp::testing::random_dataset(rng, 4, 4, 4, 3);
  Model m = taggers::make_model(ModelType::kCrf, taggers::FeatureMap::unigram(4), 3);
  Model g = taggers::zeros_like(m);
  kernels::Objective obj;
  obj.label_smoothing = 0.1;
  EXPECT_THROW(kernels::objective_and_gradient(m, d, obj, g), ArgumentError);
}

TEST(Kernels, TeacherMustCoverEveryToken) {
  std::mt19937_64 rng(9);
  const auto d = csp::testing::random_dataset(rng, 4, 4, 4, 3);
  const auto teacher = random_teacher(rng, d.total_tokens - 1, 3, 3);
  Model m = taggers::make_model(ModelType::kIid, taggers::FeatureMap::unigram(4), 3);
  Model g = taggers::zeros_like(m);
  kernels::Objective obj;
  obj.beta = 0.5;
  obj.teacher = teacher;
  EXPECT_THROW(kernels::objective_and_gradient(m, d, obj, g), ArgumentError);
}
