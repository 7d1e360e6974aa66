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
#include <filesystem>
#include <fstream>
#include <numeric>

#include "csp/distill.hpp"
#include "csp/ensemble.hpp"
#include "csp/teacher_store.hpp"
#include "test_util.hpp"

using namespace csp;
using namespace csp::distill;
namespace fs = std::filesystem;

TEST(Truncate, Examples) {
  const std::vector<double> d{0.1, 0.7, 0.2};
  const auto t1 = truncate_topk(d, 1);
  EXPECT_EQ(t1.indices, (std::vector<std::uint32_t>{1}));
  EXPECT_EQ(t1.probs, (std::vector<float>{0.7f}));
  const auto full = truncate_topk(d, 3);
  EXPECT_EQ(full.indices, (std::vector<std::uint32_t>{1, 2, 0}));
  EXPECT_NEAR(full.mass(), 1.0, 1e-6);
  const std::vector<double> tie{0.5, 0.5};
  EXPECT_EQ(truncate_topk(tie, 1).indices, (std::vector<std::uint32_t>{0}));
  EXPECT_THROW(truncate_topk(d, 0), ArgumentError);
  EXPECT_THROW(truncate_topk(d, 4), ArgumentError);
}

TEST(Truncate, Properties) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto d = csp::testing::random_distribution(rng, 8);
    double prev_mass = 0.0;
    for (std::size_t k = 1; k <= 8; ++k) {
      const auto t = truncate_topk(d, k);
      ASSERT_EQ(t.size(), k);
      for (std::size_t j = 0; j < k; ++j) {
        EXPECT_EQ(t.probs[j], static_cast<float>(d[t.indices[j]]));
        if (j > 0) EXPECT_GE(t.probs[j - 1], t.probs[j]);
      }
      const double m = t.mass();
      EXPECT_GE(m, prev_mass);
      EXPECT_LE(m, 1.0 + 1e-6);
      prev_mass = m;
    }
  }
}

// ---- Store --------------------------------------------------------------------------

TEST(Store, PayloadArithmetic) {
  TeacherStoreHeader h;
  h.vprime = 32;
  h.token_count = 1000;
  EXPECT_EQ(h.payload_bytes(), 256000u);
  EXPECT_EQ(h.file_bytes(), 256032u);
}

TEST(Store, StorageScalesWithTruncation) {
  // A corpus sized so that V' = 32 needs 32 GB; larger V' scale linearly.
  TeacherStoreHeader h;
  h.token_count = 32'000'000'000ull / (32 * 8);
  const std::vector<std::pair<std::uint32_t, double>> expect{{32, 32}, {64, 64}, {128, 128}, {256, 254}};
  for (auto [vp, gb] : expect) {
    h.vprime = vp;
    EXPECT_NEAR(static_cast<double>(h.payload_bytes()) / 1e9, gb, 0.01 * gb) << "V' = " << vp;
  }
}

TEST(Store, RoundTripIsBitExact) {
  const auto dir = csp::testing::temp_dir("store-rt");
  const auto path = (dir / "t.tstr").string();
  std::mt19937_64 rng(2);
  std::vector<TruncatedDistribution> recs;
  for (int i = 0; i < 333; ++i) recs.push_back(truncate_topk(csp::testing::random_distribution(rng, 10), 4));
  {
    TeacherStoreWriter w(path, 4, 10);
    for (const auto& r : recs) w.append(r);
    const auto h = w.finish();
    EXPECT_EQ(h.token_count, 333u);
  }
  EXPECT_EQ(fs::file_size(path), TeacherStoreHeader::kSize + 333u * 4 * 8);
  TeacherStoreReader reader(path);
  EXPECT_EQ(reader.header().vprime, 4u);
  EXPECT_EQ(reader.header().vocab_size, 10u);
  for (int pass = 0; pass < 2; ++pass) {
    std::size_t i = 0;
    while (auto r = reader.next()) {
      ASSERT_LT(i, recs.size());
      EXPECT_EQ(*r, recs[i]);
      ++i;
    }
    EXPECT_EQ(i, recs.size());
    reader.reset();
  }
  EXPECT_EQ(read_all_records(path), recs);
}

TEST(Store, HeaderLayout) {
  const auto dir = csp::testing::temp_dir("store-layout");
  const auto path = (dir / "t.tstr").string();
  {
    TeacherStoreWriter w(path, 2, 5);
    w.append(truncate_topk(std::vector<double>{0.1, 0.2, 0.3, 0.15, 0.25}, 2));
    w.finish();
  }
  std::ifstream in(path, std::ios::binary);
  std::vector<unsigned char> b((std::istreambuf_iterator<char>(in)), {});
  ASSERT_EQ(b.size(), 32u + 16u);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "TSTR");
  EXPECT_EQ(b[4] | (b[5] << 8), 1);
  EXPECT_EQ(b[8], 2);
  EXPECT_EQ(b[12], 5);
  EXPECT_EQ(b[16], 1);
  // First record: indices 2 then 4, little-endian.
  EXPECT_EQ(b[32], 2);
  EXPECT_EQ(b[36], 4);
}

TEST(Store, EveryPayloadByteIsCovered) {
  const auto dir = csp::testing::temp_dir("store-corrupt");
  const auto path = (dir / "t.tstr").string();
  std::mt19937_64 rng(3);
  {
    TeacherStoreWriter w(path, 3, 6);
    for (int i = 0; i < 20; ++i) w.append(truncate_topk(csp::testing::random_distribution(rng, 6), 3));
    w.finish();
  }
  std::ifstream in(path, std::ios::binary);
  const std::string good((std::istreambuf_iterator<char>(in)), {});
  const auto bad_path = (dir / "bad.tstr").string();
  for (std::size_t pos = TeacherStoreHeader::kSize; pos < good.size(); ++pos) {
    std::string bad = good;
    bad[pos] = static_cast<char>(bad[pos] ^ 0x5a);
    std::ofstream(bad_path, std::ios::binary) << bad;
    EXPECT_THROW(TeacherStoreReader r(bad_path), CorruptionError) << "byte " << pos;
  }
}

TEST(Store, TruncatedAndUnfinishedFilesAreRejected) {
  const auto dir = csp::testing::temp_dir("store-trunc");
  const auto path = (dir / "t.tstr").string();
  {
    TeacherStoreWriter w(path, 2, 4);
    for (int i = 0; i < 5; ++i) w.append(truncate_topk(std::vector<double>{0.4, 0.3, 0.2, 0.1}, 2));
    w.finish();
  }
  fs::resize_file(path, fs::file_size(path) - 3);
  EXPECT_THROW(TeacherStoreReader r(path), CorruptionError);

  const auto unfinished = (dir / "u.tstr").string();
  {
    TeacherStoreWriter w(unfinished, 2, 4);
    w.append(truncate_topk(std::vector<double>{0.4, 0.3, 0.2, 0.1}, 2));
  }
  EXPECT_THROW(TeacherStoreReader r(unfinished), CorruptionError);
  EXPECT_THROW(TeacherStoreWriter(path, 3, 2), ArgumentError);
}

// ---- Losses ------------------------------------------------------------------------

TEST(KdLoss, Examples) {
  const std::vector<double> p{0.5, 0.3, 0.2};
  const auto full = truncate_topk(p, 3);
  double h = 0.0;
  for (double x : p) h -= static_cast<double>(static_cast<float>(x)) * std::log(x);
  EXPECT_NEAR(kd_loss(p, full, 1.0), h, 1e-7);

  TruncatedDistribution one_hot{{1}, {1.0f}};
  EXPECT_NEAR(kd_loss(p, one_hot, 1.0), -std::log(0.3), 1e-12);

  const double mass = full.mass();
  EXPECT_NEAR(kd_loss(p, full, 1e9), mass * std::log(3.0), 1e-6);

  const std::vector<double> zero{1.0, 0.0, 0.0};
  EXPECT_NEAR(kd_loss(zero, one_hot, 1.0), -std::log(1e-12), 1e-9);
}

TEST(StudentLoss, InterpolatesBetweenEndpoints) {
  std::mt19937_64 rng(4);
  auto seq = csp::testing::random_sequence(rng, 6, 5, 4);
  std::vector<TokenDistribution> student;
  std::vector<TruncatedDistribution> teacher;
  for (int t = 0; t < 6; ++t) {
    student.push_back(csp::testing::random_distribution(rng, 4));
    teacher.push_back(truncate_topk(csp::testing::random_distribution(rng, 4), 2));
  }
  DistillConfig c;
  c.label_smoothing = 0.1;
  c.beta = 0.0;
  const double nll = student_loss(seq, student, teacher, c);
  double direct = 0.0;
  for (int t = 0; t < 6; ++t)
    for (std::size_t y = 0; y < 4; ++y)
      direct -= ((y == seq.gold[t] ? 0.9 : 0.0) + 0.025) * std::log(student[t][y]);
  EXPECT_NEAR(nll, direct / 6.0, 1e-12);
  c.beta = 1.0;
  const double kd = student_loss(seq, student, teacher, c);
  double kd_direct = 0.0;
  for (int t = 0; t < 6; ++t) kd_direct += kd_loss(student[t], teacher[t], 1.0);
  EXPECT_NEAR(kd, kd_direct / 6.0, 1e-12);
  for (double b = 0.0; b <= 1.0; b += 0.125) {
    c.beta = b;
    EXPECT_NEAR(student_loss(seq, student, teacher, c), (1 - b) * nll + b * kd, 1e-12);
  }
  teacher.pop_back();
  EXPECT_THROW(student_loss(seq, student, teacher, c), ArgumentError);
}

TEST(DistillConfig, Defaults) {
  const auto ner = DistillConfig::ner_defaults();
  EXPECT_DOUBLE_EQ(ner.beta, 5.0 / 6.0);
  EXPECT_EQ(ner.label_smoothing, 0.0);
  const DistillConfig nmt;
  EXPECT_EQ(nmt.beta, 0.5);
  EXPECT_EQ(nmt.temperature, 1.0);
  EXPECT_EQ(nmt.label_smoothing, 0.1);
  EXPECT_EQ(nmt.vprime, 64u);
}

// ---- Memoization and students ----------------------------------------------------------

namespace {

struct Fixture {
  data::Dataset train, held;
  ensemble::Ensemble ens;
};

Fixture make_fixture() {
  auto [all, spec] = data::generate_hmm(4, 10, 120, {3, 9}, 11);
  auto [train, held] = data::split_dataset(all, 5, 0, 1);
  std::mt19937_64 rng(5);
  std::vector<taggers::Model> members;
  for (int k = 0; k < 3; ++k) {
    auto m = taggers::make_model(taggers::ModelType::kIid, taggers::FeatureMap::unigram(10), 4);
    csp::testing::randomize(m, rng);
    members.push_back(m);
  }
  return {train, held, ensemble::Ensemble(members)};
}

}  // namespace

TEST(Memoize, RecordsFollowDatasetOrder) {
  const auto f = make_fixture();
  const auto dir = csp::testing::temp_dir("memo");
  const auto path = (dir / "t.tstr").string();
  const auto h = memoize_teacher(f.ens, f.train, 3, path);
  EXPECT_EQ(h.token_count, f.train.total_tokens);
  EXPECT_EQ(fs::file_size(path), TeacherStoreHeader::kSize + f.train.total_tokens * 3 * 8);
  TeacherStoreReader r(path);
  for (const auto& s : f.train.sequences) {
    const auto mix = ensemble::ensemble_marginals(f.ens, s);
    for (const auto& d : mix) {
      auto rec = r.next();
      ASSERT_TRUE(rec);
      EXPECT_EQ(*rec, truncate_topk(d, 3));
    }
  }
  EXPECT_FALSE(r.next());
}

TEST(TrainStudent, BetaZeroIsBaselineTraining) {
  const auto f = make_fixture();
  const auto dir = csp::testing::temp_dir("student");
  const auto path = (dir / "t.tstr").string();
  memoize_teacher(f.ens, f.train, 4, path);
  training::TrainConfig tc;
  tc.epochs = 30;
  tc.label_smoothing = 0.1;
  DistillConfig dc;
  dc.beta = 0.0;
  dc.label_smoothing = 0.1;
  for (auto type : {taggers::ModelType::kIid, taggers::ModelType::kAr}) {
    const auto s = train_student(f.train, f.held, path, type, dc, tc);
    const auto b = training::train(type, f.train, f.held, tc);
    EXPECT_TRUE(s.params == b.params);
    ASSERT_EQ(s.history.size(), b.history.size());
    for (std::size_t i = 0; i < s.history.size(); ++i) EXPECT_EQ(s.history[i].train_nll, b.history[i].train_nll);
  }
}

TEST(TrainStudent, RejectsMismatchedStoreAndCrf) {
  const auto f = make_fixture();
  const auto dir = csp::testing::temp_dir("student-bad");
  const auto path = (dir / "t.tstr").string();
  memoize_teacher(f.ens, f.held, 2, path);
  DistillConfig dc;
  training::TrainConfig tc;
  EXPECT_THROW(train_student(f.train, f.held, path, taggers::ModelType::kIid, dc, tc), ArgumentError);
  EXPECT_THROW(train_student(f.held, f.held, path, taggers::ModelType::kCrf, dc, tc), ArgumentError);
}

TEST(TrainStudent, DistillationPullsTowardTeacher) {
  const auto f = make_fixture();
  const auto dir = csp::testing::temp_dir("student-kd");
  const auto path = (dir / "t.tstr").string();
  memoize_teacher(f.ens, f.train, 4, path);
  training::TrainConfig tc;
  tc.epochs = 200;
  tc.lr = 1.0;
  tc.early_stop_patience = 0;
  DistillConfig dc;
  dc.beta = 1.0;
  dc.label_smoothing = 0.0;
  const auto s = train_student(f.train, f.held, path, taggers::ModelType::kIid, dc, tc);
  // A pure-KD IID student of the same family can match an IID-mixture teacher closely.
  const auto teacher = read_all_records(path);
  double gap = 0.0;
  std::size_t k = 0;
  for (const auto& seq : f.train.sequences)
    for (const auto& d : taggers::token_distributions(s.params, seq)) {
      const auto& t = teacher[k++];
      for (std::size_t j = 0; j < t.size(); ++j) gap = std::max(gap, std::abs(d[t.indices[j]] - t.probs[j]));
    }
  EXPECT_LT(gap, 0.1);
}
