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

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance_test [config.json] [output_dir]
//
// Criteria 1-6 are exact or oracle checks on small fixtures. Criteria 7-10 read
// the summary of one end-to-end experiment driven by the pinned config.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "csp/distill.hpp"
#include "csp/experiment.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace csp;
using namespace csp::oracles;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances.
constexpr double kFbTol = 1e-9;
constexpr double kFbSeconds = 5.0;
constexpr double kFdStep = 1e-5;
constexpr double kGradRelTol = 1e-4;
constexpr double kMetricTol = 1e-12;
constexpr double kTempTarget = 3.0;
constexpr double kTempTol = 0.1;
constexpr double kTruncationPoints = 1.5;
constexpr double kExperimentSeconds = 600.0;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// ---- 1 --------------------------------------------------------------------------------

Outcome forward_backward_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  int n = 0;
  for (; n < 120; ++n) {
    const std::size_t V = 2 + n % 3, T = 1 + n % 6;
    taggers::Model m = taggers::make_model(taggers::ModelType::kCrf, taggers::FeatureMap::unigram(6), V);
    csp::testing::randomize(m, rng, 1.5);
    const auto& p = std::get<taggers::CrfParams>(m);
    const auto seq = csp::testing::random_sequence(rng, T, 6, V);
    const auto got = taggers::crf_forward_backward(p, seq.tokens);
    const auto want = enumerate_paths(p, seq.tokens);
    worst = std::max(worst, std::abs(got.log_z - want.log_z));
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t y = 0; y < V; ++y) worst = std::max(worst, std::abs(got.marginals[t][y] - want.marginals[t][y]));
  }
  const double secs = seconds_since(t0);
  return {worst <= kFbTol && secs < kFbSeconds,
          std::to_string(n) + " CRFs, " + fmt("max abs err %.3g, %.3f s", worst, secs)};
}

// ---- 2 --------------------------------------------------------------------------------

Outcome gradient_check() {
  std::mt19937_64 rng(202);
  double worst = 0.0;
  std::string worst_block;
  const int instances = 25;
  for (int trial = 0; trial < instances; ++trial) {
    const std::size_t V = 2 + trial % 3, T = 1 + trial % 6;
    taggers::Model m = taggers::make_model(taggers::ModelType::kCrf, taggers::FeatureMap::unigram(4), V);
    csp::testing::randomize(m, rng);
    const auto seq = csp::testing::random_sequence(rng, T, 4, V);
    const taggers::Model g = taggers::crf_nll_grad(std::get<taggers::CrfParams>(m), seq).grad;
    const auto names = taggers::param_block_names(m);
    auto blocks = taggers::param_blocks(m);
    const auto gblocks = taggers::param_blocks(g);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      double diff2 = 0.0, an2 = 0.0, fd2 = 0.0;
      for (std::size_t i = 0; i < blocks[b].size(); ++i) {
        const double orig = blocks[b][i];
        blocks[b][i] = orig + kFdStep;
        const double up = taggers::crf_nll_grad(std::get<taggers::CrfParams>(m), seq).nll;
        blocks[b][i] = orig - kFdStep;
        const double down = taggers::crf_nll_grad(std::get<taggers::CrfParams>(m), seq).nll;
        blocks[b][i] = orig;
        const double fd = (up - down) / (2 * kFdStep);
        diff2 += (fd - gblocks[b][i]) * (fd - gblocks[b][i]);
        an2 += gblocks[b][i] * gblocks[b][i];
        fd2 += fd * fd;
      }
      const double rel = std::sqrt(diff2) / std::max({std::sqrt(an2), std::sqrt(fd2), 1e-12});
      if (rel > worst) {
        worst = rel;
        worst_block = names[b];
      }
    }
  }
  return {worst <= kGradRelTol,
          std::to_string(instances) + " instances, " + fmt("max block rel err %.3g", worst) + " (" + worst_block + ")"};
}

// ---- 3 --------------------------------------------------------------------------------

Outcome metric_oracles() {
  using namespace calibration;
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  auto track = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };

  for (int trial = 0; trial < 50; ++trial) {
    std::vector<PredictionRecord> recs;
    std::vector<BinaryEvent> events;
    std::vector<std::pair<double, bool>> pairs;
    for (int i = 0; i < 257; ++i) {
      const double c = std::round(u(rng) * 40) / 40;
      const bool ok = u(rng) < c;
      recs.push_back({c, ok});
      events.push_back({c, ok});
      pairs.push_back({c, ok});
    }
    track(ece(recs, 10), oracle_ece(pairs, 10));
    track(brier(events), oracle_brier(pairs));

    std::vector<TokenDistribution> d;
    std::vector<std::uint32_t> gold;
    for (int t = 0; t < 64; ++t) {
      d.push_back(csp::testing::random_distribution(rng, 5));
      gold.push_back(static_cast<std::uint32_t>(rng() % 5));
    }
    for (std::size_t k = 1; k <= 5; ++k) track(ece_topk(d, gold, k, 10), oracle_ece(oracle_topk(d, gold, k), 10));

    ClassRecords classes;
    ClassCounts counts{{"A", 5 + rng() % 20}, {"B", 5 + rng() % 20}, {"C", 5 + rng() % 20}};
    double total = 0.0;
    for (const auto& [c, n] : counts) {
      total += static_cast<double>(n);
      for (int i = 0; i < 60; ++i) classes[c].push_back({u(rng), u(rng) < 0.3});
    }
    double be = 0.0, bb = 0.0;
    for (const auto& [c, n] : counts) {
      const auto keep = oracle_keep(classes[c], n);
      be += static_cast<double>(n) / total * oracle_ece(keep, 10);
      bb += static_cast<double>(n) / total * oracle_brier(keep);
    }
    track(balanced_ece(classes, counts, 10), be);
    track(balanced_brier(classes, counts), bb);
  }

  const double worked_ece = ece({{0.9, true}, {0.8, true}, {0.6, false}, {0.55, true}}, 2);
  const double worked_brier = brier({{0.9, true}, {0.2, false}, {0.6, false}});
  const bool worked = std::abs(worked_ece - 0.1125) <= 1e-15 && std::abs(worked_brier - 0.41 / 3.0) <= 1e-15 &&
                      std::abs(worked_brier - 0.13667) < 5e-6;
  return {worst <= kMetricTol && worked,
          fmt("max abs err %.3g; ECE example %.6f; Brier example %.6f", worst, worked_ece, worked_brier)};
}

// ---- 4 --------------------------------------------------------------------------------

Outcome teacher_store(const fs::path& dir) {
  using namespace distill;
  std::mt19937_64 rng(404);
  const auto data = csp::testing::random_dataset(rng, 40, 12, 9, 6);
  std::vector<taggers::Model> members;
  for (int i = 0; i < 3; ++i) {
    members.push_back(taggers::make_model(taggers::ModelType::kIid, taggers::FeatureMap::unigram(9), 6));
    csp::testing::randomize(members.back(), rng);
  }
  const ensemble::Ensemble ens(members);
  const std::size_t vprime = 4;
  const auto path = (dir / "teacher.tstr").string();
  const auto header = memoize_teacher(ens, data, vprime, path);

  bool exact = true;
  std::uint64_t n = 0;
  TeacherStoreReader reader(path);
  for (const auto& seq : data.sequences) {
    std::vector<TokenDistribution> per_member;
    for (std::size_t t = 0; t < seq.size(); ++t) {
      per_member.clear();
      for (const auto& m : members) per_member.push_back(taggers::token_distributions(m, seq)[t]);
      const auto want = truncate_topk(ensemble::mixture(per_member), vprime);
      const auto got = reader.next();
      exact = exact && got && *got == want;
      ++n;
    }
  }
  exact = exact && !reader.next() && n == data.total_tokens;

  const std::uint64_t payload = fs::file_size(path) - TeacherStoreHeader::kSize;
  const bool size_ok = payload == data.total_tokens * vprime * 8 && header.payload_bytes() == payload;

  std::ifstream in(path, std::ios::binary);
  const std::string good((std::istreambuf_iterator<char>(in)), {});
  const auto bad_path = (dir / "corrupt.tstr").string();
  std::size_t caught = 0;
  for (std::size_t pos = TeacherStoreHeader::kSize; pos < good.size(); ++pos) {
    std::string bad = good;
    bad[pos] = static_cast<char>(bad[pos] ^ 0x01);
    std::ofstream(bad_path, std::ios::binary | std::ios::trunc) << bad;
    try {
      TeacherStoreReader r(bad_path);
    } catch (const CorruptionError&) {
      ++caught;
    }
  }
  return {exact && size_ok && caught == payload,
          std::to_string(n) + " records " + (exact ? "bit-exact" : "MISMATCH") + ", payload " + std::to_string(payload) +
              " bytes = T*V'*8 " + (size_ok ? "yes" : "NO") + ", corrupted bytes detected " + std::to_string(caught) +
              "/" + std::to_string(payload)};
}

// ---- 5 --------------------------------------------------------------------------------

Outcome distillation_reduction(const fs::path& dir) {
  auto [all, spec] = data::generate_hmm(4, 10, 120, {4, 10}, 505);
  auto [train, held] = data::split_dataset(all, 5, 0, 505);
  training::TrainConfig tc;
  tc.epochs = 40;
  tc.seed = 17;
  tc.label_smoothing = 0.1;
  tc.features = taggers::FeatureKind::kWindow;
  tc.hash_buckets = 256;
  std::vector<taggers::Model> members;
  for (std::uint64_t s = 0; s < 2; ++s) {
    auto c = tc;
    c.seed = 900 + s;
    members.push_back(training::train(taggers::ModelType::kIid, train, held, c).params);
  }
  const auto path = (dir / "reduction.tstr").string();
  distill::memoize_teacher(ensemble::Ensemble(members), train, 3, path);
  distill::DistillConfig dc;
  dc.beta = 0.0;
  dc.vprime = 3;
  dc.label_smoothing = tc.label_smoothing;
  std::string detail;
  bool pass = true;
  for (auto type : {taggers::ModelType::kIid, taggers::ModelType::kAr}) {
    const auto s = distill::train_student(train, held, path, type, dc, tc);
    const auto b = training::train(type, train, held, tc);
    const bool same = s.params == b.params;
    pass = pass && same;
    detail += std::string(taggers::to_string(type)) + (same ? " identical" : " DIFFERENT") + " ";
  }
  return {pass, detail + "(" + std::to_string(tc.epochs) + " epochs)"};
}

// ---- 6 --------------------------------------------------------------------------------

Outcome temperature_scaling() {
  using namespace calibration;
  struct Set {
    std::vector<std::vector<double>> logits;
    std::vector<std::uint32_t> gold;
  };
  auto synthetic = [](std::size_t n, std::size_t V, double sharpen, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Set s;
    for (std::size_t i = 0; i < n; ++i) {
      auto z = csp::testing::random_vector(rng, V, 1.5);
      const auto p = softmax(z);
      std::discrete_distribution<std::uint32_t> draw(p.begin(), p.end());
      s.gold.push_back(draw(rng));
      for (double& x : z) x *= sharpen;
      s.logits.push_back(std::move(z));
    }
    return s;
  };

  bool nll_ok = true, argmax_ok = true;
  std::size_t fits = 0, tokens = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto held = synthetic(200, 2 + seed % 5, 0.25 + 0.25 * static_cast<double>(seed % 12), 600 + seed);
    const auto fit = fit_temperature(held.logits, held.gold);
    nll_ok = nll_ok && temperature_nll(held.logits, held.gold, fit.temperature) <=
                           temperature_nll(held.logits, held.gold, 1.0);
    for (const auto& z : held.logits) {
      argmax_ok = argmax_ok && argmax(apply_temperature(z, fit.temperature)) == argmax(softmax(z));
      ++tokens;
    }
    ++fits;
  }
  const auto over = synthetic(20000, 5, kTempTarget, 606);
  const double T = fit_temperature(over.logits, over.gold).temperature;
  const bool recovered = std::abs(T - kTempTarget) <= kTempTol;
  return {nll_ok && argmax_ok && recovered,
          std::to_string(fits) + " fits NLL(T)<=NLL(1) " + (nll_ok ? "yes" : "NO") + ", " + std::to_string(tokens) +
              " argmaxes preserved " + (argmax_ok ? "yes" : "NO") + fmt(", x3 logits -> T=%.4f", T)};
}

// ---- 7-10 -----------------------------------------------------------------------------

struct ExperimentRun {
  experiment::ExperimentSummary summary;
  double seconds = 0.0;
  std::size_t labels = 0;
};

std::string tally(std::size_t hits, std::size_t of) { return std::to_string(hits) + "/" + std::to_string(of); }

Outcome directional_trends(const ExperimentRun& run) {
  std::size_t a = 0, b = 0, c = 0, d = 0;
  const std::string student = "student-v" + std::to_string(run.labels);
  for (const auto& r : run.summary.replicates) {
    const auto& ind = r.get("individual").report;
    const auto& e3 = r.get("ensemble-3").report;
    const auto& e5 = r.get("ensemble-5").report;
    a += e5.ece < ind.ece;
    b += e5.accuracy >= ind.accuracy;
    c += r.get(student).report.ece < ind.ece;
    d += e5.ece <= e3.ece && e3.ece <= ind.ece;
  }
  const std::size_t n = run.summary.replicates.size();
  const bool pass = n == 5 && a >= 4 && b >= 4 && c >= 4 && d >= 3 && run.seconds < kExperimentSeconds;
  return {pass, "(a) " + tally(a, n) + " (b) " + tally(b, n) + " (c) " + tally(c, n) + " (d) " + tally(d, n) +
                    fmt(", experiment %.1f s", run.seconds)};
}

Outcome truncation_robustness(const ExperimentRun& run, const std::vector<std::size_t>& vprimes) {
  std::size_t ok = 0, seen = 0;
  double widest = 0.0;
  for (std::size_t i = 0; i < 3 && i < run.summary.replicates.size(); ++i) {
    const auto& r = run.summary.replicates[i];
    double lo = 1.0, hi = 0.0;
    for (auto vp : vprimes) {
      const double acc = r.get("student-v" + std::to_string(vp)).report.accuracy;
      lo = std::min(lo, acc);
      hi = std::max(hi, acc);
    }
    const double spread = 100.0 * (hi - lo);
    widest = std::max(widest, spread);
    ok += spread < kTruncationPoints;
    ++seen;
  }
  std::string vs;
  for (auto vp : vprimes) vs += (vs.empty() ? "" : ",") + std::to_string(vp);
  return {seen == 3 && ok == 3 && vprimes.size() >= 2,
          "V' in {" + vs + "}: " + tally(ok, seen) + " seeds within 1.5 points" +
              fmt(", widest spread %.2f points", widest)};
}

Outcome sgdr_snapshots(const ExperimentRun& run) {
  std::size_t better_than_individual = 0, independent_not_worse = 0, seen = 0;
  for (std::size_t i = 0; i < 3 && i < run.summary.replicates.size(); ++i) {
    const auto& r = run.summary.replicates[i];
    const auto& snap = r.get("sgdr-snapshots");
    const auto& indep = r.get("ensemble-" + std::to_string(snap.k));
    better_than_individual += snap.report.ece < r.get("individual").report.ece;
    independent_not_worse += indep.report.ece <= snap.report.ece;
    ++seen;
  }
  return {seen == 3 && better_than_individual >= 2 && independent_not_worse >= 2,
          "snapshot < individual " + tally(better_than_individual, seen) + ", independent <= snapshot " +
              tally(independent_not_worse, seen)};
}

Outcome pr_auc(const ExperimentRun& run) {
  std::size_t ok = 0;
  const std::string student = "student-v" + std::to_string(run.labels);
  for (const auto& r : run.summary.replicates) ok += r.get(student).auc >= r.get("individual").auc;
  const std::size_t n = run.summary.replicates.size();
  return {n == 5 && ok >= 4, student + " AUC >= individual AUC in " + tally(ok, n)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string config_path = argc > 1 ? argv[1] : CSP_ACCEPTANCE_CONFIG;
  const fs::path out = argc > 2 ? fs::path(argv[2]) : fs::current_path() / "acceptance-run";
  const fs::path scratch = out / "fixtures";
  fs::create_directories(scratch);

  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "forward-backward oracle", forward_backward_oracle);
  report(2, "CRF gradient check", gradient_check);
  report(3, "metric oracles", metric_oracles);
  report(4, "teacher store", [&] { return teacher_store(scratch); });
  report(5, "distillation reduction", [&] { return distillation_reduction(scratch); });
  report(6, "temperature scaling", temperature_scaling);

  ExperimentRun run;
  std::vector<std::size_t> vprimes;
  std::string run_error;
  try {
    auto cfg = experiment::load_experiment_config(config_path);
    cfg.output_dir = (out / "experiment").string();
    const std::size_t V = cfg.task.states;
    for (auto vp : cfg.vprimes) vprimes.push_back(vp == 0 || vp > V ? V : vp);
    std::sort(vprimes.begin(), vprimes.end());
    vprimes.erase(std::unique(vprimes.begin(), vprimes.end()), vprimes.end());
    run.labels = V;
    const auto t0 = Clock::now();
    run.summary = experiment::run_experiment(cfg);
    run.seconds = seconds_since(t0);
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  auto guarded = [&](auto f) {
    return [&, f] { return run_error.empty() ? f() : Outcome{false, "experiment failed: " + run_error}; };
  };
  report(7, "directional replication", guarded([&] { return directional_trends(run); }));
  report(8, "truncation robustness", guarded([&] { return truncation_robustness(run, vprimes); }));
  report(9, "SGDR snapshot ensemble", guarded([&] { return sgdr_snapshots(run); }));
  report(10, "PR AUC", guarded([&] { return pr_auc(run); }));

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
