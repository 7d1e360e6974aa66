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

#include "csp/ensemble.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace csp::ensemble {

namespace fs = std::filesystem;
using json = nlohmann::json;

Ensemble::Ensemble(std::vector<taggers::Model> members) : members_(std::move(members)) {
  if (members_.empty()) throw ArgumentError("an ensemble needs at least one member");
  const std::size_t V = taggers::num_labels(members_.front());
  for (const auto& m : members_)
    if (taggers::num_labels(m) != V) throw ArgumentError("ensemble members disagree on the label count");
}

std::size_t Ensemble::num_labels() const {
  return members_.empty() ? 0 : taggers::num_labels(members_.front());
}

TokenDistribution mixture(const std::vector<TokenDistribution>& dists) {
  if (dists.empty()) throw ArgumentError("mixture of zero distributions");
  const std::size_t V = dists.front().size();
  TokenDistribution out(V, 0.0);
  for (const auto& d : dists) {
    if (d.size() != V) throw ArgumentError("mixture inputs differ in dimension");
    for (std::size_t y = 0; y < V; ++y) out[y] += d[y];
  }
  const double k = static_cast<double>(dists.size());
  for (double& v : out) v /= k;
  return out;
}

std::vector<TokenDistribution> ensemble_marginals(const Ensemble& ens, const data::TokenSequence& seq,
                                                  taggers::ArMode mode) {
  if (ens.size() == 0) throw ArgumentError("empty ensemble");
  if (mode == taggers::ArMode::kTeacherForced && seq.gold.size() != seq.tokens.size()) {
    for (const auto& m : ens.members())
      if (taggers::model_type(m) == taggers::ModelType::kAr)
        throw ArgumentError("teacher-forced AR member needs gold labels");
  }
  std::vector<std::vector<TokenDistribution>> per_member;
  per_member.reserve(ens.size());
  for (const auto& m : ens.members()) per_member.push_back(taggers::token_distributions(m, seq, mode));
  std::vector<TokenDistribution> out(seq.size());
  std::vector<TokenDistribution> column(ens.size());
  for (std::size_t t = 0; t < seq.size(); ++t) {
    for (std::size_t k = 0; k < ens.size(); ++k) column[k] = per_member[k][t];
    out[t] = mixture(column);
  }
  return out;
}

std::vector<std::uint32_t> ensemble_predict(const Ensemble& ens, const data::TokenSequence& seq,
                                            taggers::ArMode mode) {
  std::vector<std::uint32_t> out;
  for (const auto& d : ensemble_marginals(ens, seq, mode)) out.push_back(static_cast<std::uint32_t>(argmax(d)));
  return out;
}

kernels::BatchDistributions ensemble_batch(const Ensemble& ens, const data::Dataset& d, taggers::ArMode mode) {
  kernels::BatchDistributions out(d.sequences.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(d.sequences.size()); ++i)
    out[i] = ensemble_marginals(ens, d.sequences[i], mode);
  return out;
}

// ---- Manifests ----------------------------------------------------------------------

void save_manifest(const std::string& path, const Manifest& m) {
  json members = json::array();
  for (const auto& e : m.members)
    members.push_back({{"id", e.id},
                       {"seed", e.seed},
                       {"model_type", std::string(taggers::to_string(e.model_type))},
                       {"path", e.path}});
  json j = {{"labels", m.labels}, {"members", members}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open manifest '" + path + "'");
  Manifest m;
  try {
    json j = json::parse(in);
    m.labels = j.at("labels").get<std::vector<std::string>>();
    for (const auto& e : j.at("members")) {
      ManifestEntry entry;
      entry.id = e.at("id").get<std::size_t>();
      entry.seed = e.value("seed", std::uint64_t{0});
      entry.model_type = taggers::parse_model_type(e.at("model_type").get<std::string>());
      entry.path = e.at("path").get<std::string>();
      m.members.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw LoadError("malformed manifest '" + path + "': " + e.what());
  }
  std::stable_sort(m.members.begin(), m.members.end(),
                   [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; });
  return m;
}

Ensemble load_ensemble(const std::string& manifest_path, const std::vector<std::size_t>& subset) {
  const Manifest man = load_manifest(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  std::vector<std::size_t> ids = subset;
  if (ids.empty())
    for (const auto& e : man.members) ids.push_back(e.id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  std::vector<taggers::Model> members;
  for (auto id : ids) {
    auto it = std::find_if(man.members.begin(), man.members.end(),
                           [&](const ManifestEntry& e) { return e.id == id; });
    if (it == man.members.end()) throw LoadError("member " + std::to_string(id) + " not in manifest");
    fs::path p = it->path;
    if (p.is_relative()) p = base / p;
    if (!fs::exists(p)) throw LoadError("missing member file '" + p.string() + "'");
    taggers::Model m = taggers::load_model(p.string());
    if (taggers::model_type(m) != it->model_type)
      throw LoadError("member " + std::to_string(id) + " model type does not match manifest");
    if (taggers::num_labels(m) != man.labels.size())
      throw LoadError("member " + std::to_string(id) + " label vocabulary does not match manifest");
    members.push_back(std::move(m));
  }
  return Ensemble(std::move(members));
}

Ensemble build_ensemble(const std::string& run_dir, const std::vector<std::size_t>& subset) {
  if (subset.empty()) throw ArgumentError("empty member subset");
  return load_ensemble((fs::path(run_dir) / "manifest.json").string(), subset);
}

Ensemble sgdr_snapshots_to_ensemble(const std::vector<training::Snapshot>& snapshots, std::size_t k) {
  if (k == 0) throw ArgumentError("k must be >= 1");
  if (k > snapshots.size()) throw ArgumentError("k exceeds the number of snapshots");
  std::vector<taggers::Model> members;
  for (std::size_t i = snapshots.size() - k; i < snapshots.size(); ++i) members.push_back(snapshots[i].params);
  return Ensemble(std::move(members));
}

}  // namespace csp::ensemble
