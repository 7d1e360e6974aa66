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

#include "csp/taggers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>

#include "byte_io.hpp"

namespace csp::taggers {

std::string_view to_string(ModelType t) {
  switch (t) {
    case ModelType::kIid: return "iid";
    case ModelType::kCrf: return "crf";
    case ModelType::kAr: return "ar";
  }
  return "?";
}

ModelType parse_model_type(std::string_view s) {
  if (s == "iid") return ModelType::kIid;
  if (s == "crf") return ModelType::kCrf;
  if (s == "ar") return ModelType::kAr;
  throw ArgumentError("unknown model type '" + std::string(s) + "'");
}

// ---- Features -------------------------------------------------------------------

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_template(std::uint64_t tmpl, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix64(mix64(mix64(mix64(tmpl) ^ a) ^ b) ^ c);
}

}  // namespace

FeatureMap FeatureMap::unigram(std::size_t obs_vocab) {
  if (obs_vocab == 0) throw ArgumentError("observation vocabulary is empty");
  FeatureMap f;
  f.kind_ = FeatureKind::kUnigram;
  f.obs_vocab_ = obs_vocab;
  return f;
}

FeatureMap FeatureMap::window(std::size_t obs_vocab, std::size_t hash_buckets) {
  if (obs_vocab == 0) throw ArgumentError("observation vocabulary is empty");
  if (hash_buckets == 0) throw ArgumentError("window features need at least one hash bucket");
  FeatureMap f;
  f.kind_ = FeatureKind::kWindow;
  f.obs_vocab_ = obs_vocab;
  f.hash_buckets_ = hash_buckets;
  return f;
}

std::size_t FeatureMap::extract(std::span<const std::uint32_t> tokens, std::size_t t,
                                std::span<std::uint32_t, kMaxFeatures> out) const {
  auto obs = [&](std::size_t i) -> std::uint64_t {
    return tokens[i] < obs_vocab_ ? tokens[i] : 0;
  };
  const std::uint64_t cur = obs(t);
  out[0] = static_cast<std::uint32_t>(cur);
  if (kind_ == FeatureKind::kUnigram) return 1;

  const std::uint64_t bos = obs_vocab_, eos = obs_vocab_ + 1;
  const std::uint64_t prev = t > 0 ? obs(t - 1) : bos;
  const std::uint64_t next = t + 1 < tokens.size() ? obs(t + 1) : eos;
  const std::uint64_t none = ~0ULL;
  const std::array<std::uint64_t, 5> hashes = {
      hash_template(1, prev, none, none), hash_template(2, next, none, none),
      hash_template(3, prev, cur, none), hash_template(4, cur, next, none),
      hash_template(5, prev, cur, next)};
  for (std::size_t i = 0; i < hashes.size(); ++i)
    out[i + 1] = static_cast<std::uint32_t>(obs_vocab_ + hashes[i] % hash_buckets_);
  return 1 + hashes.size();
}

void Emission::scores(std::span<const std::uint32_t> tokens, std::size_t t, std::span<double> out) const {
  std::array<std::uint32_t, FeatureMap::kMaxFeatures> f;
  const std::size_t n = features.extract(tokens, t, f);
  const std::size_t V = bias.size();
  for (std::size_t y = 0; y < V; ++y) out[y] = bias[y];
  for (std::size_t k = 0; k < n; ++k) {
    auto row = weights.row(f[k]);
    for (std::size_t y = 0; y < V; ++y) out[y] += row[y];
  }
}

void Emission::backprop(std::span<const std::uint32_t> tokens, std::size_t t,
                        std::span<const double> dscores, Emission& grad) const {
  std::array<std::uint32_t, FeatureMap::kMaxFeatures> f;
  const std::size_t n = features.extract(tokens, t, f);
  const std::size_t V = bias.size();
  for (std::size_t y = 0; y < V; ++y) grad.bias[y] += dscores[y];
  for (std::size_t k = 0; k < n; ++k) {
    auto row = grad.weights.row(f[k]);
    for (std::size_t y = 0; y < V; ++y) row[y] += dscores[y];
  }
}

// ---- Model plumbing ---------------------------------------------------------------

ModelType model_type(const Model& m) {
  switch (m.index()) {
    case 0: return ModelType::kIid;
    case 1: return ModelType::kCrf;
    default: return ModelType::kAr;
  }
}

std::size_t num_labels(const Model& m) {
  return std::visit([](const auto& p) { return p.emission.labels(); }, m);
}

const FeatureMap& feature_map(const Model& m) {
  return std::visit([](const auto& p) -> const FeatureMap& { return p.emission.features; }, m);
}

namespace {

Emission make_emission(const FeatureMap& features, std::size_t V) {
  if (V < 2) throw ArgumentError("need at least 2 labels");
  Emission e;
  e.features = features;
  e.weights = Matrix(features.size(), V);
  e.bias.assign(V, 0.0);
  return e;
}

}  // namespace

Model make_model(ModelType type, const FeatureMap& features, std::size_t V) {
  switch (type) {
    case ModelType::kIid: return IidParams{make_emission(features, V)};
    case ModelType::kCrf:
      return CrfParams{make_emission(features, V), Matrix(V, V), std::vector<double>(V, 0.0),
                       std::vector<double>(V, 0.0)};
    case ModelType::kAr: return ArParams{make_emission(features, V), Matrix(V + 1, V)};
  }
  throw ArgumentError("unknown model type");
}

Model zeros_like(const Model& m) { return make_model(model_type(m), feature_map(m), num_labels(m)); }

std::vector<std::span<double>> param_blocks(Model& m) {
  return std::visit(
      [](auto& p) {
        std::vector<std::span<double>> blocks = {p.emission.weights.data, p.emission.bias};
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, CrfParams>) {
          blocks.emplace_back(p.transitions.data);
          blocks.emplace_back(p.start);
          blocks.emplace_back(p.stop);
        } else if constexpr (std::is_same_v<P, ArParams>) {
          blocks.emplace_back(p.prev_label.data);
        }
        return blocks;
      },
      m);
}

std::vector<std::span<const double>> param_blocks(const Model& m) {
  auto blocks = param_blocks(const_cast<Model&>(m));
  return {blocks.begin(), blocks.end()};
}

std::vector<std::string> param_block_names(const Model& m) {
  switch (model_type(m)) {
    case ModelType::kIid: return {"emission", "bias"};
    case ModelType::kCrf: return {"emission", "bias", "transitions", "start", "stop"};
    case ModelType::kAr: return {"emission", "bias", "prev_label"};
  }
  return {};
}

std::size_t num_params(const Model& m) {
  std::size_t n = 0;
  for (auto b : param_blocks(m)) n += b.size();
  return n;
}

// ---- IID ---------------------------------------------------------------------------

std::vector<std::vector<double>> iid_logits(const IidParams& p, std::span<const std::uint32_t> tokens) {
  std::vector<std::vector<double>> out(tokens.size(), std::vector<double>(p.emission.labels()));
  for (std::size_t t = 0; t < tokens.size(); ++t) p.emission.scores(tokens, t, out[t]);
  return out;
}

std::vector<TokenDistribution> iid_marginals(const IidParams& p, std::span<const std::uint32_t> tokens) {
  auto out = iid_logits(p, tokens);
  for (auto& row : out) softmax_inplace(row);
  return out;
}

std::vector<std::uint32_t> iid_decode(const IidParams& p, std::span<const std::uint32_t> tokens) {
  std::vector<std::uint32_t> out;
  for (const auto& row : iid_logits(p, tokens)) out.push_back(static_cast<std::uint32_t>(argmax(row)));
  return out;
}

// ---- CRF ---------------------------------------------------------------------------

Matrix crf_emission_table(const CrfParams& p, std::span<const std::uint32_t> tokens) {
  Matrix e(tokens.size(), p.emission.labels());
  for (std::size_t t = 0; t < tokens.size(); ++t) p.emission.scores(tokens, t, e.row(t));
  return e;
}

namespace {

struct Lattice {
  Matrix emit;   // [T x V]
  Matrix alpha;  // [T x V]
  Matrix beta;   // [T x V]
  double log_z = 0.0;
  double log_z_backward = 0.0;
};

Lattice crf_lattice(const CrfParams& p, std::span<const std::uint32_t> tokens) {
  const std::size_t T = tokens.size(), V = p.emission.labels();
  Lattice L;
  L.emit = crf_emission_table(p, tokens);
  L.alpha = Matrix(T, V);
  L.beta = Matrix(T, V);
  std::vector<double> tmp(V);
  for (std::size_t y = 0; y < V; ++y) L.alpha(0, y) = p.start[y] + L.emit(0, y);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t y = 0; y < V; ++y) {
      for (std::size_t yp = 0; yp < V; ++yp) tmp[yp] = L.alpha(t - 1, yp) + p.transitions(yp, y);
      L.alpha(t, y) = L.emit(t, y) + log_sum_exp(tmp);
    }
  }
  for (std::size_t y = 0; y < V; ++y) tmp[y] = L.alpha(T - 1, y) + p.stop[y];
  L.log_z = log_sum_exp(tmp);

  for (std::size_t y = 0; y < V; ++y) L.beta(T - 1, y) = p.stop[y];
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t y = 0; y < V; ++y) {
      for (std::size_t yn = 0; yn < V; ++yn)
        tmp[yn] = p.transitions(y, yn) + L.emit(t + 1, yn) + L.beta(t + 1, yn);
      L.beta(t, y) = log_sum_exp(tmp);
    }
  }
  for (std::size_t y = 0; y < V; ++y) tmp[y] = p.start[y] + L.emit(0, y) + L.beta(0, y);
  L.log_z_backward = log_sum_exp(tmp);
  return L;
}

std::vector<TokenDistribution> lattice_marginals(const Lattice& L) {
  const std::size_t T = L.emit.rows, V = L.emit.cols;
  std::vector<TokenDistribution> out(T, TokenDistribution(V));
  for (std::size_t t = 0; t < T; ++t) {
    double s = 0.0;
    for (std::size_t y = 0; y < V; ++y) {
      out[t][y] = std::exp(L.alpha(t, y) + L.beta(t, y) - L.log_z);
      s += out[t][y];
    }
    // Renormalize away the last ulps of rounding so every row sums to 1.
    for (double& v : out[t]) v /= s;
  }
  return out;
}

}  // namespace

CrfMarginals crf_forward_backward(const CrfParams& p, std::span<const std::uint32_t> tokens) {
  if (tokens.empty()) throw ArgumentError("empty sequence");
  Lattice L = crf_lattice(p, tokens);
  return {lattice_marginals(L), L.log_z, L.log_z_backward};
}

std::vector<std::uint32_t> crf_viterbi(const CrfParams& p, std::span<const std::uint32_t> tokens) {
  if (tokens.empty()) throw ArgumentError("empty sequence");
  const std::size_t T = tokens.size(), V = p.emission.labels();
  Matrix emit = crf_emission_table(p, tokens);
  Matrix delta(T, V);
  std::vector<std::uint32_t> back(T * V, 0);
  for (std::size_t y = 0; y < V; ++y) delta(0, y) = p.start[y] + emit(0, y);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t y = 0; y < V; ++y) {
      std::size_t best = 0;
      double best_score = delta(t - 1, 0) + p.transitions(0, y);
      for (std::size_t yp = 1; yp < V; ++yp) {
        const double s = delta(t - 1, yp) + p.transitions(yp, y);
        if (s > best_score) {
          best_score = s;
          best = yp;
        }
      }
      delta(t, y) = best_score + emit(t, y);
      back[t * V + y] = static_cast<std::uint32_t>(best);
    }
  }
  std::vector<double> final(V);
  for (std::size_t y = 0; y < V; ++y) final[y] = delta(T - 1, y) + p.stop[y];
  std::vector<std::uint32_t> path(T);
  path[T - 1] = static_cast<std::uint32_t>(argmax(final));
  for (std::size_t t = T - 1; t > 0; --t) path[t - 1] = back[t * V + path[t]];
  return path;
}

double crf_path_score(const CrfParams& p, std::span<const std::uint32_t> tokens,
                      std::span<const std::uint32_t> labels) {
  std::vector<double> e(p.emission.labels());
  double s = p.start[labels[0]] + p.stop[labels.back()];
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    p.emission.scores(tokens, t, e);
    s += e[labels[t]];
    if (t > 0) s += p.transitions(labels[t - 1], labels[t]);
  }
  return s;
}

double crf_nll_accumulate(const CrfParams& p, const data::TokenSequence& seq, double scale,
                          CrfParams& grad) {
  const std::span<const std::uint32_t> tokens = seq.tokens;
  const std::size_t T = tokens.size(), V = p.emission.labels();
  Lattice L = crf_lattice(p, tokens);
  const auto marg = lattice_marginals(L);
  const double nll = L.log_z - crf_path_score(p, tokens, seq.gold);

  std::vector<double> d(V);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t y = 0; y < V; ++y) d[y] = scale * marg[t][y];
    d[seq.gold[t]] -= scale;
    p.emission.backprop(tokens, t, d, grad.emission);
  }
  for (std::size_t y = 0; y < V; ++y) {
    grad.start[y] += scale * marg[0][y];
    grad.stop[y] += scale * marg[T - 1][y];
  }
  grad.start[seq.gold[0]] -= scale;
  grad.stop[seq.gold[T - 1]] -= scale;
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t yp = 0; yp < V; ++yp)
      for (std::size_t y = 0; y < V; ++y)
        grad.transitions(yp, y) += scale * std::exp(L.alpha(t - 1, yp) + p.transitions(yp, y) +
                                                    L.emit(t, y) + L.beta(t, y) - L.log_z);
    grad.transitions(seq.gold[t - 1], seq.gold[t]) -= scale;
  }
  return nll;
}

CrfNllGrad crf_nll_grad(const CrfParams& p, const data::TokenSequence& seq) {
  CrfNllGrad out;
  out.grad = std::get<CrfParams>(zeros_like(Model{p}));
  out.nll = crf_nll_accumulate(p, seq, 1.0, out.grad);
  return out;
}

// ---- Autoregressive ----------------------------------------------------------------

void ar_logits_at(const ArParams& p, std::span<const std::uint32_t> tokens, std::size_t t,
                  std::size_t prev, std::span<double> out) {
  p.emission.scores(tokens, t, out);
  auto row = p.prev_label.row(prev);
  for (std::size_t y = 0; y < out.size(); ++y) out[y] += row[y];
}

std::vector<std::vector<double>> ar_teacher_forced_logits(const ArParams& p, const data::TokenSequence& seq) {
  std::vector<std::vector<double>> out(seq.size(), std::vector<double>(p.emission.labels()));
  for (std::size_t t = 0; t < seq.size(); ++t)
    ar_logits_at(p, seq.tokens, t, t == 0 ? p.bos() : seq.gold[t - 1], out[t]);
  return out;
}

std::vector<TokenDistribution> ar_teacher_forced(const ArParams& p, const data::TokenSequence& seq) {
  if (seq.gold.size() != seq.tokens.size()) throw ArgumentError("teacher forcing needs gold labels");
  auto out = ar_teacher_forced_logits(p, seq);
  for (auto& row : out) softmax_inplace(row);
  return out;
}

namespace {

std::vector<std::vector<double>> ar_free_running_logits(const ArParams& p,
                                                        std::span<const std::uint32_t> tokens) {
  std::vector<std::vector<double>> out(tokens.size(), std::vector<double>(p.emission.labels()));
  std::size_t prev = p.bos();
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    ar_logits_at(p, tokens, t, prev, out[t]);
    prev = argmax(out[t]);
  }
  return out;
}

}  // namespace

std::vector<TokenDistribution> ar_free_running(const ArParams& p, std::span<const std::uint32_t> tokens) {
  auto out = ar_free_running_logits(p, tokens);
  for (auto& row : out) softmax_inplace(row);
  return out;
}

std::vector<std::uint32_t> ar_greedy_decode(const ArParams& p, std::span<const std::uint32_t> tokens) {
  if (tokens.empty()) throw ArgumentError("empty sequence");
  std::vector<std::uint32_t> out;
  for (const auto& row : ar_free_running_logits(p, tokens))
    out.push_back(static_cast<std::uint32_t>(argmax(row)));
  return out;
}

// ---- Generic views -----------------------------------------------------------------

std::vector<TokenDistribution> token_distributions(const Model& m, const data::TokenSequence& seq,
                                                   ArMode mode) {
  switch (model_type(m)) {
    case ModelType::kIid: return iid_marginals(std::get<IidParams>(m), seq.tokens);
    case ModelType::kCrf: return crf_forward_backward(std::get<CrfParams>(m), seq.tokens).marginals;
    case ModelType::kAr:
      if (mode == ArMode::kTeacherForced) return ar_teacher_forced(std::get<ArParams>(m), seq);
      return ar_free_running(std::get<ArParams>(m), seq.tokens);
  }
  return {};
}

std::vector<std::vector<double>> token_logits(const Model& m, const data::TokenSequence& seq, ArMode mode) {
  switch (model_type(m)) {
    case ModelType::kIid: return iid_logits(std::get<IidParams>(m), seq.tokens);
    case ModelType::kCrf: {
      auto marg = crf_forward_backward(std::get<CrfParams>(m), seq.tokens).marginals;
      for (auto& row : marg)
        for (double& v : row) v = std::log(std::max(v, std::numeric_limits<double>::min()));
      return marg;
    }
    case ModelType::kAr:
      if (mode == ArMode::kTeacherForced) return ar_teacher_forced_logits(std::get<ArParams>(m), seq);
      return ar_free_running_logits(std::get<ArParams>(m), seq.tokens);
  }
  return {};
}

std::vector<std::uint32_t> decode(const Model& m, std::span<const std::uint32_t> tokens) {
  switch (model_type(m)) {
    case ModelType::kIid: return iid_decode(std::get<IidParams>(m), tokens);
    case ModelType::kCrf: return crf_viterbi(std::get<CrfParams>(m), tokens);
    case ModelType::kAr: return ar_greedy_decode(std::get<ArParams>(m), tokens);
  }
  return {};
}

// ---- Serialization -----------------------------------------------------------------

namespace {
constexpr char kModelMagic[4] = {'C', 'S', 'P', '1'};
}

void write_model(std::ostream& out, const Model& m) {
  const auto& f = feature_map(m);
  out.write(kModelMagic, 4);
  out.put(static_cast<char>(model_type(m)));
  detail::write_le<std::uint64_t>(out, num_labels(m));
  detail::write_le<std::uint64_t>(out, f.size());
  detail::write_le<std::uint64_t>(out, f.obs_vocab());
  detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(f.kind()));
  detail::write_le<std::uint64_t>(out, f.hash_buckets());
  for (auto block : param_blocks(m))
    for (double v : block) detail::write_f64(out, v);
}

Model read_model(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || !std::equal(magic, magic + 4, kModelMagic))
    throw LoadError("not a CSP1 model file");
  const int type_byte = in.get();
  if (type_byte < 1 || type_byte > 3) throw LoadError("unknown model type byte");
  const auto V = detail::read_le<std::uint64_t>(in);
  const auto rows = detail::read_le<std::uint64_t>(in);
  const auto obs_vocab = detail::read_le<std::uint64_t>(in);
  const auto kind = detail::read_le<std::uint64_t>(in);
  const auto buckets = detail::read_le<std::uint64_t>(in);
  FeatureMap f;
  if (kind == static_cast<std::uint64_t>(FeatureKind::kUnigram) && buckets == 0)
    f = FeatureMap::unigram(obs_vocab);
  else if (kind == static_cast<std::uint64_t>(FeatureKind::kWindow))
    f = FeatureMap::window(obs_vocab, buckets);
  else
    throw LoadError("unknown feature kind");
  if (f.size() != rows) throw LoadError("emission row count does not match feature map");
  if (V < 2 || V > (1u << 20)) throw LoadError("implausible label count");
  Model m = make_model(static_cast<ModelType>(type_byte), f, V);
  for (auto block : param_blocks(m))
    for (double& v : block) v = detail::read_f64(in);
  return m;
}

void save_model(const std::string& path, const Model& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_model(out, m);
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open '" + path + "'");
  try {
    return read_model(in);
  } catch (const LoadError& e) {
    throw LoadError(path + ": " + e.what());
  }
}

}  // namespace csp::taggers
