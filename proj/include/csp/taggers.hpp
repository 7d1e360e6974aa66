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

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "csp/core.hpp"
#include "csp/data.hpp"

namespace csp::taggers {

enum class ModelType : std::uint8_t { kIid = 1, kCrf = 2, kAr = 3 };

std::string_view to_string(ModelType t);
ModelType parse_model_type(std::string_view s);

// How a token position is turned into emission rows.
//   kUnigram: one feature, the observation id itself (ids past the vocabulary map to 0).
//   kWindow:  the observation id plus hashed context templates (previous, next,
//             left/right bigram and centred trigram), a desk-scale stand-in for a
//             contextual encoder.
enum class FeatureKind : std::uint8_t { kUnigram = 0, kWindow = 1 };

class FeatureMap {
 public:
  static constexpr std::size_t kMaxFeatures = 6;

  FeatureMap() = default;
  static FeatureMap unigram(std::size_t obs_vocab);
  static FeatureMap window(std::size_t obs_vocab, std::size_t hash_buckets);

  FeatureKind kind() const { return kind_; }
  std::size_t obs_vocab() const { return obs_vocab_; }
  std::size_t hash_buckets() const { return hash_buckets_; }
  // Number of emission rows.
  std::size_t size() const { return obs_vocab_ + hash_buckets_; }

  // Writes the active feature rows for position t into `out` and returns how many.
  std::size_t extract(std::span<const std::uint32_t> tokens, std::size_t t,
                      std::span<std::uint32_t, kMaxFeatures> out) const;

  bool operator==(const FeatureMap&) const = default;

 private:
  FeatureKind kind_ = FeatureKind::kUnigram;
  std::size_t obs_vocab_ = 0;
  std::size_t hash_buckets_ = 0;
};

// Lookup-table emission scores shared by every tagger: score = bias + sum of the
// weight rows of the active features.
struct Emission {
  FeatureMap features;
  Matrix weights;             // [features.size() x V]
  std::vector<double> bias;   // [V]

  std::size_t labels() const { return bias.size(); }
  void scores(std::span<const std::uint32_t> tokens, std::size_t t, std::span<double> out) const;
  // grad.weights[f] += dscores for every active f; grad.bias += dscores.
  void backprop(std::span<const std::uint32_t> tokens, std::size_t t,
                std::span<const double> dscores, Emission& grad) const;

  bool operator==(const Emission&) const = default;
};

struct IidParams {
  Emission emission;
  bool operator==(const IidParams&) const = default;
};

struct CrfParams {
  Emission emission;
  Matrix transitions;          // [V x V] log-potentials, from row to column
  std::vector<double> start;   // [V]
  std::vector<double> stop;    // [V]
  bool operator==(const CrfParams&) const = default;
};

// First-order autoregressive tagger. prev_label has V + 1 rows; row V is the
// begin-of-sequence context.
struct ArParams {
  Emission emission;
  Matrix prev_label;  // [(V+1) x V]
  std::size_t bos() const { return prev_label.rows - 1; }
  bool operator==(const ArParams&) const = default;
};

using Model = std::variant<IidParams, CrfParams, ArParams>;

ModelType model_type(const Model& m);
std::size_t num_labels(const Model& m);
const FeatureMap& feature_map(const Model& m);

Model make_model(ModelType type, const FeatureMap& features, std::size_t num_labels);
Model zeros_like(const Model& m);

// Every parameter block in a fixed order (emission weights, bias, then the
// model-specific blocks). Used by optimizers, serialization and gradient checks.
std::vector<std::span<double>> param_blocks(Model& m);
std::vector<std::span<const double>> param_blocks(const Model& m);
std::vector<std::string> param_block_names(const Model& m);
std::size_t num_params(const Model& m);

// ---- IID ------------------------------------------------------------------------

std::vector<std::vector<double>> iid_logits(const IidParams& p, std::span<const std::uint32_t> tokens);
std::vector<TokenDistribution> iid_marginals(const IidParams& p, std::span<const std::uint32_t> tokens);
std::vector<std::uint32_t> iid_decode(const IidParams& p, std::span<const std::uint32_t> tokens);

// ---- CRF ------------------------------------------------------------------------

struct CrfMarginals {
  std::vector<TokenDistribution> marginals;
  double log_z = 0.0;           // from the forward pass
  double log_z_backward = 0.0;  // same quantity from the backward pass
};

// Emission score table [T x V] (bias included).
Matrix crf_emission_table(const CrfParams& p, std::span<const std::uint32_t> tokens);
CrfMarginals crf_forward_backward(const CrfParams& p, std::span<const std::uint32_t> tokens);
std::vector<std::uint32_t> crf_viterbi(const CrfParams& p, std::span<const std::uint32_t> tokens);
double crf_path_score(const CrfParams& p, std::span<const std::uint32_t> tokens,
                      std::span<const std::uint32_t> labels);

// Negative log-likelihood of seq.gold. The gradient, multiplied by `scale`, is
// added into `grad` (which must have the shape of `p`). Returns the unscaled nll.
double crf_nll_accumulate(const CrfParams& p, const data::TokenSequence& seq, double scale,
                          CrfParams& grad);

struct CrfNllGrad {
  double nll = 0.0;
  CrfParams grad;
};
CrfNllGrad crf_nll_grad(const CrfParams& p, const data::TokenSequence& seq);

// ---- Autoregressive ---------------------------------------------------------------

// Logits at position t given the previous label (p.bos() at the start).
void ar_logits_at(const ArParams& p, std::span<const std::uint32_t> tokens, std::size_t t,
                  std::size_t prev, std::span<double> out);
std::vector<std::vector<double>> ar_teacher_forced_logits(const ArParams& p, const data::TokenSequence& seq);
std::vector<TokenDistribution> ar_teacher_forced(const ArParams& p, const data::TokenSequence& seq);
// Distributions when each step conditions on the model's own previous argmax.
std::vector<TokenDistribution> ar_free_running(const ArParams& p, std::span<const std::uint32_t> tokens);
std::vector<std::uint32_t> ar_greedy_decode(const ArParams& p, std::span<const std::uint32_t> tokens);

// ---- Generic views -----------------------------------------------------------------

// AR members need either gold context (teacher forcing) or their own predictions.
enum class ArMode { kTeacherForced, kFreeRunning };

std::vector<TokenDistribution> token_distributions(const Model& m, const data::TokenSequence& seq,
                                                   ArMode mode = ArMode::kTeacherForced);
// Per-token logits used for temperature scaling: raw scores for IID/AR and
// log-marginals for the CRF.
std::vector<std::vector<double>> token_logits(const Model& m, const data::TokenSequence& seq,
                                              ArMode mode = ArMode::kTeacherForced);
// Model's own decoder: argmax for IID, Viterbi for CRF, greedy for AR.
std::vector<std::uint32_t> decode(const Model& m, std::span<const std::uint32_t> tokens);

// ---- Serialization -----------------------------------------------------------------

// "CSP1", model-type byte, u64 LE dimensions, then row-major f64 LE blocks in
// param_blocks() order.
void write_model(std::ostream& out, const Model& m);
Model read_model(std::istream& in);
void save_model(const std::string& path, const Model& m);
Model load_model(const std::string& path);

}  // namespace csp::taggers
