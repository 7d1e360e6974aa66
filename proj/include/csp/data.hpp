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
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "csp/core.hpp"

namespace csp::data {

// Ordered, duplicate-free list of label strings. index() is a bijection onto [0, size()).
class LabelVocab {
 public:
  LabelVocab() = default;
  explicit LabelVocab(std::vector<std::string> labels);

  std::size_t size() const { return labels_.size(); }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  const std::vector<std::string>& labels() const { return labels_; }

  std::optional<std::size_t> find(std::string_view label) const;
  std::size_t index(std::string_view label) const;  // throws ArgumentError if absent
  std::size_t add(const std::string& label);        // returns existing index if present

  bool operator==(const LabelVocab& o) const { return labels_ == o.labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Maps token strings to observation ids by first-seen order. Id 0 is reserved for
// unknown tokens, so the first real token gets id 1.
class TokenVocab {
 public:
  static constexpr std::uint32_t kUnk = 0;
  static constexpr const char* kUnkString = "<unk>";

  TokenVocab();
  std::uint32_t lookup_or_add(const std::string& token);
  std::uint32_t lookup(const std::string& token) const;  // kUnk when absent
  const std::string& token(std::uint32_t id) const { return tokens_.at(id); }
  std::size_t size() const { return tokens_.size(); }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct TokenSequence {
  std::vector<std::uint32_t> tokens;
  std::vector<std::uint32_t> gold;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const TokenSequence&) const = default;
};

struct Dataset {
  std::vector<TokenSequence> sequences;
  LabelVocab vocab;
  std::size_t obs_vocab_size = 0;
  std::size_t total_tokens = 0;

  // Recomputes total_tokens and checks every invariant; throws ArgumentError.
  void validate();
  bool empty() const { return sequences.empty(); }
};

// Builds a dataset and fills total_tokens, validating on the way.
Dataset make_dataset(std::vector<TokenSequence> seqs, LabelVocab vocab, std::size_t obs_vocab_size);

// ---- CoNLL ----------------------------------------------------------------

enum class TagScheme { kIob, kIob2 };

// Rewrites IOB(1) tags to IOB2: an I-X that does not continue a span of type X
// becomes B-X. Throws ArgumentError on an unknown prefix.
std::vector<std::string> iob_to_iob2(const std::vector<std::string>& tags);

// Entity type of a tag ("B-PER" -> "PER"); "O" maps to "O". Tags without a
// B-/I- prefix are their own type.
std::string tag_type(std::string_view tag);

struct ConllOptions {
  TagScheme scheme = TagScheme::kIob;
  // When frozen, unseen tokens map to TokenVocab::kUnk and unseen labels are an error.
  bool freeze_vocab = false;
};

struct ConllCorpus {
  Dataset dataset;
  TokenVocab tokens;
};

// Parses whitespace-separated columns (token first, label last, blank line
// between sentences). -DOCSTART- lines are skipped. Vocabularies from a previous
// parse can be passed in for evaluation files.
ConllCorpus parse_conll(std::istream& in, const ConllOptions& opts = {},
                        const LabelVocab* labels = nullptr, const TokenVocab* tokens = nullptr);
ConllCorpus parse_conll_string(std::string_view text, const ConllOptions& opts = {});

void write_conll(std::ostream& out, const Dataset& data, const TokenVocab& tokens);

// ---- JSON lines -----------------------------------------------------------

// One header line {"labels":[...],"obs_vocab_size":N} followed by one
// {"tokens":[...],"gold":[...]} object per sequence.
void write_jsonl(std::ostream& out, const Dataset& data);
Dataset read_jsonl(std::istream& in);
void save_jsonl(const std::string& path, const Dataset& data);
Dataset load_jsonl(const std::string& path);

// ---- Synthetic HMM data ----------------------------------------------------

struct HmmSpec {
  Matrix transition;  // [S x S], rows sum to 1
  Matrix emission;    // [S x O], rows sum to 1
  std::vector<double> initial;  // stationary distribution of `transition`

  std::size_t states() const { return transition.rows; }
  std::size_t obs_symbols() const { return emission.cols; }
};

// Stationary distribution of a row-stochastic matrix by power iteration.
std::vector<double> stationary_distribution(const Matrix& transition);

// Samples sequences from an existing HMM. Labels are named "S0", "S1", ...
Dataset sample_hmm(const HmmSpec& spec, std::size_t n_seqs, std::pair<int, int> len_range,
                   std::uint64_t seed);

// Draws transition and emission rows from Dirichlet(1) and samples from it.
std::pair<Dataset, HmmSpec> generate_hmm(std::size_t states, std::size_t obs_symbols,
                                         std::size_t n_seqs, std::pair<int, int> len_range,
                                         std::uint64_t seed);

// Exact per-position state posteriors p(y_t | x) under the true HMM.
std::vector<TokenDistribution> hmm_posteriors(const HmmSpec& spec,
                                              const std::vector<std::uint32_t>& tokens);

// ---- Splits ------------------------------------------------------------------

// Shards a seeded permutation of sequences into n_folds near-equal folds and
// returns (everything else, fold `fold`).
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, std::size_t n_folds,
                                          std::size_t fold, std::uint64_t seed);

// Sequences whose index is not in any of `held_folds`.
Dataset exclude_folds(const Dataset& data, std::size_t n_folds,
                      const std::vector<std::size_t>& held_folds, std::uint64_t seed);

}  // namespace csp::data
