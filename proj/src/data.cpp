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

#include "csp/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace csp::data {

using json = nlohmann::json;

// ---- Vocabularies --------------------------------------------------------------

LabelVocab::LabelVocab(std::vector<std::string> labels) {
  for (auto& l : labels) {
    if (index_.count(l)) throw ArgumentError("duplicate label '" + l + "'");
    index_.emplace(l, labels_.size());
    labels_.push_back(std::move(l));
  }
}

std::optional<std::size_t> LabelVocab::find(std::string_view label) const {
  auto it = index_.find(std::string(label));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t LabelVocab::index(std::string_view label) const {
  auto i = find(label);
  if (!i) throw ArgumentError("unknown label '" + std::string(label) + "'");
  return *i;
}

std::size_t LabelVocab::add(const std::string& label) {
  if (auto i = find(label)) return *i;
  index_.emplace(label, labels_.size());
  labels_.push_back(label);
  return labels_.size() - 1;
}

TokenVocab::TokenVocab() { tokens_.push_back(kUnkString); }

std::uint32_t TokenVocab::lookup_or_add(const std::string& token) {
  auto [it, inserted] = index_.emplace(token, static_cast<std::uint32_t>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::uint32_t TokenVocab::lookup(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

// ---- Dataset -----------------------------------------------------------------

void Dataset::validate() {
  if (vocab.size() < 2) throw ArgumentError("label vocabulary needs at least 2 labels");
  std::size_t total = 0;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& s = sequences[i];
    if (s.tokens.empty()) throw ArgumentError("sequence " + std::to_string(i) + " is empty");
    if (s.tokens.size() != s.gold.size())
      throw ArgumentError("sequence " + std::to_string(i) + ": tokens/gold length mismatch");
    for (auto t : s.tokens)
      if (t >= obs_vocab_size)
        throw ArgumentError("sequence " + std::to_string(i) + ": observation id out of range");
    for (auto g : s.gold)
      if (g >= vocab.size())
        throw ArgumentError("sequence " + std::to_string(i) + ": gold label out of range");
    total += s.size();
  }
  total_tokens = total;
}

Dataset make_dataset(std::vector<TokenSequence> seqs, LabelVocab vocab, std::size_t obs_vocab_size) {
  Dataset d;
  d.sequences = std::move(seqs);
  d.vocab = std::move(vocab);
  d.obs_vocab_size = obs_vocab_size;
  d.validate();
  return d;
}

// ---- CoNLL -------------------------------------------------------------------

namespace {

struct Tag {
  char prefix;  // 'O', 'B' or 'I'
  std::string type;
};

Tag split_tag(std::string_view tag) {
  if (tag == "O") return {'O', ""};
  if (tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-')
    return {tag[0], std::string(tag.substr(2))};
  throw ArgumentError("unknown tag prefix in '" + std::string(tag) + "'");
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string col;
  while (ss >> col) out.push_back(col);
  return out;
}

}  // namespace

std::vector<std::string> iob_to_iob2(const std::vector<std::string>& tags) {
  std::vector<std::string> out;
  out.reserve(tags.size());
  Tag prev{'O', ""};
  for (const auto& t : tags) {
    Tag cur = split_tag(t);
    if (cur.prefix == 'I' && (prev.prefix == 'O' || prev.type != cur.type)) {
      out.push_back("B-" + cur.type);
    } else {
      out.push_back(t);
    }
    prev = cur;
  }
  return out;
}

std::string tag_type(std::string_view tag) {
  if (tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-')
    return std::string(tag.substr(2));
  return std::string(tag);
}

ConllCorpus parse_conll(std::istream& in, const ConllOptions& opts, const LabelVocab* labels,
                        const TokenVocab* tokens) {
  ConllCorpus corpus;
  if (tokens) corpus.tokens = *tokens;
  LabelVocab vocab = labels ? *labels : LabelVocab{};

  std::vector<TokenSequence> seqs;
  std::vector<std::uint32_t> cur_tokens;
  std::vector<std::string> cur_tags;
  std::vector<std::size_t> cur_lines;
  std::size_t columns = 0;
  std::size_t lineno = 0;

  auto flush = [&]() {
    if (cur_tokens.empty()) return;
    std::vector<std::string> tags;
    try {
      tags = opts.scheme == TagScheme::kIob ? iob_to_iob2(cur_tags) : cur_tags;
      for (const auto& t : tags) split_tag(t);
    } catch (const ArgumentError& e) {
      // Report the first line of the sentence that holds the bad tag.
      std::size_t bad = cur_lines.front();
      for (std::size_t i = 0; i < cur_tags.size(); ++i) {
        try {
          split_tag(cur_tags[i]);
        } catch (const ArgumentError&) {
          bad = cur_lines[i];
          break;
        }
      }
      throw ParseError(e.what(), bad);
    }
    TokenSequence seq;
    seq.tokens = std::move(cur_tokens);
    for (std::size_t i = 0; i < tags.size(); ++i) {
      std::size_t id;
      if (opts.freeze_vocab) {
        auto found = vocab.find(tags[i]);
        if (!found) throw ParseError("label '" + tags[i] + "' not in vocabulary", cur_lines[i]);
        id = *found;
      } else {
        id = vocab.add(tags[i]);
      }
      seq.gold.push_back(static_cast<std::uint32_t>(id));
    }
    seqs.push_back(std::move(seq));
    cur_tokens.clear();
    cur_tags.clear();
    cur_lines.clear();
  };

  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto cols = split_ws(line);
    if (cols.empty()) {
      flush();
      continue;
    }
    if (cols[0] == "-DOCSTART-") {
      flush();
      continue;
    }
    if (cols.size() < 2) throw ParseError("expected token and label columns", lineno);
    if (columns == 0) columns = cols.size();
    if (cols.size() != columns)
      throw ParseError("expected " + std::to_string(columns) + " columns, found " +
                           std::to_string(cols.size()),
                       lineno);
    cur_tokens.push_back(opts.freeze_vocab ? corpus.tokens.lookup(cols.front())
                                           : corpus.tokens.lookup_or_add(cols.front()));
    cur_tags.push_back(cols.back());
    cur_lines.push_back(lineno);
  }
  flush();

  corpus.dataset.sequences = std::move(seqs);
  corpus.dataset.vocab = std::move(vocab);
  corpus.dataset.obs_vocab_size = corpus.tokens.size();
  corpus.dataset.validate();
  return corpus;
}

ConllCorpus parse_conll_string(std::string_view text, const ConllOptions& opts) {
  std::istringstream in{std::string(text)};
  return parse_conll(in, opts);
}

void write_conll(std::ostream& out, const Dataset& data, const TokenVocab& tokens) {
  for (std::size_t i = 0; i < data.sequences.size(); ++i) {
    if (i) out << '\n';
    const auto& s = data.sequences[i];
    for (std::size_t t = 0; t < s.size(); ++t)
      out << tokens.token(s.tokens[t]) << ' ' << data.vocab.label(s.gold[t]) << '\n';
  }
}

// ---- JSON lines --------------------------------------------------------------

void write_jsonl(std::ostream& out, const Dataset& data) {
  json header = {{"labels", data.vocab.labels()}, {"obs_vocab_size", data.obs_vocab_size}};
  out << header.dump() << '\n';
  for (const auto& s : data.sequences) {
    json j = {{"tokens", s.tokens}, {"gold", s.gold}};
    out << j.dump() << '\n';
  }
}

Dataset read_jsonl(std::istream& in) {
  std::string line;
  std::vector<TokenSequence> seqs;
  std::optional<LabelVocab> vocab;
  std::size_t obs_vocab = 0;
  std::size_t lineno = 0;
  std::uint32_t max_label = 0;
  std::uint32_t max_obs = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(e.what(), lineno);
    }
    if (j.contains("labels")) {
      if (lineno != 1 || vocab) throw ParseError("header must be the first line", lineno);
      vocab = LabelVocab(j.at("labels").get<std::vector<std::string>>());
      obs_vocab = j.value("obs_vocab_size", std::size_t{0});
      continue;
    }
    if (!j.contains("tokens") || !j.contains("gold"))
      throw ParseError("expected \"tokens\" and \"gold\" keys", lineno);
    TokenSequence s;
    s.tokens = j["tokens"].get<std::vector<std::uint32_t>>();
    s.gold = j["gold"].get<std::vector<std::uint32_t>>();
    for (auto g : s.gold) max_label = std::max(max_label, g);
    for (auto t : s.tokens) max_obs = std::max(max_obs, t);
    seqs.push_back(std::move(s));
  }
  if (!vocab) {
    std::vector<std::string> names;
    for (std::uint32_t i = 0; i <= std::max<std::uint32_t>(max_label, 1); ++i)
      names.push_back("L" + std::to_string(i));
    vocab = LabelVocab(std::move(names));
  }
  if (obs_vocab == 0) obs_vocab = static_cast<std::size_t>(max_obs) + 1;
  return make_dataset(std::move(seqs), std::move(*vocab), obs_vocab);
}

void save_jsonl(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_jsonl(out, data);
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

Dataset load_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open '" + path + "'");
  return read_jsonl(in);
}

// ---- HMM ----------------------------------------------------------------------

namespace {

std::size_t sample_categorical(std::span<const double> probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (r < acc) return i;
  }
  return probs.size() - 1;
}

void dirichlet_row(std::span<double> row, std::mt19937_64& rng) {
  // Dirichlet(1, ..., 1): normalized unit exponentials.
  std::exponential_distribution<double> e(1.0);
  double s = 0.0;
  for (double& x : row) {
    x = e(rng);
    s += x;
  }
  for (double& x : row) x /= s;
}

}  // namespace

std::vector<double> stationary_distribution(const Matrix& transition) {
  const std::size_t n = transition.rows;
  std::vector<double> pi(n, 1.0 / static_cast<double>(n)), next(n);
  for (int iter = 0; iter < 100000; ++iter) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) next[j] += pi[i] * transition(i, j);
    // Lazy step guards against periodic chains.
    double diff = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      next[j] = 0.5 * (next[j] + pi[j]);
      diff = std::max(diff, std::abs(next[j] - pi[j]));
    }
    pi.swap(next);
    if (diff < 1e-15) break;
  }
  const double s = std::accumulate(pi.begin(), pi.end(), 0.0);
  for (double& p : pi) p /= s;
  return pi;
}

Dataset sample_hmm(const HmmSpec& spec, std::size_t n_seqs, std::pair<int, int> len_range,
                   std::uint64_t seed) {
  if (len_range.first < 1 || len_range.first > len_range.second)
    throw ArgumentError("invalid length range");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> len_dist(len_range.first, len_range.second);
  std::vector<TokenSequence> seqs;
  seqs.reserve(n_seqs);
  for (std::size_t n = 0; n < n_seqs; ++n) {
    TokenSequence s;
    const int len = len_dist(rng);
    std::size_t state = sample_categorical(spec.initial, rng);
    for (int t = 0; t < len; ++t) {
      if (t > 0) state = sample_categorical(spec.transition.row(state), rng);
      s.gold.push_back(static_cast<std::uint32_t>(state));
      s.tokens.push_back(static_cast<std::uint32_t>(sample_categorical(spec.emission.row(state), rng)));
    }
    seqs.push_back(std::move(s));
  }
  std::vector<std::string> names;
  for (std::size_t i = 0; i < spec.states(); ++i) names.push_back("S" + std::to_string(i));
  return make_dataset(std::move(seqs), LabelVocab(std::move(names)), spec.obs_symbols());
}

std::pair<Dataset, HmmSpec> generate_hmm(std::size_t states, std::size_t obs_symbols,
                                         std::size_t n_seqs, std::pair<int, int> len_range,
                                         std::uint64_t seed) {
  if (states < 2) throw ArgumentError("states must be >= 2");
  if (obs_symbols < 2) throw ArgumentError("obs_symbols must be >= 2");
  if (n_seqs < 1) throw ArgumentError("n_seqs must be >= 1");
  if (len_range.first < 1 || len_range.first > len_range.second)
    throw ArgumentError("invalid length range");
  std::mt19937_64 rng(seed);
  HmmSpec spec;
  spec.transition = Matrix(states, states);
  spec.emission = Matrix(states, obs_symbols);
  for (std::size_t s = 0; s < states; ++s) dirichlet_row(spec.transition.row(s), rng);
  for (std::size_t s = 0; s < states; ++s) dirichlet_row(spec.emission.row(s), rng);
  spec.initial = stationary_distribution(spec.transition);
  // Sampling uses a seed derived from the parameter draw so both are replayable.
  Dataset d = sample_hmm(spec, n_seqs, len_range, rng());
  return {std::move(d), std::move(spec)};
}

std::vector<TokenDistribution> hmm_posteriors(const HmmSpec& spec,
                                              const std::vector<std::uint32_t>& tokens) {
  const std::size_t S = spec.states();
  const std::size_t T = tokens.size();
  std::vector<std::vector<double>> alpha(T, std::vector<double>(S)), beta(T, std::vector<double>(S, 1.0));
  for (std::size_t s = 0; s < S; ++s) alpha[0][s] = spec.initial[s] * spec.emission(s, tokens[0]);
  auto normalize = [](std::vector<double>& v) {
    double z = std::accumulate(v.begin(), v.end(), 0.0);
    for (double& x : v) x /= z;
  };
  normalize(alpha[0]);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t j = 0; j < S; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < S; ++i) acc += alpha[t - 1][i] * spec.transition(i, j);
      alpha[t][j] = acc * spec.emission(j, tokens[t]);
    }
    normalize(alpha[t]);
  }
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t i = 0; i < S; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < S; ++j)
        acc += spec.transition(i, j) * spec.emission(j, tokens[t + 1]) * beta[t + 1][j];
      beta[t][i] = acc;
    }
    normalize(beta[t]);
  }
  std::vector<TokenDistribution> out(T, TokenDistribution(S));
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) out[t][s] = alpha[t][s] * beta[t][s];
    normalize(out[t]);
  }
  return out;
}

// ---- Splits --------------------------------------------------------------------

namespace {

std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t n_folds, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::size_t> fold_of(n);
  for (std::size_t f = 0; f < n_folds; ++f) {
    const std::size_t lo = f * n / n_folds, hi = (f + 1) * n / n_folds;
    for (std::size_t p = lo; p < hi; ++p) fold_of[perm[p]] = f;
  }
  return fold_of;
}

Dataset subset(const Dataset& data, const std::vector<bool>& keep) {
  Dataset out;
  out.vocab = data.vocab;
  out.obs_vocab_size = data.obs_vocab_size;
  for (std::size_t i = 0; i < data.sequences.size(); ++i)
    if (keep[i]) {
      out.sequences.push_back(data.sequences[i]);
      out.total_tokens += data.sequences[i].size();
    }
  return out;
}

}  // namespace

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, std::size_t n_folds,
                                          std::size_t fold, std::uint64_t seed) {
  if (n_folds == 0 || fold >= n_folds) throw ArgumentError("fold index out of range");
  if (n_folds > data.sequences.size()) throw ArgumentError("more folds than sequences");
  auto fold_of = fold_assignment(data.sequences.size(), n_folds, seed);
  std::vector<bool> held(fold_of.size()), train(fold_of.size());
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    held[i] = fold_of[i] == fold;
    train[i] = !held[i];
  }
  return {subset(data, train), subset(data, held)};
}

Dataset exclude_folds(const Dataset& data, std::size_t n_folds,
                      const std::vector<std::size_t>& held_folds, std::uint64_t seed) {
  if (n_folds == 0 || n_folds > data.sequences.size()) throw ArgumentError("invalid fold count");
  auto fold_of = fold_assignment(data.sequences.size(), n_folds, seed);
  std::vector<bool> keep(fold_of.size(), true);
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    for (auto f : held_folds)
      if (fold_of[i] == f) keep[i] = false;
  return subset(data, keep);
}

}  // namespace csp::data
