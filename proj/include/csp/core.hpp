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

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace csp {

// Error hierarchy. Everything thrown by the library derives from std::exception
// so the CLI can map failures onto exit codes without knowing the details.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CorruptionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

// Normalized probability vector over the label vocabulary for one token.
using TokenDistribution = std::vector<double>;

inline constexpr double kNormTolerance = 1e-6;

double log_sum_exp(std::span<const double> xs);

// Numerically stable softmax (max subtraction).
std::vector<double> softmax(std::span<const double> logits);
void softmax_inplace(std::span<double> logits);

// True if every entry is in [0, 1] and the entries sum to 1 within kNormTolerance.
bool is_normalized(std::span<const double> probs);

// Index of the largest entry; ties resolved to the lowest index.
std::size_t argmax(std::span<const double> xs);

double entropy(std::span<const double> probs);

}  // namespace csp
