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
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "csp/core.hpp"

namespace csp::distill {

// Top-V' slice of a teacher distribution: label ids with their probabilities,
// probability-descending. Probabilities are kept as stored (float32) and are
// not renormalized.
struct TruncatedDistribution {
  std::vector<std::uint32_t> indices;
  std::vector<float> probs;

  std::size_t size() const { return indices.size(); }
  double mass() const;
  bool operator==(const TruncatedDistribution&) const = default;
};

// Keeps the `vprime` most probable labels, ties going to the lower index.
TruncatedDistribution truncate_topk(std::span<const double> dist, std::size_t vprime);

// On-disk layout (all little-endian), 32 bytes:
//   0  magic "TSTR"
//   4  u16 version (1)
//   6  u16 reserved
//   8  u32 V'
//  12  u32 V
//  16  u64 T (records)
//  24  u32 CRC-32 of the payload
//  28  4 pad bytes
// followed by T records of V' u32 indices then V' f32 probabilities.
struct TeacherStoreHeader {
  static constexpr std::size_t kSize = 32;
  static constexpr std::uint16_t kVersion = 1;

  std::uint16_t version = kVersion;
  std::uint32_t vprime = 0;
  std::uint32_t vocab_size = 0;
  std::uint64_t token_count = 0;
  std::uint32_t checksum = 0;

  std::size_t record_bytes() const { return static_cast<std::size_t>(vprime) * 8; }
  std::uint64_t payload_bytes() const { return token_count * record_bytes(); }
  std::uint64_t file_bytes() const { return kSize + payload_bytes(); }
  bool operator==(const TeacherStoreHeader&) const = default;
};

// Append-only writer. The header is written with a zeroed magic first and only
// filled in by finish(), so an interrupted write never looks valid.
class TeacherStoreWriter {
 public:
  TeacherStoreWriter(const std::string& path, std::uint32_t vprime, std::uint32_t vocab_size);
  ~TeacherStoreWriter();
  TeacherStoreWriter(const TeacherStoreWriter&) = delete;
  TeacherStoreWriter& operator=(const TeacherStoreWriter&) = delete;

  void append(const TruncatedDistribution& rec);
  TeacherStoreHeader finish();

 private:
  std::string path_;
  std::ofstream out_;
  TeacherStoreHeader header_;
  std::uint32_t crc_;
  std::vector<unsigned char> buf_;
  bool finished_ = false;
};

// Reads the header, verifies the payload checksum (one streaming pass), then
// yields records in write order with O(V') memory.
class TeacherStoreReader {
 public:
  explicit TeacherStoreReader(const std::string& path);

  const TeacherStoreHeader& header() const { return header_; }
  std::optional<TruncatedDistribution> next();
  // Rewinds to the first record.
  void reset();

 private:
  std::string path_;
  std::ifstream in_;
  TeacherStoreHeader header_;
  std::uint64_t read_ = 0;
  std::vector<unsigned char> buf_;
};

TeacherStoreHeader read_store_header(const std::string& path);
// Convenience: all records in order.
std::vector<TruncatedDistribution> read_all_records(const std::string& path);

}  // namespace csp::distill
