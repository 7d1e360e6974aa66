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

#include "csp/teacher_store.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <numeric>

#include "byte_io.hpp"

namespace csp::distill {

namespace {

constexpr char kStoreMagic[4] = {'T', 'S', 'T', 'R'};

void encode_header(const TeacherStoreHeader& h, bool valid, unsigned char* out) {
  std::memset(out, 0, TeacherStoreHeader::kSize);
  if (valid) std::memcpy(out, kStoreMagic, 4);
  detail::put_le<std::uint16_t>(out + 4, h.version);
  detail::put_le<std::uint32_t>(out + 8, h.vprime);
  detail::put_le<std::uint32_t>(out + 12, h.vocab_size);
  detail::put_le<std::uint64_t>(out + 16, h.token_count);
  detail::put_le<std::uint32_t>(out + 24, h.checksum);
}

std::uint32_t crc_update(std::uint32_t crc, const unsigned char* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(crc, data, static_cast<uInt>(n)));
}

}  // namespace

double TruncatedDistribution::mass() const {
  double s = 0.0;
  for (float p : probs) s += p;
  return s;
}

TruncatedDistribution truncate_topk(std::span<const double> dist, std::size_t vprime) {
  if (vprime < 1 || vprime > dist.size()) throw ArgumentError("V' must be in [1, V]");
  std::vector<std::uint32_t> order(dist.size());
  std::iota(order.begin(), order.end(), 0u);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(vprime), order.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      return dist[a] > dist[b] || (dist[a] == dist[b] && a < b);
                    });
  TruncatedDistribution out;
  out.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(vprime));
  for (auto i : out.indices) out.probs.push_back(static_cast<float>(dist[i]));
  return out;
}

// ---- Writer ------------------------------------------------------------------------

TeacherStoreWriter::TeacherStoreWriter(const std::string& path, std::uint32_t vprime,
                                       std::uint32_t vocab_size)
    : path_(path), crc_(crc_update(0, nullptr, 0)) {
  if (vprime < 1 || vprime > vocab_size) throw ArgumentError("V' must be in [1, V]");
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw std::runtime_error("cannot open '" + path + "' for writing");
  header_.vprime = vprime;
  header_.vocab_size = vocab_size;
  unsigned char raw[TeacherStoreHeader::kSize];
  encode_header(header_, /*valid=*/false, raw);
  out_.write(reinterpret_cast<const char*>(raw), sizeof raw);
  buf_.resize(header_.record_bytes());
}

TeacherStoreWriter::~TeacherStoreWriter() = default;

void TeacherStoreWriter::append(const TruncatedDistribution& rec) {
  if (finished_) throw std::logic_error("append after finish");
  if (rec.indices.size() != header_.vprime || rec.probs.size() != header_.vprime)
    throw ArgumentError("record size does not match V'");
  unsigned char* p = buf_.data();
  for (auto idx : rec.indices) {
    if (idx >= header_.vocab_size) throw ArgumentError("record index out of range");
    detail::put_le<std::uint32_t>(p, idx);
    p += 4;
  }
  for (float prob : rec.probs) {
    detail::put_le<std::uint32_t>(p, std::bit_cast<std::uint32_t>(prob));
    p += 4;
  }
  crc_ = crc_update(crc_, buf_.data(), buf_.size());
  out_.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
  if (!out_) throw std::runtime_error("write failed for '" + path_ + "'");
  ++header_.token_count;
}

TeacherStoreHeader TeacherStoreWriter::finish() {
  if (finished_) return header_;
  header_.checksum = crc_;
  out_.flush();
  unsigned char raw[TeacherStoreHeader::kSize];
  encode_header(header_, /*valid=*/true, raw);
  out_.seekp(0);
  out_.write(reinterpret_cast<const char*>(raw), sizeof raw);
  out_.flush();
  if (!out_) throw std::runtime_error("write failed for '" + path_ + "'");
  out_.close();
  finished_ = true;
  return header_;
}

// ---- Reader ------------------------------------------------------------------------

namespace {

TeacherStoreHeader parse_header(std::istream& in, const std::string& path) {
  unsigned char raw[TeacherStoreHeader::kSize];
  in.read(reinterpret_cast<char*>(raw), sizeof raw);
  if (in.gcount() != static_cast<std::streamsize>(sizeof raw))
    throw CorruptionError(path + ": truncated header");
  if (std::memcmp(raw, kStoreMagic, 4) != 0)
    throw CorruptionError(path + ": missing TSTR magic (incomplete or foreign file)");
  TeacherStoreHeader h;
  h.version = detail::get_le<std::uint16_t>(raw + 4);
  h.vprime = detail::get_le<std::uint32_t>(raw + 8);
  h.vocab_size = detail::get_le<std::uint32_t>(raw + 12);
  h.token_count = detail::get_le<std::uint64_t>(raw + 16);
  h.checksum = detail::get_le<std::uint32_t>(raw + 24);
  if (h.version != TeacherStoreHeader::kVersion) throw CorruptionError(path + ": unsupported version");
  if (h.vprime < 1 || h.vprime > h.vocab_size) throw CorruptionError(path + ": invalid V'");
  return h;
}

}  // namespace

TeacherStoreHeader read_store_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open '" + path + "'");
  return parse_header(in, path);
}

TeacherStoreReader::TeacherStoreReader(const std::string& path)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw LoadError("cannot open '" + path + "'");
  header_ = parse_header(in_, path);

  in_.seekg(0, std::ios::end);
  const auto size = static_cast<std::uint64_t>(in_.tellg());
  if (size != header_.file_bytes())
    throw CorruptionError(path + ": file size " + std::to_string(size) + " does not match header (" +
                          std::to_string(header_.file_bytes()) + ")");

  in_.seekg(TeacherStoreHeader::kSize);
  std::uint32_t crc = crc_update(0, nullptr, 0);
  std::vector<unsigned char> chunk(1 << 16);
  std::uint64_t remaining = header_.payload_bytes();
  while (remaining > 0) {
    const auto n = static_cast<std::size_t>(std::min<std::uint64_t>(remaining, chunk.size()));
    in_.read(reinterpret_cast<char*>(chunk.data()), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) throw CorruptionError(path + ": truncated payload");
    crc = crc_update(crc, chunk.data(), n);
    remaining -= n;
  }
  if (crc != header_.checksum) throw CorruptionError(path + ": checksum mismatch");
  buf_.resize(header_.record_bytes());
  reset();
}

void TeacherStoreReader::reset() {
  in_.clear();
  in_.seekg(TeacherStoreHeader::kSize);
  read_ = 0;
}

std::optional<TruncatedDistribution> TeacherStoreReader::next() {
  if (read_ >= header_.token_count) return std::nullopt;
  in_.read(reinterpret_cast<char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
  if (in_.gcount() != static_cast<std::streamsize>(buf_.size()))
    throw CorruptionError(path_ + ": truncated record");
  TruncatedDistribution rec;
  const std::size_t vp = header_.vprime;
  rec.indices.resize(vp);
  rec.probs.resize(vp);
  for (std::size_t i = 0; i < vp; ++i) {
    rec.indices[i] = detail::get_le<std::uint32_t>(buf_.data() + 4 * i);
    rec.probs[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(buf_.data() + 4 * (vp + i)));
  }
  ++read_;
  return rec;
}

std::vector<TruncatedDistribution> read_all_records(const std::string& path) {
  TeacherStoreReader reader(path);
  std::vector<TruncatedDistribution> out;
  out.reserve(static_cast<std::size_t>(reader.header().token_count));
  while (auto rec = reader.next()) out.push_back(std::move(*rec));
  return out;
}

}  // namespace csp::distill
