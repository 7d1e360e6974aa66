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

// Little-endian encoding helpers shared by the binary formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include "csp/core.hpp"

namespace csp::detail {

template <typename UInt>
void put_le(unsigned char* dst, UInt v) {
  for (std::size_t i = 0; i < sizeof(UInt); ++i) dst[i] = static_cast<unsigned char>(v >> (8 * i));
}

template <typename UInt>
UInt get_le(const unsigned char* src) {
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(src[i]) << (8 * i);
  return v;
}

template <typename UInt>
void write_le(std::ostream& out, UInt v) {
  unsigned char buf[sizeof(UInt)];
  put_le(buf, v);
  out.write(reinterpret_cast<const char*>(buf), sizeof(UInt));
}

template <typename UInt>
UInt read_le(std::istream& in) {
  unsigned char buf[sizeof(UInt)];
  in.read(reinterpret_cast<char*>(buf), sizeof(UInt));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(UInt))) throw LoadError("unexpected end of file");
  return get_le<UInt>(buf);
}

inline void write_f64(std::ostream& out, double v) { write_le(out, std::bit_cast<std::uint64_t>(v)); }
inline double read_f64(std::istream& in) { return std::bit_cast<double>(read_le<std::uint64_t>(in)); }

}  // namespace csp::detail
