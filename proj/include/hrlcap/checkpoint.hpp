/*
 * Copyright 2026 The hrlcap Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef HRLCAP_CHECKPOINT_HPP_
#define HRLCAP_CHECKPOINT_HPP_

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "hrlcap/common.hpp"
#include "hrlcap/tensor.hpp"

namespace hrlcap {

// Checkpoint container: a self-describing map {name -> shape + row-major
// doubles}. All integers little-endian fixed width; doubles as raw IEEE-754
// bytes, so a write/read round trip is bit-exact.
//
//   "HRLC" | u32 version | u64 entry count
//   per entry: u32 name length | name bytes | u32 rank | u64 extents... | doubles
inline constexpr char kCheckpointMagic[4] = {'H', 'R', 'L', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_le(std::ostream& os, T value) {
  unsigned char buf[sizeof(T)];
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(u >> (8 * i));
  write_bytes(os, buf, sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  check(static_cast<bool>(is), "checkpoint: truncated file");
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(buf[i]) << (8 * i);
  return static_cast<T>(u);
}

inline void write_f64(std::ostream& os, double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, sizeof(bits));
  write_le<std::uint64_t>(os, bits);
}

inline double read_f64(std::istream& is) {
  std::uint64_t bits = read_le<std::uint64_t>(is);
  double x;
  std::memcpy(&x, &bits, sizeof(x));
  return x;
}

}  // namespace detail

inline void save_tensor_map(const std::string& path, const std::map<std::string, Tensor>& m) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  check(os.good(), "checkpoint: cannot open ", path, " for writing");
  detail::write_bytes(os, kCheckpointMagic, 4);
  detail::write_le<std::uint32_t>(os, kCheckpointVersion);
  detail::write_le<std::uint64_t>(os, m.size());
  for (const auto& [name, t] : m) {
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    detail::write_bytes(os, name.data(), name.size());
    detail::write_le<std::uint32_t>(os, 2);
    detail::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(t.rows));
    detail::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(t.cols));
    for (double x : t.v) detail::write_f64(os, x);
  }
  os.flush();
  check(os.good(), "checkpoint: write to ", path, " failed");
}

inline std::map<std::string, Tensor> load_tensor_map(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "checkpoint: cannot open ", path);
  char magic[4];
  is.read(magic, 4);
  check(is.good() && std::memcmp(magic, kCheckpointMagic, 4) == 0,
        "checkpoint: bad magic in ", path);
  std::uint32_t version = detail::read_le<std::uint32_t>(is);
  check(version == kCheckpointVersion, "checkpoint: unsupported version ", version, " in ", path);
  std::uint64_t count = detail::read_le<std::uint64_t>(is);
  std::map<std::string, Tensor> m;
  for (std::uint64_t e = 0; e < count; ++e) {
    std::uint32_t name_len = detail::read_le<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    check(static_cast<bool>(is), "checkpoint: truncated name in ", path);
    std::uint32_t rank = detail::read_le<std::uint32_t>(is);
    check(rank == 2, "checkpoint: entry ", name, " has unsupported rank ", rank);
    auto rows = detail::read_le<std::uint64_t>(is);
    auto cols = detail::read_le<std::uint64_t>(is);
    Tensor t(static_cast<int>(rows), static_cast<int>(cols));
    for (double& x : t.v) x = detail::read_f64(is);
    m.emplace(std::move(name), std::move(t));
  }
  return m;
}

}  // namespace hrlcap

#endif  // HRLCAP_CHECKPOINT_HPP_
