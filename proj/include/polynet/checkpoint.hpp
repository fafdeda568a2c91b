// Copyright (c) 2026 The polynet authors.
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

// Self-describing binary checkpoint container (little-endian):
//   magic "POLYCKPT", u32 version, u64 entry count, then per entry:
//   u8 kind (0 parameter, 1 buffer), u32 name length, name bytes,
//   u32 rank, u32 extents[rank], f64 values[product(extents)].

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "polynet/common.hpp"
#include "polynet/network.hpp"

namespace polynet {

struct CheckpointEntry {
  std::uint8_t kind = 0;  // 0 parameter, 1 buffer
  Shape shape;
  std::vector<Real> values;
};

using Checkpoint = std::map<std::string, CheckpointEntry>;

namespace detail {

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw FormatError(path + ": truncated checkpoint");
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, Network& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out.write("POLYCKPT", 8);
  detail::write_pod<std::uint32_t>(out, 1);
  const auto buffers = net.buffers();
  detail::write_pod<std::uint64_t>(out, net.params().size() + buffers.size());
  auto write_entry = [&](const std::string& name, std::uint8_t kind, const Shape& shape,
                         const std::vector<Real>& values) {
    detail::write_pod<std::uint8_t>(out, kind);
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
    for (int e : shape) detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(e));
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(Real)));
  };
  for (const auto& p : net.params()) write_entry(p.name, 0, p.tensor.shape(), p.tensor.values());
  for (const auto& [name, vec] : buffers)
    write_entry(name, 1, Shape{static_cast<int>(vec->size())}, *vec);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::string(magic, 8) != "POLYCKPT")
    throw FormatError(path + ": bad checkpoint magic");
  const auto version = detail::read_pod<std::uint32_t>(in, path);
  if (version != 1) throw FormatError(path + ": unsupported checkpoint version");
  const auto count = detail::read_pod<std::uint64_t>(in, path);
  Checkpoint ckpt;
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointEntry entry;
    entry.kind = detail::read_pod<std::uint8_t>(in, path);
    const auto name_len = detail::read_pod<std::uint32_t>(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw FormatError(path + ": truncated checkpoint");
    const auto rank = detail::read_pod<std::uint32_t>(in, path);
    entry.shape.resize(rank);
    for (auto& e : entry.shape) e = static_cast<int>(detail::read_pod<std::uint32_t>(in, path));
    entry.values.resize(static_cast<std::size_t>(numel(entry.shape)));
    if (!in.read(reinterpret_cast<char*>(entry.values.data()),
                 static_cast<std::streamsize>(entry.values.size() * sizeof(Real))))
      throw FormatError(path + ": truncated checkpoint");
    ckpt.emplace(std::move(name), std::move(entry));
  }
  return ckpt;
}

/// Copies checkpoint values into a built network (parameters and buffers
/// matched by name; shapes must agree).
inline void apply_checkpoint(Network& net, const Checkpoint& ckpt) {
  for (auto& p : net.params()) {
    auto it = ckpt.find(p.name);
    if (it == ckpt.end()) throw ValidationError("checkpoint misses parameter " + p.name);
    if (it->second.shape != p.tensor.shape())
      throw ValidationError("checkpoint shape mismatch for " + p.name + ": " +
                            shape_str(it->second.shape) + " vs " + shape_str(p.tensor.shape()));
    p.tensor.mutable_values() = it->second.values;
  }
  for (auto& [name, vec] : net.buffers()) {
    auto it = ckpt.find(name);
    if (it == ckpt.end()) continue;  // older checkpoints may lack buffers
    if (it->second.values.size() == vec->size()) *vec = it->second.values;
  }
}

}  // namespace polynet
