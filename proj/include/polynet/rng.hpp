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

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace polynet {

// One master seed fans out into independent per-component streams so that
// e.g. adding an extra init draw never perturbs the shuffle order.

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Derives the seed for a named component stream (e.g. "init", "shuffle")
/// with an optional index for per-epoch / per-item substreams.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view component,
                                 std::uint64_t index = 0) {
  std::uint64_t h = detail::splitmix64(master ^ detail::fnv1a(component));
  return detail::splitmix64(h ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
}

/// Engine for a named component stream.
inline std::mt19937_64 make_rng(std::uint64_t master, std::string_view component,
                                std::uint64_t index = 0) {
  return std::mt19937_64(derive_seed(master, component, index));
}

}  // namespace polynet
