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

#include <vector>

#include "polynet/blocks.hpp"
#include "polynet/common.hpp"

namespace polynet {

/// Exact total polynomial degree of each block output in the raw network
/// input, with normalization maps treated as degree-preserving.
struct DegreeReport {
  std::vector<long long> per_block;
  long long total = 0;
};

/// Symbolic degree recurrence. A Hadamard step of a block whose input has
/// degree d lifts the state degree s to s + d + Σ dense-input degrees;
/// sequential blocks compose. Plain NCP chains with steps=1 give 2^#blocks.
inline DegreeReport symbolic_degree_of_blocks(const std::vector<PolyBlockSpec>& blocks,
                                              bool relu_hybrid = false) {
  if (relu_hybrid)
    throw ValidationError("polynomial degree is undefined for the relu hybrid toggle");
  DegreeReport report;
  std::vector<long long> out_degree;
  long long prev = 1;  // raw input
  for (const PolyBlockSpec& b : blocks) {
    long long dense_sum = 0;
    for (int t : b.dense_inputs) dense_sum += out_degree.at(static_cast<std::size_t>(t));
    long long s;
    if (b.variant == PolyVariant::NCP) {
      s = prev;
      for (int step = 0; step < b.steps; ++step) s += prev + dense_sum;
    } else {
      s = prev;  // x_1 = H_1ᵀ z keeps the input degree
      for (int step = 1; step < b.steps; ++step) s += prev + dense_sum;
    }
    out_degree.push_back(s);
    report.per_block.push_back(s);
    prev = s;
  }
  report.total = report.per_block.empty() ? 0 : report.per_block.back();
  return report;
}

}  // namespace polynet
