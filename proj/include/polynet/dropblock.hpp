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

#include <random>
#include <vector>

#include "polynet/common.hpp"
#include "polynet/ops.hpp"
#include "polynet/tensor.hpp"

namespace polynet {

/// Structured dropout: zeroes contiguous block_size×block_size squares of
/// each feature map during training and rescales the survivors so the
/// expected activation mass is preserved. Identity at inference.
///
/// Seed positions are drawn Bernoulli(gamma) over the (H-bs+1)(W-bs+1)
/// region where a block fits entirely, with
///   gamma = (1-keep_prob)/bs^2 · H·W / ((H-bs+1)(W-bs+1)).
inline Tensor dropblock(const Tensor& x, int block_size, Real keep_prob, bool training,
                        std::mt19937_64& rng) {
  if (x.ndim() != 4)
    throw DimensionError("dropblock expects [N,C,H,W], got " + shape_str(x.shape()));
  if (keep_prob <= 0.0 || keep_prob > 1.0)
    throw ValidationError("dropblock: keep_prob must lie in (0, 1]");
  const int h = x.dim(2), w = x.dim(3);
  if (block_size < 1 || block_size > std::min(h, w))
    throw ValidationError("dropblock: block_size " + std::to_string(block_size) +
                          " exceeds feature map " + shape_str(x.shape()));
  if (!training || keep_prob == 1.0) return x;

  const int n = x.dim(0), c = x.dim(1);
  const int vh = h - block_size + 1, vw = w - block_size + 1;
  const Real gamma = (1.0 - keep_prob) / (static_cast<Real>(block_size) * block_size) *
                     (static_cast<Real>(h) * w) / (static_cast<Real>(vh) * vw);
  std::uniform_real_distribution<Real> uni(0.0, 1.0);

  Tensor mask(x.shape(), 1.0);
  auto& mv = mask.mutable_values();
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      Real* plane = mv.data() + (static_cast<std::size_t>(i) * c + ch) * h * w;
      for (int sy = 0; sy < vh; ++sy)
        for (int sx = 0; sx < vw; ++sx) {
          if (uni(rng) >= gamma) continue;
          for (int dy = 0; dy < block_size; ++dy)
            for (int dx = 0; dx < block_size; ++dx)
              plane[static_cast<std::size_t>(sy + dy) * w + (sx + dx)] = 0.0;
        }
      std::int64_t kept = 0;
      for (int p = 0; p < h * w; ++p) kept += plane[p] > 0 ? 1 : 0;
      if (kept == 0) continue;  // fully dropped map stays zero
      const Real rescale = static_cast<Real>(h) * w / static_cast<Real>(kept);
      for (int p = 0; p < h * w; ++p) plane[p] *= rescale;
    }
  return hadamard(x, mask);
}

}  // namespace polynet
