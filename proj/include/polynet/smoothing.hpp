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

#include "polynet/common.hpp"
#include "polynet/tensor.hpp"

namespace polynet {

/// Smoothed one-hot targets: row = (1-eps)·onehot + eps/K.
inline Tensor label_smooth(const std::vector<int>& labels, int k, Real eps) {
  if (k < 2) throw ValidationError("label_smooth: need at least 2 classes");
  if (eps < 0.0 || eps >= 1.0) throw ValidationError("label_smooth: eps must lie in [0, 1)");
  const int n = static_cast<int>(labels.size());
  std::vector<Real> rows(static_cast<std::size_t>(n) * k, eps / k);
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= k)
      throw ValidationError("label_smooth: label " + std::to_string(labels[i]) +
                            " outside [0, " + std::to_string(k) + ")");
    rows[static_cast<std::size_t>(i) * k + labels[i]] += 1.0 - eps;
  }
  return Tensor(Shape{n, k}, std::move(rows));
}

}  // namespace polynet
