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

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "polynet/common.hpp"

namespace polynet {

enum class InitKind { ZeroMean, Xavier, KaimingNormal, KaimingUniform, Orthogonal };

/// Weight initialization scheme. ZeroMean draws N(0, D/M_n) where M_n is the
/// element count of the polynomial term the weight belongs to; the remaining
/// kinds follow their published formulas and exist for ablation sweeps.
struct InitSpec {
  InitKind kind = InitKind::ZeroMean;
  Real D = 16.0;  // ZeroMean variance numerator
};

inline InitKind parse_init_kind(const std::string& s) {
  if (s == "zero_mean") return InitKind::ZeroMean;
  if (s == "xavier") return InitKind::Xavier;
  if (s == "kaiming_normal") return InitKind::KaimingNormal;
  if (s == "kaiming_uniform") return InitKind::KaimingUniform;
  if (s == "orthogonal") return InitKind::Orthogonal;
  throw ValidationError("unknown init kind '" + s + "'");
}

inline std::string init_kind_name(InitKind k) {
  switch (k) {
    case InitKind::ZeroMean: return "zero_mean";
    case InitKind::Xavier: return "xavier";
    case InitKind::KaimingNormal: return "kaiming_normal";
    case InitKind::KaimingUniform: return "kaiming_uniform";
    case InitKind::Orthogonal: return "orthogonal";
  }
  return "?";
}

namespace detail {

inline void fan_in_out(const Shape& shape, std::int64_t& fan_in, std::int64_t& fan_out) {
  if (shape.size() == 1) {
    fan_in = fan_out = shape[0];
  } else if (shape.size() == 2) {
    fan_in = shape[0];  // stored [in, out], applied as x·W
    fan_out = shape[1];
  } else if (shape.size() == 4) {
    const std::int64_t rf = static_cast<std::int64_t>(shape[2]) * shape[3];
    fan_in = shape[1] * rf;
    fan_out = shape[0] * rf;
  } else {
    throw ValidationError("initializer: unsupported rank " + shape_str(shape));
  }
}

inline std::vector<Real> orthogonal_values(const Shape& shape, std::mt19937_64& rng) {
  const std::int64_t rows = shape[0];
  const std::int64_t cols = numel(shape) / rows;
  const std::int64_t n = std::min(rows, cols);
  const std::int64_t m = std::max(rows, cols);
  std::normal_distribution<Real> normal(0.0, 1.0);
  // n gaussians of length m, orthonormalized by modified Gram-Schmidt.
  std::vector<std::vector<Real>> q(static_cast<std::size_t>(n), std::vector<Real>(m));
  for (auto& row : q)
    for (auto& v : row) v = normal(rng);
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < i; ++j) {
      Real dot = 0.0;
      for (std::int64_t t = 0; t < m; ++t) dot += q[i][t] * q[j][t];
      for (std::int64_t t = 0; t < m; ++t) q[i][t] -= dot * q[j][t];
    }
    Real norm = 0.0;
    for (std::int64_t t = 0; t < m; ++t) norm += q[i][t] * q[i][t];
    norm = std::sqrt(norm);
    for (std::int64_t t = 0; t < m; ++t) q[i][t] /= norm;
  }
  std::vector<Real> out(static_cast<std::size_t>(rows * cols));
  if (rows <= cols) {
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t j = 0; j < cols; ++j) out[static_cast<std::size_t>(i * cols + j)] = q[i][j];
  } else {
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t j = 0; j < cols; ++j) out[static_cast<std::size_t>(i * cols + j)] = q[j][i];
  }
  return out;
}

}  // namespace detail

/// Draws initial values for a parameter of the given shape. `m_n` is the
/// total element count of the polynomial term the parameter belongs to
/// (ZeroMean only; ignored by the ablation kinds).
inline std::vector<Real> init_values(const Shape& shape, const InitSpec& spec, std::int64_t m_n,
                                     std::mt19937_64& rng) {
  const std::int64_t count = numel(shape);
  std::vector<Real> out(static_cast<std::size_t>(count));
  switch (spec.kind) {
    case InitKind::ZeroMean: {
      if (m_n <= 0) throw ValidationError("ZeroMean init: M_n must be positive");
      if (spec.D <= 0) throw ValidationError("ZeroMean init: D must be positive");
      const Real sigma = std::sqrt(spec.D / static_cast<Real>(m_n));
      std::normal_distribution<Real> normal(0.0, sigma);
      for (auto& v : out) v = normal(rng);
      return out;
    }
    case InitKind::Xavier: {
      std::int64_t fi, fo;
      detail::fan_in_out(shape, fi, fo);
      const Real bound = std::sqrt(6.0 / static_cast<Real>(fi + fo));
      std::uniform_real_distribution<Real> uni(-bound, bound);
      for (auto& v : out) v = uni(rng);
      return out;
    }
    case InitKind::KaimingNormal: {
      std::int64_t fi, fo;
      detail::fan_in_out(shape, fi, fo);
      std::normal_distribution<Real> normal(0.0, std::sqrt(2.0 / static_cast<Real>(fi)));
      for (auto& v : out) v = normal(rng);
      return out;
    }
    case InitKind::KaimingUniform: {
      std::int64_t fi, fo;
      detail::fan_in_out(shape, fi, fo);
      const Real bound = std::sqrt(6.0 / static_cast<Real>(fi));
      std::uniform_real_distribution<Real> uni(-bound, bound);
      for (auto& v : out) v = uni(rng);
      return out;
    }
    case InitKind::Orthogonal: {
      if (shape.size() < 2) {
        std::normal_distribution<Real> normal(0.0, 1.0);
        for (auto& v : out) v = normal(rng);
        return out;
      }
      return detail::orthogonal_values(shape, rng);
    }
  }
  throw ValidationError("initializer: unreachable kind");
}

}  // namespace polynet
