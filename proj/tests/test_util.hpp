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

// Shared helpers for the test suites: independent finite-difference
// gradients and random tensor construction. These stay deliberately apart
// from the library's own verification module so that they can check it.

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "polynet/tensor.hpp"

namespace testutil {

inline polynet::Tensor random_tensor(polynet::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                     double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(polynet::numel(shape)));
  for (auto& x : v) x = dist(rng);
  return polynet::Tensor(std::move(shape), std::move(v));
}

/// Random values that are exact multiples of 1/8: sums and products of such
/// values stay exactly representable, so independently ordered computations
/// must agree bit for bit.
inline polynet::Tensor random_dyadic_tensor(polynet::Shape shape, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dist(-8, 8);
  std::vector<double> v(static_cast<std::size_t>(polynet::numel(shape)));
  for (auto& x : v) x = dist(rng) / 8.0;
  return polynet::Tensor(std::move(shape), std::move(v));
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

/// Central finite differences of a scalar-valued rebuild-the-graph callable
/// with respect to one leaf tensor.
template <typename F>
std::vector<double> fd_gradient(F&& f, polynet::Tensor leaf, double h = 1e-5) {
  std::vector<double> g(static_cast<std::size_t>(leaf.size()));
  auto& vals = leaf.mutable_values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double orig = vals[i];
    double fp, fm;
    {
      polynet::NoGradGuard ng;
      vals[i] = orig + h;
      fp = f().item();
      vals[i] = orig - h;
      fm = f().item();
    }
    vals[i] = orig;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

/// Max relative error between autodiff and finite differences for one leaf.
template <typename F>
double max_grad_rel_err(F&& f, polynet::Tensor leaf, double h = 1e-5) {
  leaf.set_requires_grad(true);
  leaf.zero_grad();
  polynet::Tensor loss = f();
  polynet::backward(loss);
  const auto fd = fd_gradient(f, leaf, h);
  double worst = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i)
    worst = std::max(worst, rel_err(leaf.grad()[i], fd[i]));
  return worst;
}

}  // namespace testutil
