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

// Independent verification oracles. Everything here exploits the exact
// polynomial structure of the networks: finite-difference gradient checks,
// degree annihilation along random lines, full monomial expansion of tiny
// instances, and an independent re-implementation of the plain recursion.

#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "polynet/common.hpp"
#include "polynet/network.hpp"
#include "polynet/ops.hpp"
#include "polynet/rng.hpp"
#include "polynet/tensor.hpp"

namespace polynet {

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

struct GradCheckReport {
  Real max_rel_err = 0.0;
  std::string worst_param;
  std::int64_t checked_coords = 0;
  Real tolerance = 0.0;
  bool pass = false;
};

/// Central-difference check of every parameter (coordinates subsampled with
/// an even stride for large tensors) against the autodiff gradients of a
/// scalar-valued, rebuild-the-graph callable. Relative errors use the
/// max(|a|,|b|,1e-8) denominator.
inline GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                                  std::vector<Parameter>& params, Real step = 1e-5,
                                  Real tolerance = 1e-5, int max_coords_per_param = 25) {
  GradCheckReport report;
  report.tolerance = tolerance;

  for (auto& p : params) p.tensor.zero_grad();
  backward(loss_fn());
  std::vector<std::vector<Real>> autodiff;
  autodiff.reserve(params.size());
  for (auto& p : params)
    autodiff.push_back(p.tensor.has_grad() ? p.tensor.grad()
                                           : std::vector<Real>(p.tensor.size(), 0.0));

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& values = params[pi].tensor.mutable_values();
    const std::int64_t n = static_cast<std::int64_t>(values.size());
    const std::int64_t stride =
        n <= max_coords_per_param ? 1 : (n + max_coords_per_param - 1) / max_coords_per_param;
    for (std::int64_t i = 0; i < n; i += stride) {
      const Real orig = values[static_cast<std::size_t>(i)];
      Real fp, fm;
      {
        NoGradGuard ng;
        values[static_cast<std::size_t>(i)] = orig + step;
        fp = loss_fn().item();
        values[static_cast<std::size_t>(i)] = orig - step;
        fm = loss_fn().item();
      }
      values[static_cast<std::size_t>(i)] = orig;
      const Real fd = (fp - fm) / (2 * step);
      const Real ad = autodiff[pi][static_cast<std::size_t>(i)];
      const Real err = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-8});
      ++report.checked_coords;
      if (err > report.max_rel_err) {
        report.max_rel_err = err;
        report.worst_param = params[pi].name;
      }
    }
  }
  report.pass = report.max_rel_err < tolerance;
  return report;
}

// ---------------------------------------------------------------------------
// Degree annihilation
// ---------------------------------------------------------------------------

struct DegreeTestReport {
  long long claimed_degree = 0;
  Real annihilation_residual = 0.0;  // worst |Δ^{d+1} f| / max|f| over trials
  Real witness_residual = 0.0;       // best |Δ^d f| / max|f| over trials
  int trials = 0;
  bool pass = false;  // annihilation < tol and witness > tol
};

namespace detail {

/// Evaluates the network at a batch of flat input points (FrozenAffine so
/// every normalization is a fixed affine map) and contracts the output with
/// u. Returns one value per point.
inline std::vector<Real> line_samples(Network& net, const std::vector<Real>& z0,
                                      const std::vector<Real>& v, const std::vector<Real>& u,
                                      const std::vector<Real>& ts) {
  const NetworkSpec& spec = net.spec();
  const int pts = static_cast<int>(ts.size());
  Shape in_shape;
  std::int64_t flat = 0;
  if (spec.mode == NetMode::DenseMlp) {
    flat = spec.input_dim;
    in_shape = Shape{pts, spec.input_dim};
  } else {
    flat = static_cast<std::int64_t>(spec.input_channels) * spec.input_size * spec.input_size;
    in_shape = Shape{pts, spec.input_channels, spec.input_size, spec.input_size};
  }
  std::vector<Real> data(static_cast<std::size_t>(pts) * flat);
  for (int p = 0; p < pts; ++p)
    for (std::int64_t i = 0; i < flat; ++i)
      data[static_cast<std::size_t>(p) * flat + i] =
          z0[static_cast<std::size_t>(i)] + ts[static_cast<std::size_t>(p)] * v[static_cast<std::size_t>(i)];
  NoGradGuard ng;
  Tensor logits = net.forward(Tensor(std::move(in_shape), std::move(data)), NormMode::FrozenAffine);
  const int k = logits.dim(1);
  std::vector<Real> f(static_cast<std::size_t>(pts), 0.0);
  for (int p = 0; p < pts; ++p)
    for (int j = 0; j < k; ++j)
      f[static_cast<std::size_t>(p)] += u[static_cast<std::size_t>(j)] *
                                        logits[static_cast<std::int64_t>(p) * k + j];
  return f;
}

inline std::vector<Real> forward_differences(std::vector<Real> f, int order) {
  for (int o = 0; o < order; ++o) {
    for (std::size_t i = 0; i + 1 < f.size(); ++i) f[i] = f[i + 1] - f[i];
    f.pop_back();
  }
  return f;
}

}  // namespace detail

/// Samples f(t) = <u, net(z0 + t v)> at d+2 equispaced points and forms the
/// order-(d+1) forward difference, which vanishes exactly for a polynomial
/// of degree <= d, and the order-d difference, which witnesses exact degree
/// d. The t-spacing auto-shrinks until |f| stays below 1e12.
inline DegreeTestReport degree_annihilation(Network& net, long long claimed_degree, int trials,
                                            Real tol, std::mt19937_64& rng) {
  if (net.spec().relu_hybrid)
    throw ValidationError("degree oracle rejects the non-polynomial relu hybrid");
  const NetworkSpec& spec = net.spec();
  const std::int64_t flat =
      spec.mode == NetMode::DenseMlp
          ? spec.input_dim
          : static_cast<std::int64_t>(spec.input_channels) * spec.input_size * spec.input_size;
  std::uniform_real_distribution<Real> uni(-1.0, 1.0);
  DegreeTestReport report;
  report.claimed_degree = claimed_degree;
  report.trials = trials;

  const int d = static_cast<int>(claimed_degree);
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<Real> z0(static_cast<std::size_t>(flat)), v(static_cast<std::size_t>(flat));
    for (auto& x : z0) x = uni(rng);
    for (auto& x : v) x = uni(rng);
    std::vector<Real> u(static_cast<std::size_t>(spec.classes));
    for (auto& x : u) x = uni(rng);

    Real h = 1.0;
    std::vector<Real> f;
    bool ok = false;
    for (int attempt = 0; attempt < 80; ++attempt) {
      std::vector<Real> ts(static_cast<std::size_t>(d) + 2);
      for (int i = 0; i < d + 2; ++i) ts[static_cast<std::size_t>(i)] = h * i;
      try {
        f = detail::line_samples(net, z0, v, u, ts);
      } catch (const NumericError&) {
        h *= 0.25;
        continue;
      }
      Real fmax = 0.0;
      for (Real x : f) fmax = std::max(fmax, std::abs(x));
      if (fmax > 1e12) {
        h *= 0.25;
        continue;
      }
      ok = true;
      break;
    }
    if (!ok)
      throw NumericError("degree annihilation: no stable sampling range found (degree " +
                         std::to_string(claimed_degree) + ")");
    Real fmax = 0.0;
    for (Real x : f) fmax = std::max(fmax, std::abs(x));
    if (fmax == 0.0) fmax = 1.0;
    const Real ann = std::abs(detail::forward_differences(f, d + 1)[0]) / fmax;
    const Real wit =
        std::abs(detail::forward_differences(std::vector<Real>(f.begin(), f.end() - 1), d)[0]) /
        fmax;
    report.annihilation_residual = std::max(report.annihilation_residual, ann);
    report.witness_residual = std::max(report.witness_residual, wit);
  }
  report.pass = report.annihilation_residual < tol && report.witness_residual > tol;
  return report;
}

// ---------------------------------------------------------------------------
// Monomial expansion of tiny instances
// ---------------------------------------------------------------------------

using MultiIndex = std::vector<int>;
using Poly = std::map<MultiIndex, Real>;

struct MonomialExpansion {
  int input_dim = 0;
  std::vector<Poly> outputs;  // one coefficient map per output feature
  bool used_symbolic_path = false;

  long long max_total_degree(Real rel_threshold = 1e-8) const {
    Real maxc = 0.0;
    for (const Poly& p : outputs)
      for (const auto& [idx, c] : p) maxc = std::max(maxc, std::abs(c));
    long long deg = 0;
    for (const Poly& p : outputs)
      for (const auto& [idx, c] : p) {
        if (std::abs(c) <= rel_threshold * maxc) continue;
        long long total = 0;
        for (int e : idx) total += e;
        deg = std::max(deg, total);
      }
    return deg;
  }

  Real eval_feature(std::size_t j, const std::vector<Real>& point) const {
    Real acc = 0.0;
    for (const auto& [idx, c] : outputs[j]) {
      Real term = c;
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (int e = 0; e < idx[static_cast<std::size_t>(i)]; ++e) term *= point[i];
      acc += term;
    }
    return acc;
  }
};

namespace detail {

inline void poly_add_inplace(Poly& a, const Poly& b, Real s = 1.0) {
  for (const auto& [idx, c] : b) a[idx] += s * c;
}

inline Poly poly_scale(const Poly& a, Real s) {
  Poly out;
  for (const auto& [idx, c] : a) out[idx] = s * c;
  return out;
}

inline Poly poly_mul(const Poly& a, const Poly& b) {
  Poly out;
  for (const auto& [ia, ca] : a)
    for (const auto& [ib, cb] : b) {
      MultiIndex idx(ia.size());
      for (std::size_t i = 0; i < ia.size(); ++i) idx[i] = ia[i] + ib[i];
      out[idx] += ca * cb;
    }
  return out;
}

inline Poly poly_const(Real c, int dim) {
  Poly p;
  p[MultiIndex(static_cast<std::size_t>(dim), 0)] = c;
  return p;
}

/// y_j = Σ_i w[i,j] x_i  for w stored [in, out].
inline std::vector<Poly> poly_matrix(const std::vector<Poly>& x, const Tensor& w) {
  const int in = w.dim(0), out = w.dim(1);
  std::vector<Poly> y(static_cast<std::size_t>(out));
  for (int i = 0; i < in; ++i)
    for (int j = 0; j < out; ++j)
      poly_add_inplace(y[static_cast<std::size_t>(j)], x[static_cast<std::size_t>(i)],
                       w.values()[static_cast<std::size_t>(i) * out + j]);
  return y;
}

inline void break_affine(std::vector<Poly>& y, NormLayer& layer, int dim) {
  if (!layer.has_affine()) return;
  for (std::size_t j = 0; j < y.size(); ++j) {
    y[j] = poly_scale(y[j], layer.gamma().values()[j]);
    poly_add_inplace(y[j], poly_const(layer.beta().values()[j], dim));
  }
}

/// Frozen-affine semantics of a normalization layer on a polynomial vector.
inline std::vector<Poly> poly_norm(const std::vector<Poly>& x, NormLayer& layer, int dim) {
  switch (layer.kind().kind) {
    case NormKindTag::Identity:
      return x;
    case NormKindTag::MeanSubtract: {
      Poly mean;
      for (const Poly& p : x) poly_add_inplace(mean, p, 1.0 / static_cast<Real>(x.size()));
      std::vector<Poly> y = x;
      for (Poly& p : y) poly_add_inplace(p, mean, -1.0);
      return y;
    }
    case NormKindTag::BatchNorm:
    case NormKindTag::InstanceNorm:
    case NormKindTag::IBN: {
      std::vector<Poly> y(x.size());
      for (std::size_t j = 0; j < x.size(); ++j) {
        const Real inv = 1.0 / std::sqrt(layer.running_var()[j] + layer.kind().eps);
        y[j] = poly_scale(x[j], inv);
        poly_add_inplace(y[j], poly_const(-layer.running_mean()[j] * inv, dim));
      }
      break_affine(y, layer, dim);
      return y;
    }
    case NormKindTag::IterNorm: {
      const int c = layer.channels();
      std::vector<Poly> centered(x.size());
      for (std::size_t j = 0; j < x.size(); ++j) {
        centered[j] = x[j];
        poly_add_inplace(centered[j], poly_const(-layer.running_mean()[j], dim));
      }
      std::vector<Poly> y(static_cast<std::size_t>(c));
      for (int i = 0; i < c; ++i)
        for (int j = 0; j < c; ++j)
          poly_add_inplace(y[static_cast<std::size_t>(j)], centered[static_cast<std::size_t>(i)],
                           layer.running_whiten()[static_cast<std::size_t>(i) * c + j]);
      break_affine(y, layer, dim);
      return y;
    }
  }
  throw ValidationError("poly_norm: unreachable kind");
}

/// Straight-line symbolic mirror of the block recursions over coefficient
/// maps; intentionally separate from the tensor forward path.
inline std::vector<Poly> poly_block(const std::vector<Poly>& z, PolyBlockParams& p,
                                    const PolyBlockSpec& spec,
                                    const std::vector<std::vector<Poly>>& prev, int dim) {
  std::vector<Poly> x = z;
  if (spec.variant == PolyVariant::NCP) {
    for (int s = 0; s < spec.steps; ++s) {
      std::vector<Poly> a = poly_norm(poly_matrix(z, p.h[static_cast<std::size_t>(s)]), p.phi_norm, dim);
      std::vector<Poly> b = poly_norm(poly_matrix(x, p.j[static_cast<std::size_t>(s)]), p.psi_norm, dim);
      if (spec.use_bias_branch)
        for (std::size_t j = 0; j < b.size(); ++j)
          poly_add_inplace(b[j], poly_const(p.bias[static_cast<std::size_t>(s)].values()[j], dim));
      std::vector<Poly> prod(a.size());
      for (std::size_t j = 0; j < a.size(); ++j) prod[j] = poly_mul(a[j], b[j]);
      for (std::size_t t = 0; t < spec.dense_inputs.size(); ++t) {
        std::vector<Poly> d = prev.at(static_cast<std::size_t>(spec.dense_inputs[t]));
        if (p.dense_proj[t].defined()) d = poly_matrix(d, p.dense_proj[t]);
        const Real rho = p.rho[t].values()[0];
        for (std::size_t j = 0; j < prod.size(); ++j)
          prod[j] = poly_mul(prod[j], poly_scale(d[j], rho));
      }
      if (spec.use_skip) {
        std::vector<Poly> skip =
            s == 0 ? (p.skip_proj.defined() ? poly_matrix(z, p.skip_proj) : z) : x;
        for (std::size_t j = 0; j < prod.size(); ++j) poly_add_inplace(prod[j], skip[j]);
      }
      x = std::move(prod);
    }
    return x;
  }
  x = poly_matrix(z, p.h[0]);
  for (int n = 1; n < spec.steps; ++n) {
    std::vector<Poly> a = poly_norm(poly_matrix(z, p.h[static_cast<std::size_t>(n)]), p.phi_norm, dim);
    std::vector<Poly> prod(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) prod[j] = poly_mul(a[j], x[j]);
    for (std::size_t t = 0; t < spec.dense_inputs.size(); ++t) {
      std::vector<Poly> d = prev.at(static_cast<std::size_t>(spec.dense_inputs[t]));
      if (p.dense_proj[t].defined()) d = poly_matrix(d, p.dense_proj[t]);
      const Real rho = p.rho[t].values()[0];
      for (std::size_t j = 0; j < prod.size(); ++j)
        prod[j] = poly_mul(prod[j], poly_scale(d[j], rho));
    }
    if (spec.use_skip)
      for (std::size_t j = 0; j < prod.size(); ++j) poly_add_inplace(prod[j], x[j]);
    x = std::move(prod);
  }
  return x;
}

inline std::vector<Poly> symbolic_expand(Network& net, int upto_blocks, bool with_head) {
  const NetworkSpec& spec = net.spec();
  const int dim = spec.input_dim;
  std::vector<Poly> x(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; ++i) {
    MultiIndex idx(static_cast<std::size_t>(dim), 0);
    idx[static_cast<std::size_t>(i)] = 1;
    x[static_cast<std::size_t>(i)][idx] = 1.0;
  }
  std::vector<std::vector<Poly>> raw;
  const int stop = upto_blocks < 0 ? static_cast<int>(spec.blocks.size()) : upto_blocks;
  for (int i = 0; i < stop; ++i) {
    x = poly_block(x, net.block(i), spec.blocks[static_cast<std::size_t>(i)], raw, dim);
    raw.push_back(x);
  }
  if (!with_head) return x;
  std::vector<Poly> logits = poly_matrix(x, net.head_weight());
  for (std::size_t j = 0; j < logits.size(); ++j)
    poly_add_inplace(logits[j], poly_const(net.head_bias().values()[j], dim));
  return logits;
}

/// Solves A x = b by Gaussian elimination with partial pivoting.
/// Returns false on a (near-)singular pivot.
inline bool solve_dense(std::vector<Real> a, std::vector<Real> b, int n, std::vector<Real>& x) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    Real best = std::abs(a[static_cast<std::size_t>(perm[static_cast<std::size_t>(col)]) * n + col]);
    for (int r = col + 1; r < n; ++r) {
      const Real v = std::abs(a[static_cast<std::size_t>(perm[static_cast<std::size_t>(r)]) * n + col]);
      if (v > best) {
        best = v;
        pivot = r;
      }
    }
    if (best < 1e-300) return false;
    std::swap(perm[static_cast<std::size_t>(col)], perm[static_cast<std::size_t>(pivot)]);
    const std::size_t prow = static_cast<std::size_t>(perm[static_cast<std::size_t>(col)]) * static_cast<std::size_t>(n);
    for (int r = col + 1; r < n; ++r) {
      const std::size_t rrow = static_cast<std::size_t>(perm[static_cast<std::size_t>(r)]) * static_cast<std::size_t>(n);
      const Real f = a[rrow + col] / a[prow + col];
      if (f == 0.0) continue;
      a[rrow + col] = 0.0;
      for (int cc = col + 1; cc < n; ++cc) a[rrow + cc] -= f * a[prow + cc];
      b[static_cast<std::size_t>(perm[static_cast<std::size_t>(r)])] -=
          f * b[static_cast<std::size_t>(perm[static_cast<std::size_t>(col)])];
    }
  }
  x.assign(static_cast<std::size_t>(n), 0.0);
  for (int r = n - 1; r >= 0; --r) {
    const std::size_t rrow = static_cast<std::size_t>(perm[static_cast<std::size_t>(r)]) * static_cast<std::size_t>(n);
    Real acc = b[static_cast<std::size_t>(perm[static_cast<std::size_t>(r)])];
    for (int cc = r + 1; cc < n; ++cc) acc -= a[rrow + cc] * x[static_cast<std::size_t>(cc)];
    x[static_cast<std::size_t>(r)] = acc / a[rrow + r];
  }
  return true;
}

/// Batched network evaluation at flat dense_mlp points.
inline std::vector<Real> eval_points(Network& net, const std::vector<Real>& pts, int n, int dim,
                                     int upto_blocks, bool with_head, int& out_dim) {
  NoGradGuard ng;
  Tensor x(Shape{n, dim}, pts);
  Tensor y = with_head ? net.forward(x, NormMode::FrozenAffine)
                       : net.forward_blocks(x, upto_blocks, NormMode::FrozenAffine);
  out_dim = y.dim(1);
  return y.values();
}

}  // namespace detail

/// Recovers every monomial coefficient of a tiny dense_mlp network, either by
/// a tensor-product Chebyshev grid plus Vandermonde solves or, when that
/// reconstruction fails its self-check (or the degree is too high for it), by
/// exact symbolic propagation through the blocks.
///
/// `upto_blocks` < 0 expands the full network including the head; otherwise
/// the raw output of block `upto_blocks` is expanded.
inline MonomialExpansion monomial_expand(Network& net, int upto_blocks = -1) {
  const NetworkSpec& spec = net.spec();
  if (spec.mode != NetMode::DenseMlp)
    throw ValidationError("monomial expansion supports dense_mlp networks only");
  if (spec.relu_hybrid)
    throw ValidationError("monomial expansion rejects the non-polynomial relu hybrid");
  if (upto_blocks == 0 || upto_blocks > static_cast<int>(spec.blocks.size()))
    throw ValidationError("monomial expansion: block index out of range");
  const int dim = spec.input_dim;

  DegreeReport degrees = net.degree_report();
  const long long bound = upto_blocks < 0
                              ? degrees.total
                              : degrees.per_block.at(static_cast<std::size_t>(upto_blocks) - 1);

  MonomialExpansion result;
  result.input_dim = dim;

  auto reconstruction_ok = [&](const MonomialExpansion& exp) {
    std::mt19937_64 rng(0x9e3779b9);
    std::uniform_real_distribution<Real> uni(-1.0, 1.0);
    const int npts = 100;
    std::vector<Real> pts(static_cast<std::size_t>(npts) * dim);
    for (auto& v : pts) v = uni(rng);
    int out_dim = 0;
    std::vector<Real> f =
        detail::eval_points(net, pts, npts, dim, upto_blocks, upto_blocks < 0, out_dim);
    Real fmax = 1e-8;
    for (Real v : f) fmax = std::max(fmax, std::abs(v));
    for (int p = 0; p < npts; ++p) {
      std::vector<Real> point(pts.begin() + static_cast<std::ptrdiff_t>(p) * dim,
                              pts.begin() + static_cast<std::ptrdiff_t>(p + 1) * dim);
      for (int j = 0; j < out_dim; ++j) {
        const Real approx = exp.eval_feature(static_cast<std::size_t>(j), point);
        if (std::abs(approx - f[static_cast<std::size_t>(p) * out_dim + j]) > 1e-8 * fmax)
          return false;
      }
    }
    return true;
  };

  if (dim <= 3 && bound <= 10) {
    const int n = static_cast<int>(bound) + 1;
    std::vector<Real> nodes(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      nodes[static_cast<std::size_t>(i)] = std::cos(M_PI * (2.0 * i + 1.0) / (2.0 * n));
    std::int64_t grid = 1;
    for (int a = 0; a < dim; ++a) grid *= n;
    std::vector<Real> pts(static_cast<std::size_t>(grid) * dim);
    for (std::int64_t g = 0; g < grid; ++g) {
      std::int64_t rest = g;
      for (int a = dim - 1; a >= 0; --a) {
        pts[static_cast<std::size_t>(g) * dim + a] = nodes[static_cast<std::size_t>(rest % n)];
        rest /= n;
      }
    }
    int out_dim = 0;
    std::vector<Real> f = detail::eval_points(net, pts, static_cast<int>(grid), dim, upto_blocks,
                                              upto_blocks < 0, out_dim);
    // Vandermonde matrix shared by every axis.
    std::vector<Real> vand(static_cast<std::size_t>(n) * n);
    for (int r = 0; r < n; ++r) {
      Real pw = 1.0;
      for (int c = 0; c < n; ++c) {
        vand[static_cast<std::size_t>(r) * n + c] = pw;
        pw *= nodes[static_cast<std::size_t>(r)];
      }
    }
    bool solved = true;
    std::vector<Poly> polys(static_cast<std::size_t>(out_dim));
    for (int j = 0; j < out_dim && solved; ++j) {
      // values on the grid for feature j
      std::vector<Real> c(static_cast<std::size_t>(grid));
      for (std::int64_t g = 0; g < grid; ++g)
        c[static_cast<std::size_t>(g)] = f[static_cast<std::size_t>(g) * out_dim + j];
      // transform one axis at a time: node samples -> monomial coefficients
      std::int64_t inner = 1;  // stride of the active axis
      for (int a = dim - 1; a >= 0 && solved; --a) {
        const std::int64_t outer = grid / (inner * n);
        for (std::int64_t o = 0; o < outer && solved; ++o)
          for (std::int64_t i = 0; i < inner; ++i) {
            std::vector<Real> rhs(static_cast<std::size_t>(n));
            for (int t = 0; t < n; ++t)
              rhs[static_cast<std::size_t>(t)] = c[static_cast<std::size_t>((o * n + t) * inner + i)];
            std::vector<Real> sol;
            if (!detail::solve_dense(vand, rhs, n, sol)) {
              solved = false;
              break;
            }
            for (int t = 0; t < n; ++t)
              c[static_cast<std::size_t>((o * n + t) * inner + i)] = sol[static_cast<std::size_t>(t)];
          }
        inner *= n;
      }
      if (!solved) break;
      Real maxc = 0.0;
      for (Real v : c) maxc = std::max(maxc, std::abs(v));
      for (std::int64_t g = 0; g < grid; ++g) {
        if (std::abs(c[static_cast<std::size_t>(g)]) <= 1e-10 * std::max(maxc, 1.0)) continue;
        MultiIndex idx(static_cast<std::size_t>(dim));
        std::int64_t rest = g;
        for (int a = dim - 1; a >= 0; --a) {
          idx[static_cast<std::size_t>(a)] = static_cast<int>(rest % n);
          rest /= n;
        }
        polys[static_cast<std::size_t>(j)][idx] = c[static_cast<std::size_t>(g)];
      }
    }
    if (solved) {
      result.outputs = std::move(polys);
      if (reconstruction_ok(result)) return result;
    }
  }

  // Symbolic propagation path: exact up to rounding in the coefficient sums.
  result.outputs = detail::symbolic_expand(net, upto_blocks, upto_blocks < 0);
  result.used_symbolic_path = true;
  return result;
}

// ---------------------------------------------------------------------------
// Plain-recursion equivalence
// ---------------------------------------------------------------------------

/// Evaluates the unregularized recursion
///   x_1 = z, x_n = (H_nᵀ z) ∘ (J_nᵀ x_{n-1} + b_n) + x_{n-1}
/// with plain loops (independent of the tensor engine) and returns the max
/// elementwise deviation from the block forward. Zero (to rounding) exactly
/// when Φ and Ψ are identity.
inline Real pinet_equivalence(PolyBlockParams& params, const PolyBlockSpec& spec, const Tensor& z) {
  if (spec.variant != PolyVariant::NCP)
    throw ValidationError("pinet_equivalence applies to NCP blocks");
  const int n = z.dim(0), in = z.dim(1), out = spec.out;

  std::vector<Real> x(z.values());
  int xw = in;
  for (int s = 0; s < spec.steps; ++s) {
    const auto& h = params.h[static_cast<std::size_t>(s)].values();
    const auto& j = params.j[static_cast<std::size_t>(s)].values();
    std::vector<Real> next(static_cast<std::size_t>(n) * out);
    for (int r = 0; r < n; ++r) {
      for (int o = 0; o < out; ++o) {
        Real a = 0.0;
        for (int i = 0; i < in; ++i)
          a += z.values()[static_cast<std::size_t>(r) * in + i] * h[static_cast<std::size_t>(i) * out + o];
        Real b = spec.use_bias_branch ? params.bias[static_cast<std::size_t>(s)].values()[o] : 0.0;
        for (int i = 0; i < xw; ++i)
          b += x[static_cast<std::size_t>(r) * xw + i] * j[static_cast<std::size_t>(i) * out + o];
        Real skip;
        if (s == 0) {
          if (params.skip_proj.defined()) {
            skip = 0.0;
            for (int i = 0; i < in; ++i)
              skip += z.values()[static_cast<std::size_t>(r) * in + i] *
                      params.skip_proj.values()[static_cast<std::size_t>(i) * out + o];
          } else {
            skip = z.values()[static_cast<std::size_t>(r) * in + o];
          }
        } else {
          skip = x[static_cast<std::size_t>(r) * xw + o];
        }
        next[static_cast<std::size_t>(r) * out + o] = a * b + (spec.use_skip ? skip : 0.0);
      }
    }
    x = std::move(next);
    xw = out;
  }

  NoGradGuard ng;
  Tensor got =
      ncp_block_forward(z, params, spec, {}, NetMode::DenseMlp, NormMode::Inference);
  Real dev = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) dev = std::max(dev, std::abs(x[i] - got.values()[i]));
  return dev;
}

}  // namespace polynet
