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

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "polynet/common.hpp"
#include "polynet/tensor.hpp"

namespace polynet {

namespace detail {

// ---------------------------------------------------------------------------
// Raw row-major matrix kernels. Accumulation over k runs in ascending order
// for every output element, so results are reproducible across runs.
// ---------------------------------------------------------------------------

/// C = A[m×k] · B[k×n]. 4×16 register-blocked micro-kernel: each output
/// tile accumulates in registers across the whole k extent, and the four
/// rows share every B load.
inline void mm_nn(const Real* __restrict a, const Real* __restrict b, Real* __restrict c, int m,
                  int k, int n) {
  constexpr int IB = 4, JB = 16;
  int i0 = 0;
  for (; i0 + IB <= m; i0 += IB) {
    const Real* __restrict a0 = a + static_cast<std::size_t>(i0) * k;
    const Real* __restrict a1 = a0 + k;
    const Real* __restrict a2 = a1 + k;
    const Real* __restrict a3 = a2 + k;
    for (int j0 = 0; j0 < n; j0 += JB) {
      const int jn = std::min(JB, n - j0);
      Real acc[IB][JB] = {};
      for (int t = 0; t < k; ++t) {
        const Real* __restrict brow = b + static_cast<std::size_t>(t) * n + j0;
        const Real v0 = a0[t], v1 = a1[t], v2 = a2[t], v3 = a3[t];
        for (int j = 0; j < jn; ++j) acc[0][j] += v0 * brow[j];
        for (int j = 0; j < jn; ++j) acc[1][j] += v1 * brow[j];
        for (int j = 0; j < jn; ++j) acc[2][j] += v2 * brow[j];
        for (int j = 0; j < jn; ++j) acc[3][j] += v3 * brow[j];
      }
      for (int ii = 0; ii < IB; ++ii)
        for (int j = 0; j < jn; ++j)
          c[static_cast<std::size_t>(i0 + ii) * n + j0 + j] = acc[ii][j];
    }
  }
  for (; i0 < m; ++i0) {
    const Real* __restrict arow = a + static_cast<std::size_t>(i0) * k;
    for (int j0 = 0; j0 < n; j0 += JB) {
      const int jn = std::min(JB, n - j0);
      Real acc[JB] = {};
      for (int t = 0; t < k; ++t) {
        const Real av = arow[t];
        const Real* __restrict brow = b + static_cast<std::size_t>(t) * n + j0;
        for (int j = 0; j < jn; ++j) acc[j] += av * brow[j];
      }
      for (int j = 0; j < jn; ++j) c[static_cast<std::size_t>(i0) * n + j0 + j] = acc[j];
    }
  }
}

/// C = A[m×k] · B[n×k]ᵀ
inline void mm_nt(const Real* __restrict a, const Real* __restrict b, Real* __restrict c, int m,
                  int k, int n) {
  for (int i = 0; i < m; ++i) {
    const Real* arow = a + static_cast<std::size_t>(i) * k;
    Real* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const Real* brow = b + static_cast<std::size_t>(j) * k;
      Real acc = 0.0;
      for (int t = 0; t < k; ++t) acc += arow[t] * brow[t];
      crow[j] = acc;
    }
  }
}

/// C = A[k×m]ᵀ · B[k×n]. Streams A and B row-wise; four k rows fold into C
/// per pass to shorten the read-modify-write chains on C.
inline void mm_tn(const Real* __restrict a, const Real* __restrict b, Real* __restrict c, int m,
                  int k, int n) {
  std::fill(c, c + static_cast<std::size_t>(m) * n, 0.0);
  int t = 0;
  for (; t + 3 < k; t += 4) {
    const Real* __restrict a0 = a + static_cast<std::size_t>(t) * m;
    const Real* __restrict a1 = a0 + m;
    const Real* __restrict a2 = a1 + m;
    const Real* __restrict a3 = a2 + m;
    const Real* __restrict b0 = b + static_cast<std::size_t>(t) * n;
    const Real* __restrict b1 = b0 + n;
    const Real* __restrict b2 = b1 + n;
    const Real* __restrict b3 = b2 + n;
    for (int i = 0; i < m; ++i) {
      Real* __restrict crow = c + static_cast<std::size_t>(i) * n;
      const Real v0 = a0[i], v1 = a1[i], v2 = a2[i], v3 = a3[i];
      for (int j = 0; j < n; ++j)
        crow[j] += (v0 * b0[j] + v1 * b1[j]) + (v2 * b2[j] + v3 * b3[j]);
    }
  }
  for (; t < k; ++t) {
    const Real* __restrict arow = a + static_cast<std::size_t>(t) * m;
    const Real* __restrict brow = b + static_cast<std::size_t>(t) * n;
    for (int i = 0; i < m; ++i) {
      const Real av = arow[i];
      Real* __restrict crow = c + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw DimensionError("matmul expects rank-2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  std::vector<Real> out(static_cast<std::size_t>(m) * n);
  detail::mm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  return detail::make_op(
      "matmul", Shape{m, n}, std::move(out), {a, b},
      [m, k, n](const std::vector<Real>& g, const detail::TensorNode& self,
                const std::vector<std::vector<Real>*>& pg) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        if (pg[0]) {
          std::vector<Real> ga(static_cast<std::size_t>(m) * k);
          detail::mm_nt(g.data(), bv.data(), ga.data(), m, n, k);
          for (std::size_t i = 0; i < ga.size(); ++i) (*pg[0])[i] += ga[i];
        }
        if (pg[1]) {
          std::vector<Real> gb(static_cast<std::size_t>(k) * n);
          detail::mm_tn(av.data(), g.data(), gb.data(), k, m, n);
          for (std::size_t i = 0; i < gb.size(); ++i) (*pg[1])[i] += gb[i];
        }
      });
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("hadamard", a, b);
  std::vector<Real> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return detail::make_op(
      "hadamard", a.shape(), std::move(out), {a, b},
      [](const std::vector<Real>& g, const detail::TensorNode& self,
         const std::vector<std::vector<Real>*>& pg) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        if (pg[0])
          for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * bv[i];
        if (pg[1])
          for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i] += g[i] * av[i];
      });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("add", a, b);
  std::vector<Real> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return detail::make_op("add", a.shape(), std::move(out), {a, b},
                         [](const std::vector<Real>& g, const detail::TensorNode&,
                            const std::vector<std::vector<Real>*>& pg) {
                           if (pg[0])
                             for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                           if (pg[1])
                             for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i] += g[i];
                         });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("sub", a, b);
  std::vector<Real> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return detail::make_op("sub", a.shape(), std::move(out), {a, b},
                         [](const std::vector<Real>& g, const detail::TensorNode&,
                            const std::vector<std::vector<Real>*>& pg) {
                           if (pg[0])
                             for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                           if (pg[1])
                             for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i] -= g[i];
                         });
}

inline Tensor scale(const Tensor& a, Real c) {
  std::vector<Real> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * a.values()[i];
  return detail::make_op("scale", a.shape(), std::move(out), {a},
                         [c](const std::vector<Real>& g, const detail::TensorNode&,
                             const std::vector<std::vector<Real>*>& pg) {
                           if (pg[0])
                             for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += c * g[i];
                         });
}

/// x scaled by a learnable single-element tensor (broadcast).
inline Tensor mul_scalar(const Tensor& x, const Tensor& s) {
  if (s.size() != 1)
    throw DimensionError("mul_scalar: scale must have a single element, got " +
                         shape_str(s.shape()));
  const Real sv = s[0];
  std::vector<Real> out(x.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sv * x.values()[i];
  return detail::make_op(
      "mul_scalar", x.shape(), std::move(out), {x, s},
      [sv](const std::vector<Real>& g, const detail::TensorNode& self,
           const std::vector<std::vector<Real>*>& pg) {
        const auto& xv = self.parents[0]->value;
        if (pg[0])
          for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += sv * g[i];
        if (pg[1]) {
          Real acc = 0.0;
          for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
          (*pg[1])[0] += acc;
        }
      });
}

inline Tensor scalar_recip(const Tensor& s) {
  if (s.size() != 1) throw DimensionError("scalar_recip expects a single element");
  const Real sv = s[0];
  return detail::make_op("scalar_recip", s.shape(), {1.0 / sv}, {s},
                         [sv](const std::vector<Real>& g, const detail::TensorNode&,
                              const std::vector<std::vector<Real>*>& pg) {
                           if (pg[0]) (*pg[0])[0] += -g[0] / (sv * sv);
                         });
}

inline Tensor scalar_rsqrt(const Tensor& s) {
  if (s.size() != 1) throw DimensionError("scalar_rsqrt expects a single element");
  const Real sv = s[0];
  return detail::make_op("scalar_rsqrt", s.shape(), {1.0 / std::sqrt(sv)}, {s},
                         [sv](const std::vector<Real>& g, const detail::TensorNode&,
                              const std::vector<std::vector<Real>*>& pg) {
                           if (pg[0]) (*pg[0])[0] += -0.5 * g[0] / (sv * std::sqrt(sv));
                         });
}

/// [N,D] + [D], row-wise broadcast.
inline Tensor add_rowvec(const Tensor& x, const Tensor& b) {
  if (x.ndim() != 2 || b.ndim() != 1 || x.dim(1) != b.dim(0))
    throw DimensionError("add_rowvec: incompatible shapes " + shape_str(x.shape()) + " and " +
                         shape_str(b.shape()));
  const int n = x.dim(0), d = x.dim(1);
  std::vector<Real> out(x.values().size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      out[static_cast<std::size_t>(i) * d + j] =
          x.values()[static_cast<std::size_t>(i) * d + j] + b.values()[j];
  return detail::make_op("add_rowvec", x.shape(), std::move(out), {x, b},
                         [n, d](const std::vector<Real>& g, const detail::TensorNode&,
                                const std::vector<std::vector<Real>*>& pg) {
                           if (pg[0])
                             for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                           if (pg[1])
                             for (int i = 0; i < n; ++i)
                               for (int j = 0; j < d; ++j)
                                 (*pg[1])[j] += g[static_cast<std::size_t>(i) * d + j];
                         });
}

/// [N,C,H,W] + [C], channel-wise broadcast.
inline Tensor add_chanvec(const Tensor& x, const Tensor& b) {
  if (x.ndim() != 4 || b.ndim() != 1 || x.dim(1) != b.dim(0))
    throw DimensionError("add_chanvec: incompatible shapes " + shape_str(x.shape()) + " and " +
                         shape_str(b.shape()));
  const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<Real> out(x.values().size());
  std::size_t idx = 0;
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const Real bv = b.values()[ch];
      for (int p = 0; p < hw; ++p, ++idx) out[idx] = x.values()[idx] + bv;
    }
  return detail::make_op("add_chanvec", x.shape(), std::move(out), {x, b},
                         [n, c, hw](const std::vector<Real>& g, const detail::TensorNode&,
                                    const std::vector<std::vector<Real>*>& pg) {
                           if (pg[0])
                             for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                           if (pg[1]) {
                             std::size_t idx = 0;
                             for (int i = 0; i < n; ++i)
                               for (int ch = 0; ch < c; ++ch) {
                                 Real acc = 0.0;
                                 for (int p = 0; p < hw; ++p, ++idx) acc += g[idx];
                                 (*pg[1])[ch] += acc;
                               }
                           }
                         });
}

inline Tensor transpose(const Tensor& a) {
  if (a.ndim() != 2) throw DimensionError("transpose expects rank 2, got " + shape_str(a.shape()));
  const int m = a.dim(0), n = a.dim(1);
  std::vector<Real> out(a.values().size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(j) * m + i] = a.values()[static_cast<std::size_t>(i) * n + j];
  return detail::make_op("transpose", Shape{n, m}, std::move(out), {a},
                         [m, n](const std::vector<Real>& g, const detail::TensorNode&,
                                const std::vector<std::vector<Real>*>& pg) {
                           if (pg[0])
                             for (int i = 0; i < m; ++i)
                               for (int j = 0; j < n; ++j)
                                 (*pg[0])[static_cast<std::size_t>(i) * n + j] +=
                                     g[static_cast<std::size_t>(j) * m + i];
                         });
}

inline Tensor trace(const Tensor& a) {
  if (a.ndim() != 2 || a.dim(0) != a.dim(1))
    throw DimensionError("trace expects a square matrix, got " + shape_str(a.shape()));
  const int n = a.dim(0);
  Real t = 0.0;
  for (int i = 0; i < n; ++i) t += a.values()[static_cast<std::size_t>(i) * n + i];
  return detail::make_op("trace", Shape{1}, {t}, {a},
                         [n](const std::vector<Real>& g, const detail::TensorNode&,
                             const std::vector<std::vector<Real>*>& pg) {
                           if (pg[0])
                             for (int i = 0; i < n; ++i)
                               (*pg[0])[static_cast<std::size_t>(i) * n + i] += g[0];
                         });
}

inline Tensor sum(const Tensor& a) {
  Real t = 0.0;
  for (Real v : a.values()) t += v;
  return detail::make_op("sum", Shape{1}, {t}, {a},
                         [](const std::vector<Real>& g, const detail::TensorNode&,
                            const std::vector<std::vector<Real>*>& pg) {
                           if (pg[0])
                             for (std::size_t i = 0; i < pg[0]->size(); ++i) (*pg[0])[i] += g[0];
                         });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size())
    throw DimensionError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                         ": element count differs");
  return detail::make_op("reshape", std::move(shape), a.values(), {a},
                         [](const std::vector<Real>& g, const detail::TensorNode&,
                            const std::vector<std::vector<Real>*>& pg) {
                           if (pg[0])
                             for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                         });
}

/// Element-wise max(0, x). Only used by the explicitly non-polynomial hybrid
/// comparison toggle.
inline Tensor relu(const Tensor& a) {
  std::vector<Real> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] > 0 ? a.values()[i] : 0.0;
  return detail::make_op("relu", a.shape(), std::move(out), {a},
                         [](const std::vector<Real>& g, const detail::TensorNode& self,
                            const std::vector<std::vector<Real>*>& pg) {
                           const auto& xv = self.parents[0]->value;
                           if (pg[0])
                             for (std::size_t i = 0; i < g.size(); ++i)
                               if (xv[i] > 0) (*pg[0])[i] += g[i];
                         });
}

// ---------------------------------------------------------------------------
// Spatial ops
// ---------------------------------------------------------------------------

namespace detail {

struct ConvDims {
  int n, c, h, w, f, kh, kw, ho, wo;
};

inline ConvDims conv_dims(const Tensor& x, const Tensor& k, int stride, int padding) {
  if (x.ndim() != 4 || k.ndim() != 4)
    throw DimensionError("conv2d expects rank-4 input and kernel, got " + shape_str(x.shape()) +
                         " and " + shape_str(k.shape()));
  if (stride < 1) throw ValidationError("conv2d: stride must be >= 1");
  if (padding < 0) throw ValidationError("conv2d: padding must be >= 0");
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), k.dim(0), k.dim(2), k.dim(3), 0, 0};
  if (k.dim(1) != d.c)
    throw DimensionError("conv2d: kernel channels " + shape_str(k.shape()) +
                         " do not match input " + shape_str(x.shape()));
  const int hnum = d.h + 2 * padding - d.kh;
  const int wnum = d.w + 2 * padding - d.kw;
  d.ho = hnum >= 0 ? hnum / stride + 1 : 0;
  d.wo = wnum >= 0 ? wnum / stride + 1 : 0;
  if (d.ho <= 0 || d.wo <= 0)
    throw DimensionError("conv2d: non-positive output extent for input " + shape_str(x.shape()) +
                         ", kernel " + shape_str(k.shape()) + ", stride " + std::to_string(stride) +
                         ", padding " + std::to_string(padding));
  return d;
}

/// Lowers x into a [N·Ho·Wo × C·Kh·Kw] patch matrix (zero padding).
inline void im2col(const std::vector<Real>& x, const ConvDims& d, int stride, int padding,
                   std::vector<Real>& col) {
  const int kk = d.c * d.kh * d.kw;
  col.assign(static_cast<std::size_t>(d.n) * d.ho * d.wo * kk, 0.0);
  std::size_t r = 0;
  for (int n = 0; n < d.n; ++n) {
    const Real* xs = x.data() + static_cast<std::size_t>(n) * d.c * d.h * d.w;
    for (int oy = 0; oy < d.ho; ++oy)
      for (int ox = 0; ox < d.wo; ++ox, ++r) {
        Real* crow = col.data() + r * kk;
        int kidx = 0;
        for (int c = 0; c < d.c; ++c) {
          const Real* xc = xs + static_cast<std::size_t>(c) * d.h * d.w;
          for (int dy = 0; dy < d.kh; ++dy) {
            const int y = oy * stride + dy - padding;
            for (int dx = 0; dx < d.kw; ++dx, ++kidx) {
              const int xx = ox * stride + dx - padding;
              if (y >= 0 && y < d.h && xx >= 0 && xx < d.w)
                crow[kidx] = xc[static_cast<std::size_t>(y) * d.w + xx];
            }
          }
        }
      }
  }
}

/// Scatter-add of a patch-matrix gradient back onto the input layout.
inline void col2im_add(const std::vector<Real>& col, const ConvDims& d, int stride, int padding,
                       std::vector<Real>& gx) {
  const int kk = d.c * d.kh * d.kw;
  std::size_t r = 0;
  for (int n = 0; n < d.n; ++n) {
    Real* gs = gx.data() + static_cast<std::size_t>(n) * d.c * d.h * d.w;
    for (int oy = 0; oy < d.ho; ++oy)
      for (int ox = 0; ox < d.wo; ++ox, ++r) {
        const Real* crow = col.data() + r * kk;
        int kidx = 0;
        for (int c = 0; c < d.c; ++c) {
          Real* gc = gs + static_cast<std::size_t>(c) * d.h * d.w;
          for (int dy = 0; dy < d.kh; ++dy) {
            const int y = oy * stride + dy - padding;
            for (int dx = 0; dx < d.kw; ++dx, ++kidx) {
              const int xx = ox * stride + dx - padding;
              if (y >= 0 && y < d.h && xx >= 0 && xx < d.w)
                gc[static_cast<std::size_t>(y) * d.w + xx] += crow[kidx];
            }
          }
        }
      }
  }
}

}  // namespace detail

/// 2-D cross-correlation (no kernel flip) with zero padding.
/// input [N,C,H,W], kernel [F,C,kh,kw] -> [N,F,H',W'].
///
/// Lowered to an im2col matrix product; the patch matrix is kept alive for
/// the backward pass. Per-output-element accumulation order is fixed (the
/// patch axis ascends), so results are reproducible.
inline Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride = 1, int padding = 0) {
  const detail::ConvDims d = detail::conv_dims(x, kernel, stride, padding);
  const int kk = d.c * d.kh * d.kw;
  const int rows = d.n * d.ho * d.wo;

  auto col = std::make_shared<std::vector<Real>>();
  detail::im2col(x.values(), d, stride, padding, *col);
  // kernel transposed to [kk, F] so the product keeps a unit-stride inner loop
  std::vector<Real> ker_t(static_cast<std::size_t>(kk) * d.f);
  for (int f = 0; f < d.f; ++f)
    for (int k = 0; k < kk; ++k)
      ker_t[static_cast<std::size_t>(k) * d.f + f] =
          kernel.values()[static_cast<std::size_t>(f) * kk + k];
  std::vector<Real> out_rows(static_cast<std::size_t>(rows) * d.f);
  detail::mm_nn(col->data(), ker_t.data(), out_rows.data(), rows, kk, d.f);

  // [rows, F] -> [N, F, Ho, Wo]
  std::vector<Real> out(out_rows.size());
  const int hw = d.ho * d.wo;
  for (int n = 0; n < d.n; ++n)
    for (int p = 0; p < hw; ++p) {
      const Real* src = out_rows.data() + (static_cast<std::size_t>(n) * hw + p) * d.f;
      for (int f = 0; f < d.f; ++f)
        out[(static_cast<std::size_t>(n) * d.f + f) * hw + p] = src[f];
    }

  return detail::make_op(
      "conv2d", Shape{d.n, d.f, d.ho, d.wo}, std::move(out), {x, kernel},
      [d, stride, padding, kk, rows, hw, col](const std::vector<Real>& g,
                                              const detail::TensorNode& self,
                                              const std::vector<std::vector<Real>*>& pg) {
        // g back to row layout
        std::vector<Real> g_rows(static_cast<std::size_t>(rows) * d.f);
        for (int n = 0; n < d.n; ++n)
          for (int p = 0; p < hw; ++p) {
            Real* dst = g_rows.data() + (static_cast<std::size_t>(n) * hw + p) * d.f;
            for (int f = 0; f < d.f; ++f)
              dst[f] = g[(static_cast<std::size_t>(n) * d.f + f) * hw + p];
          }
        if (pg[1]) {
          std::vector<Real> gk(static_cast<std::size_t>(d.f) * kk);
          detail::mm_tn(col->data(), g_rows.data(), gk.data(), kk, rows, d.f);
          // gk is colᵀ·g_rows = [kk, F]; fold back into the [F, kk] layout
          for (int f = 0; f < d.f; ++f)
            for (int k = 0; k < kk; ++k)
              (*pg[1])[static_cast<std::size_t>(f) * kk + k] +=
                  gk[static_cast<std::size_t>(k) * d.f + f];
        }
        if (pg[0]) {
          std::vector<Real> gcol(static_cast<std::size_t>(rows) * kk);
          detail::mm_nn(g_rows.data(), self.parents[1]->value.data(), gcol.data(), rows, d.f, kk);
          detail::col2im_add(gcol, d, stride, padding, *pg[0]);
        }
      });
}

/// Windowed maximum over [N,C,H,W]; gradient routes to the first maximum in
/// row-major scan order.
inline Tensor max_pool2d(const Tensor& x, int k, int stride) {
  if (x.ndim() != 4)
    throw DimensionError("max_pool2d expects rank-4 input, got " + shape_str(x.shape()));
  if (k < 1 || stride < 1) throw ValidationError("max_pool2d: window and stride must be >= 1");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (k > h || k > w)
    throw DimensionError("max_pool2d: window " + std::to_string(k) + " exceeds input " +
                         shape_str(x.shape()));
  const int ho = (h - k) / stride + 1;
  const int wo = (w - k) / stride + 1;
  if (ho <= 0 || wo <= 0)
    throw DimensionError("max_pool2d: non-positive output extent for " + shape_str(x.shape()));
  std::vector<Real> out(static_cast<std::size_t>(n) * c * ho * wo);
  std::vector<std::int64_t> arg(out.size());
  std::size_t o = 0;
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * h * w;
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox, ++o) {
          Real best = -std::numeric_limits<Real>::infinity();
          std::int64_t best_idx = -1;
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) {
              const std::size_t idx =
                  base + static_cast<std::size_t>(oy * stride + dy) * w + (ox * stride + dx);
              if (x.values()[idx] > best) {
                best = x.values()[idx];
                best_idx = static_cast<std::int64_t>(idx);
              }
            }
          out[o] = best;
          arg[o] = best_idx;
        }
    }
  return detail::make_op("max_pool2d", Shape{n, c, ho, wo}, std::move(out), {x},
                         [arg = std::move(arg)](const std::vector<Real>& g,
                                                const detail::TensorNode&,
                                                const std::vector<std::vector<Real>*>& pg) {
                           if (pg[0])
                             for (std::size_t i = 0; i < g.size(); ++i)
                               (*pg[0])[static_cast<std::size_t>(arg[i])] += g[i];
                         });
}

/// [N,C,H,W] -> [N,C] mean over the spatial extent.
inline Tensor global_avg_pool(const Tensor& x) {
  if (x.ndim() != 4)
    throw DimensionError("global_avg_pool expects rank-4 input, got " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<Real> out(static_cast<std::size_t>(n) * c);
  for (int i = 0; i < n * c; ++i) {
    Real acc = 0.0;
    const Real* src = x.values().data() + static_cast<std::size_t>(i) * hw;
    for (int p = 0; p < hw; ++p) acc += src[p];
    out[static_cast<std::size_t>(i)] = acc / hw;
  }
  return detail::make_op("global_avg_pool", Shape{n, c}, std::move(out), {x},
                         [hw](const std::vector<Real>& g, const detail::TensorNode&,
                              const std::vector<std::vector<Real>*>& pg) {
                           if (pg[0]) {
                             const Real inv = 1.0 / hw;
                             for (std::size_t i = 0; i < g.size(); ++i) {
                               Real* dst = pg[0]->data() + i * hw;
                               const Real gv = g[i] * inv;
                               for (int p = 0; p < hw; ++p) dst[p] += gv;
                             }
                           }
                         });
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Mean over the batch of -Σ targets·log softmax(logits), computed with
/// max-subtraction. Targets must be row-stochastic; gradients flow to the
/// logits only.
inline Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& targets) {
  if (logits.ndim() != 2 || targets.ndim() != 2 || logits.shape() != targets.shape())
    throw DimensionError("softmax_cross_entropy: shapes " + shape_str(logits.shape()) + " and " +
                         shape_str(targets.shape()) + " must match and be rank 2");
  const int n = logits.dim(0), k = logits.dim(1);
  if (k < 2) throw ValidationError("softmax_cross_entropy: need at least 2 classes");
  for (int i = 0; i < n; ++i) {
    Real s = 0.0;
    for (int j = 0; j < k; ++j) s += targets.values()[static_cast<std::size_t>(i) * k + j];
    if (std::abs(s - 1.0) > 1e-6)
      throw ValidationError("softmax_cross_entropy: target row " + std::to_string(i) +
                            " sums to " + std::to_string(s) + ", expected 1");
  }
  std::vector<Real> soft(static_cast<std::size_t>(n) * k);
  Real loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const Real* row = logits.values().data() + static_cast<std::size_t>(i) * k;
    const Real* trow = targets.values().data() + static_cast<std::size_t>(i) * k;
    Real m = row[0];
    for (int j = 1; j < k; ++j) m = std::max(m, row[j]);
    Real z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(row[j] - m);
    const Real lse = m + std::log(z);
    for (int j = 0; j < k; ++j) {
      soft[static_cast<std::size_t>(i) * k + j] = std::exp(row[j] - m) / z;
      loss -= trow[j] * (row[j] - lse);
    }
  }
  loss /= n;
  return detail::make_op(
      "softmax_cross_entropy", Shape{1}, {loss}, {logits, targets},
      [n, k, soft = std::move(soft)](const std::vector<Real>& g, const detail::TensorNode& self,
                                     const std::vector<std::vector<Real>*>& pg) {
        if (pg[0]) {
          const auto& tv = self.parents[1]->value;
          const Real gv = g[0] / n;
          for (std::size_t i = 0; i < soft.size(); ++i) (*pg[0])[i] += gv * (soft[i] - tv[i]);
        }
      });
}

// ---------------------------------------------------------------------------
// Normalization primitives (layer logic lives in norm.hpp)
// ---------------------------------------------------------------------------

/// Subtracts the feature-dimension mean: per row for [D]/[N,D], per channel
/// vector at each (n,h,w) for [N,C,H,W]. Equals multiplying the feature
/// vector by (I - ones/h).
inline Tensor mean_subtract(const Tensor& x) {
  std::vector<Real> out(x.values().size());
  auto project = [](const Real* src, Real* dst, int h, std::size_t stride) {
    Real m = 0.0;
    for (int j = 0; j < h; ++j) m += src[j * stride];
    m /= h;
    for (int j = 0; j < h; ++j) dst[j * stride] = src[j * stride] - m;
  };
  if (x.ndim() == 1 || x.ndim() == 2) {
    const int rows = x.ndim() == 1 ? 1 : x.dim(0);
    const int h = x.ndim() == 1 ? x.dim(0) : x.dim(1);
    for (int i = 0; i < rows; ++i)
      project(x.values().data() + static_cast<std::size_t>(i) * h,
              out.data() + static_cast<std::size_t>(i) * h, h, 1);
  } else if (x.ndim() == 4) {
    const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    for (int i = 0; i < n; ++i)
      for (int p = 0; p < hw; ++p)
        project(x.values().data() + static_cast<std::size_t>(i) * c * hw + p,
                out.data() + static_cast<std::size_t>(i) * c * hw + p, c,
                static_cast<std::size_t>(hw));
  } else {
    throw DimensionError("mean_subtract expects rank 1, 2 or 4, got " + shape_str(x.shape()));
  }
  Shape shp = x.shape();
  return detail::make_op(
      "mean_subtract", std::move(shp), std::move(out), {x},
      [shape = x.shape()](const std::vector<Real>& g, const detail::TensorNode&,
                          const std::vector<std::vector<Real>*>& pg) {
        if (!pg[0]) return;
        auto project_add = [](const Real* src, Real* dst, int h, std::size_t stride) {
          Real m = 0.0;
          for (int j = 0; j < h; ++j) m += src[j * stride];
          m /= h;
          for (int j = 0; j < h; ++j) dst[j * stride] += src[j * stride] - m;
        };
        if (shape.size() <= 2) {
          const int rows = shape.size() == 1 ? 1 : shape[0];
          const int h = shape.size() == 1 ? shape[0] : shape[1];
          for (int i = 0; i < rows; ++i)
            project_add(g.data() + static_cast<std::size_t>(i) * h,
                        pg[0]->data() + static_cast<std::size_t>(i) * h, h, 1);
        } else {
          const int n = shape[0], c = shape[1], hw = shape[2] * shape[3];
          for (int i = 0; i < n; ++i)
            for (int p = 0; p < hw; ++p)
              project_add(g.data() + static_cast<std::size_t>(i) * c * hw + p,
                          pg[0]->data() + static_cast<std::size_t>(i) * c * hw + p, c,
                          static_cast<std::size_t>(hw));
        }
      });
}

/// [m,C]: subtracts the per-column mean over rows (batch centering).
inline Tensor center_rows(const Tensor& x) {
  if (x.ndim() != 2) throw DimensionError("center_rows expects rank 2, got " + shape_str(x.shape()));
  const int m = x.dim(0), c = x.dim(1);
  std::vector<Real> mean(static_cast<std::size_t>(c), 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < c; ++j) mean[j] += x.values()[static_cast<std::size_t>(i) * c + j];
  for (int j = 0; j < c; ++j) mean[j] /= m;
  std::vector<Real> out(x.values().size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<std::size_t>(i) * c + j] =
          x.values()[static_cast<std::size_t>(i) * c + j] - mean[j];
  return detail::make_op("center_rows", x.shape(), std::move(out), {x},
                         [m, c](const std::vector<Real>& g, const detail::TensorNode&,
                                const std::vector<std::vector<Real>*>& pg) {
                           if (!pg[0]) return;
                           std::vector<Real> gm(static_cast<std::size_t>(c), 0.0);
                           for (int i = 0; i < m; ++i)
                             for (int j = 0; j < c; ++j)
                               gm[j] += g[static_cast<std::size_t>(i) * c + j];
                           for (int j = 0; j < c; ++j) gm[j] /= m;
                           for (int i = 0; i < m; ++i)
                             for (int j = 0; j < c; ++j)
                               (*pg[0])[static_cast<std::size_t>(i) * c + j] +=
                                   g[static_cast<std::size_t>(i) * c + j] - gm[j];
                         });
}

namespace detail {

inline int channel_count(const Tensor& x, const char* op) {
  if (x.ndim() == 2) return x.dim(1);
  if (x.ndim() == 4) return x.dim(1);
  throw DimensionError(std::string(op) + " expects rank 2 or 4, got " + shape_str(x.shape()));
}

}  // namespace detail

/// Channels [c0, c1) of a [N,C] or [N,C,H,W] tensor.
inline Tensor slice_channels(const Tensor& x, int c0, int c1) {
  const int c = detail::channel_count(x, "slice_channels");
  if (c0 < 0 || c1 > c || c0 >= c1)
    throw ValidationError("slice_channels: bad range [" + std::to_string(c0) + "," +
                          std::to_string(c1) + ") for " + shape_str(x.shape()));
  const int n = x.dim(0);
  const int hw = x.ndim() == 4 ? x.dim(2) * x.dim(3) : 1;
  const int cs = c1 - c0;
  std::vector<Real> out(static_cast<std::size_t>(n) * cs * hw);
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < cs; ++ch)
      std::memcpy(out.data() + (static_cast<std::size_t>(i) * cs + ch) * hw,
                  x.values().data() + (static_cast<std::size_t>(i) * c + c0 + ch) * hw,
                  sizeof(Real) * static_cast<std::size_t>(hw));
  Shape shp = x.ndim() == 4 ? Shape{n, cs, x.dim(2), x.dim(3)} : Shape{n, cs};
  return detail::make_op("slice_channels", std::move(shp), std::move(out), {x},
                         [n, c, c0, cs, hw](const std::vector<Real>& g, const detail::TensorNode&,
                                            const std::vector<std::vector<Real>*>& pg) {
                           if (!pg[0]) return;
                           for (int i = 0; i < n; ++i)
                             for (int ch = 0; ch < cs; ++ch) {
                               const Real* src = g.data() + (static_cast<std::size_t>(i) * cs + ch) * hw;
                               Real* dst =
                                   pg[0]->data() + (static_cast<std::size_t>(i) * c + c0 + ch) * hw;
                               for (int p = 0; p < hw; ++p) dst[p] += src[p];
                             }
                         });
}

/// Concatenation along the channel dimension.
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.ndim() != b.ndim() || a.dim(0) != b.dim(0) ||
      (a.ndim() == 4 && (a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))))
    throw DimensionError("concat_channels: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  const int n = a.dim(0);
  const int ca = detail::channel_count(a, "concat_channels");
  const int cb = detail::channel_count(b, "concat_channels");
  const int hw = a.ndim() == 4 ? a.dim(2) * a.dim(3) : 1;
  const int c = ca + cb;
  std::vector<Real> out(static_cast<std::size_t>(n) * c * hw);
  for (int i = 0; i < n; ++i) {
    std::memcpy(out.data() + static_cast<std::size_t>(i) * c * hw,
                a.values().data() + static_cast<std::size_t>(i) * ca * hw,
                sizeof(Real) * static_cast<std::size_t>(ca) * hw);
    std::memcpy(out.data() + static_cast<std::size_t>(i) * c * hw + static_cast<std::size_t>(ca) * hw,
                b.values().data() + static_cast<std::size_t>(i) * cb * hw,
                sizeof(Real) * static_cast<std::size_t>(cb) * hw);
  }
  Shape shp = a.ndim() == 4 ? Shape{n, c, a.dim(2), a.dim(3)} : Shape{n, c};
  return detail::make_op(
      "concat_channels", std::move(shp), std::move(out), {a, b},
      [n, ca, cb, hw, c](const std::vector<Real>& g, const detail::TensorNode&,
                         const std::vector<std::vector<Real>*>& pg) {
        for (int i = 0; i < n; ++i) {
          if (pg[0]) {
            const Real* src = g.data() + static_cast<std::size_t>(i) * c * hw;
            Real* dst = pg[0]->data() + static_cast<std::size_t>(i) * ca * hw;
            for (int p = 0; p < ca * hw; ++p) dst[p] += src[p];
          }
          if (pg[1]) {
            const Real* src = g.data() + static_cast<std::size_t>(i) * c * hw +
                              static_cast<std::size_t>(ca) * hw;
            Real* dst = pg[1]->data() + static_cast<std::size_t>(i) * cb * hw;
            for (int p = 0; p < cb * hw; ++p) dst[p] += src[p];
          }
        }
      });
}

/// Per-channel learnable scale and shift: y = x*gamma_c + beta_c.
inline Tensor channel_affine(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  const int c = detail::channel_count(x, "channel_affine");
  if (gamma.size() != c || beta.size() != c)
    throw DimensionError("channel_affine: affine parameters must have " + std::to_string(c) +
                         " elements");
  const int n = x.dim(0);
  const int hw = x.ndim() == 4 ? x.dim(2) * x.dim(3) : 1;
  std::vector<Real> out(x.values().size());
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const Real gm = gamma.values()[ch], bt = beta.values()[ch];
      const Real* src = x.values().data() + (static_cast<std::size_t>(i) * c + ch) * hw;
      Real* dst = out.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
      for (int p = 0; p < hw; ++p) dst[p] = src[p] * gm + bt;
    }
  return detail::make_op(
      "channel_affine", x.shape(), std::move(out), {x, gamma, beta},
      [n, c, hw](const std::vector<Real>& g, const detail::TensorNode& self,
                 const std::vector<std::vector<Real>*>& pg) {
        const auto& xv = self.parents[0]->value;
        const auto& gm = self.parents[1]->value;
        for (int i = 0; i < n; ++i)
          for (int ch = 0; ch < c; ++ch) {
            const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * hw;
            if (pg[0])
              for (int p = 0; p < hw; ++p) (*pg[0])[off + p] += g[off + p] * gm[ch];
            if (pg[1]) {
              Real acc = 0.0;
              for (int p = 0; p < hw; ++p) acc += g[off + p] * xv[off + p];
              (*pg[1])[ch] += acc;
            }
            if (pg[2]) {
              Real acc = 0.0;
              for (int p = 0; p < hw; ++p) acc += g[off + p];
              (*pg[2])[ch] += acc;
            }
          }
      });
}

enum class NormGrouping {
  Batch,    // statistics per channel over (N,H,W) — batch norm
  Instance  // statistics per (sample, channel) over (H,W) — instance norm
};

/// Normalizes x to zero mean / unit variance over the chosen grouping
/// (biased variance). Optionally reports the statistics for running-average
/// tracking. Differentiable with the exact normalization backward.
inline Tensor normalize(const Tensor& x, NormGrouping grouping, Real eps,
                        std::vector<Real>* mean_out = nullptr,
                        std::vector<Real>* var_out = nullptr) {
  if (eps <= 0) throw ValidationError("normalize: eps must be > 0");
  struct Group {
    std::size_t offset;  // first element
    std::size_t stride;  // between consecutive members
    int count;           // members per contiguous run
    int runs;            // number of runs
    std::size_t run_stride;
  };
  // Enumerate groups as (runs × count) strided element sets.
  std::vector<Group> groups;
  if (x.ndim() == 2) {
    if (grouping == NormGrouping::Instance)
      throw ValidationError("instance normalization needs spatial input [N,C,H,W]");
    const int n = x.dim(0), c = x.dim(1);
    for (int j = 0; j < c; ++j)
      groups.push_back({static_cast<std::size_t>(j), static_cast<std::size_t>(c), n, 1, 0});
  } else if (x.ndim() == 4) {
    const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (grouping == NormGrouping::Batch) {
      for (int j = 0; j < c; ++j)
        groups.push_back({static_cast<std::size_t>(j) * hw, 1, hw, n,
                          static_cast<std::size_t>(c) * hw});
    } else {
      for (int i = 0; i < n * c; ++i)
        groups.push_back({static_cast<std::size_t>(i) * hw, 1, hw, 1, 0});
    }
  } else {
    throw DimensionError("normalize expects rank 2 or 4, got " + shape_str(x.shape()));
  }

  std::vector<Real> mean(groups.size()), var(groups.size());
  std::vector<Real> out(x.values().size());
  const auto& xv = x.values();
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const Group& g = groups[gi];
    const std::int64_t total = static_cast<std::int64_t>(g.count) * g.runs;
    Real m = 0.0;
    for (int r = 0; r < g.runs; ++r)
      for (int i = 0; i < g.count; ++i) m += xv[g.offset + r * g.run_stride + i * g.stride];
    m /= total;
    Real v = 0.0;
    for (int r = 0; r < g.runs; ++r)
      for (int i = 0; i < g.count; ++i) {
        const Real d = xv[g.offset + r * g.run_stride + i * g.stride] - m;
        v += d * d;
      }
    v /= total;
    mean[gi] = m;
    var[gi] = v;
    const Real inv = 1.0 / std::sqrt(v + eps);
    for (int r = 0; r < g.runs; ++r)
      for (int i = 0; i < g.count; ++i) {
        const std::size_t idx = g.offset + r * g.run_stride + i * g.stride;
        out[idx] = (xv[idx] - m) * inv;
      }
  }
  if (mean_out) *mean_out = mean;
  if (var_out) *var_out = var;

  return detail::make_op(
      "normalize", x.shape(), std::move(out), {x},
      [groups = std::move(groups), mean = std::move(mean), var = std::move(var), eps](
          const std::vector<Real>& g, const detail::TensorNode& self,
          const std::vector<std::vector<Real>*>& pg) {
        if (!pg[0]) return;
        const auto& xv = self.parents[0]->value;
        for (std::size_t gi = 0; gi < groups.size(); ++gi) {
          const auto& gr = groups[gi];
          const std::int64_t total = static_cast<std::int64_t>(gr.count) * gr.runs;
          const Real inv = 1.0 / std::sqrt(var[gi] + eps);
          Real gsum = 0.0, gxsum = 0.0;
          for (int r = 0; r < gr.runs; ++r)
            for (int i = 0; i < gr.count; ++i) {
              const std::size_t idx = gr.offset + r * gr.run_stride + i * gr.stride;
              const Real xhat = (xv[idx] - mean[gi]) * inv;
              gsum += g[idx];
              gxsum += g[idx] * xhat;
            }
          const Real gmean = gsum / total;
          const Real gxmean = gxsum / total;
          for (int r = 0; r < gr.runs; ++r)
            for (int i = 0; i < gr.count; ++i) {
              const std::size_t idx = gr.offset + r * gr.run_stride + i * gr.stride;
              const Real xhat = (xv[idx] - mean[gi]) * inv;
              (*pg[0])[idx] += inv * (g[idx] - gmean - xhat * gxmean);
            }
        }
      });
}

/// Normalization by fixed per-channel statistics (inference / frozen-affine
/// path); a plain linear map of the input.
inline Tensor fixed_whiten(const Tensor& x, const std::vector<Real>& mean,
                           const std::vector<Real>& var, Real eps) {
  const int c = detail::channel_count(x, "fixed_whiten");
  if (static_cast<int>(mean.size()) != c || static_cast<int>(var.size()) != c)
    throw DimensionError("fixed_whiten: statistics size mismatch for " + shape_str(x.shape()));
  const int n = x.dim(0);
  const int hw = x.ndim() == 4 ? x.dim(2) * x.dim(3) : 1;
  std::vector<Real> inv(static_cast<std::size_t>(c));
  for (int j = 0; j < c; ++j) inv[j] = 1.0 / std::sqrt(var[j] + eps);
  std::vector<Real> out(x.values().size());
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * hw;
      for (int p = 0; p < hw; ++p) out[off + p] = (x.values()[off + p] - mean[ch]) * inv[ch];
    }
  return detail::make_op("fixed_whiten", x.shape(), std::move(out), {x},
                         [n, c, hw, inv = std::move(inv)](
                             const std::vector<Real>& g, const detail::TensorNode&,
                             const std::vector<std::vector<Real>*>& pg) {
                           if (!pg[0]) return;
                           for (int i = 0; i < n; ++i)
                             for (int ch = 0; ch < c; ++ch) {
                               const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * hw;
                               for (int p = 0; p < hw; ++p) (*pg[0])[off + p] += g[off + p] * inv[ch];
                             }
                         });
}

/// Applies a fixed linear map W [C×C] to the channel vector at every
/// position (inference path of whitening layers).
inline Tensor fixed_channel_map(const Tensor& x, const std::vector<Real>& w,
                                const std::vector<Real>& shift) {
  const int c = detail::channel_count(x, "fixed_channel_map");
  if (static_cast<int>(w.size()) != c * c || static_cast<int>(shift.size()) != c)
    throw DimensionError("fixed_channel_map: map size mismatch for " + shape_str(x.shape()));
  const int n = x.dim(0);
  const int hw = x.ndim() == 4 ? x.dim(2) * x.dim(3) : 1;
  std::vector<Real> out(x.values().size());
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < hw; ++p) {
      for (int co = 0; co < c; ++co) {
        Real acc = 0.0;
        for (int ci = 0; ci < c; ++ci)
          acc += (x.values()[(static_cast<std::size_t>(i) * c + ci) * hw + p] - shift[ci]) *
                 w[static_cast<std::size_t>(ci) * c + co];
        out[(static_cast<std::size_t>(i) * c + co) * hw + p] = acc;
      }
    }
  return detail::make_op(
      "fixed_channel_map", x.shape(), std::move(out), {x},
      [n, c, hw, w](const std::vector<Real>& g, const detail::TensorNode&,
                    const std::vector<std::vector<Real>*>& pg) {
        if (!pg[0]) return;
        for (int i = 0; i < n; ++i)
          for (int p = 0; p < hw; ++p)
            for (int ci = 0; ci < c; ++ci) {
              Real acc = 0.0;
              for (int co = 0; co < c; ++co)
                acc += g[(static_cast<std::size_t>(i) * c + co) * hw + p] *
                       w[static_cast<std::size_t>(ci) * c + co];
              (*pg[0])[(static_cast<std::size_t>(i) * c + ci) * hw + p] += acc;
            }
      });
}

/// [N,C,H,W] -> [N·H·W, C] sample rows (whitening layout).
inline Tensor rows_from_nchw(const Tensor& x) {
  if (x.ndim() != 4)
    throw DimensionError("rows_from_nchw expects rank 4, got " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<Real> out(x.values().size());
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (int p = 0; p < hw; ++p)
        out[(static_cast<std::size_t>(i) * hw + p) * c + ch] =
            x.values()[(static_cast<std::size_t>(i) * c + ch) * hw + p];
  return detail::make_op("rows_from_nchw", Shape{n * hw, c}, std::move(out), {x},
                         [n, c, hw](const std::vector<Real>& g, const detail::TensorNode&,
                                    const std::vector<std::vector<Real>*>& pg) {
                           if (!pg[0]) return;
                           for (int i = 0; i < n; ++i)
                             for (int ch = 0; ch < c; ++ch)
                               for (int p = 0; p < hw; ++p)
                                 (*pg[0])[(static_cast<std::size_t>(i) * c + ch) * hw + p] +=
                                     g[(static_cast<std::size_t>(i) * hw + p) * c + ch];
                         });
}

/// Inverse of rows_from_nchw.
inline Tensor nchw_from_rows(const Tensor& rows, int n, int c, int h, int w) {
  if (rows.ndim() != 2 || rows.dim(0) != n * h * w || rows.dim(1) != c)
    throw DimensionError("nchw_from_rows: row matrix " + shape_str(rows.shape()) +
                         " does not match target dims");
  const int hw = h * w;
  std::vector<Real> out(rows.values().size());
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (int p = 0; p < hw; ++p)
        out[(static_cast<std::size_t>(i) * c + ch) * hw + p] =
            rows.values()[(static_cast<std::size_t>(i) * hw + p) * c + ch];
  return detail::make_op("nchw_from_rows", Shape{n, c, h, w}, std::move(out), {rows},
                         [n, c, hw](const std::vector<Real>& g, const detail::TensorNode&,
                                    const std::vector<std::vector<Real>*>& pg) {
                           if (!pg[0]) return;
                           for (int i = 0; i < n; ++i)
                             for (int ch = 0; ch < c; ++ch)
                               for (int p = 0; p < hw; ++p)
                                 (*pg[0])[(static_cast<std::size_t>(i) * hw + p) * c + ch] +=
                                     g[(static_cast<std::size_t>(i) * c + ch) * hw + p];
                         });
}

}  // namespace polynet
