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
#include <string>
#include <utility>
#include <vector>

#include "polynet/common.hpp"
#include "polynet/ops.hpp"
#include "polynet/tensor.hpp"

namespace polynet {

enum class NormKindTag { Identity, BatchNorm, InstanceNorm, IBN, MeanSubtract, IterNorm };

/// Description of the Φ/Ψ regularization map applied inside a block.
struct NormKind {
  NormKindTag kind = NormKindTag::Identity;
  Real momentum = 0.1;  // running-statistics EMA
  Real eps = 1e-5;
  Real ratio = 0.8;    // IBN: instance-normalized channel fraction
  int iterations = 5;  // IterNorm Newton-Schulz steps
  bool affine = false;

  static NormKind identity() { return {}; }
  static NormKind batch_norm(bool affine = true, Real momentum = 0.1, Real eps = 1e-5) {
    NormKind k;
    k.kind = NormKindTag::BatchNorm;
    k.affine = affine;
    k.momentum = momentum;
    k.eps = eps;
    return k;
  }
  static NormKind instance_norm(bool affine = true, Real eps = 1e-5) {
    NormKind k;
    k.kind = NormKindTag::InstanceNorm;
    k.affine = affine;
    k.eps = eps;
    return k;
  }
  static NormKind ibn(Real ratio = 0.8, bool affine = true, Real momentum = 0.1, Real eps = 1e-5) {
    NormKind k;
    k.kind = NormKindTag::IBN;
    k.ratio = ratio;
    k.affine = affine;
    k.momentum = momentum;
    k.eps = eps;
    return k;
  }
  static NormKind mean_subtract() {
    NormKind k;
    k.kind = NormKindTag::MeanSubtract;
    return k;
  }
  static NormKind iter_norm(int iterations = 5, bool affine = true, Real momentum = 0.1,
                            Real eps = 1e-5) {
    NormKind k;
    k.kind = NormKindTag::IterNorm;
    k.iterations = iterations;
    k.affine = affine;
    k.momentum = momentum;
    k.eps = eps;
    return k;
  }

  void validate() const {
    if (kind == NormKindTag::IBN && (ratio <= 0.0 || ratio > 1.0))
      throw ValidationError("IBN ratio must lie in (0, 1]");
    if (eps <= 0.0) throw ValidationError("normalization eps must be > 0");
    if (kind == NormKindTag::IterNorm && iterations < 1)
      throw ValidationError("IterNorm needs at least 1 iteration");
  }
};

inline NormKindTag parse_norm_kind(const std::string& s) {
  if (s == "identity" || s == "none") return NormKindTag::Identity;
  if (s == "bn" || s == "batch_norm") return NormKindTag::BatchNorm;
  if (s == "in" || s == "instance_norm") return NormKindTag::InstanceNorm;
  if (s == "ibn") return NormKindTag::IBN;
  if (s == "mean_subtract") return NormKindTag::MeanSubtract;
  if (s == "iter_norm") return NormKindTag::IterNorm;
  throw ValidationError("unknown normalization kind '" + s + "'");
}

inline std::string norm_kind_name(NormKindTag t) {
  switch (t) {
    case NormKindTag::Identity: return "identity";
    case NormKindTag::BatchNorm: return "bn";
    case NormKindTag::InstanceNorm: return "in";
    case NormKindTag::IBN: return "ibn";
    case NormKindTag::MeanSubtract: return "mean_subtract";
    case NormKindTag::IterNorm: return "iter_norm";
  }
  return "?";
}

/// Execution mode of normalization layers.
///  - Training: data statistics, running averages updated.
///  - Inference: running statistics for BN; IN stays per-sample.
///  - FrozenAffine: every kind degrades to a fixed affine/linear map of the
///    input (required by the polynomial-degree oracles).
enum class NormMode { Training, Inference, FrozenAffine };

/// Number of instance-normalized channels in an IBN split.
inline int ibn_split(Real ratio, int channels) {
  return static_cast<int>(std::floor(ratio * channels));
}

namespace detail {

/// Plain per-channel mean/variance over (N[,H,W]) without touching the graph;
/// feeds running-average updates.
inline void batch_channel_stats(const Tensor& x, std::vector<Real>& mean, std::vector<Real>& var) {
  const int c = channel_count(x, "batch_channel_stats");
  const int n = x.dim(0);
  const int hw = x.ndim() == 4 ? x.dim(2) * x.dim(3) : 1;
  mean.assign(static_cast<std::size_t>(c), 0.0);
  var.assign(static_cast<std::size_t>(c), 0.0);
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const Real* src = x.values().data() + (static_cast<std::size_t>(i) * c + ch) * hw;
      for (int p = 0; p < hw; ++p) mean[ch] += src[p];
    }
  const Real total = static_cast<Real>(n) * hw;
  for (int ch = 0; ch < c; ++ch) mean[ch] /= total;
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const Real* src = x.values().data() + (static_cast<std::size_t>(i) * c + ch) * hw;
      for (int p = 0; p < hw; ++p) {
        const Real d = src[p] - mean[ch];
        var[ch] += d * d;
      }
    }
  for (int ch = 0; ch < c; ++ch) var[ch] /= total;
}

}  // namespace detail

/// Stateful normalization layer realizing one NormKind. Owns the optional
/// affine parameters and the running statistics used at inference.
class NormLayer {
 public:
  NormLayer() = default;

  NormLayer(NormKind kind, int channels) : kind_(kind), channels_(channels) {
    kind_.validate();
    if (channels <= 0) throw ValidationError("NormLayer: channel count must be positive");
    if (has_running_stats()) {
      run_mean_.assign(static_cast<std::size_t>(channels), 0.0);
      run_var_.assign(static_cast<std::size_t>(channels), 1.0);
    }
    if (kind_.kind == NormKindTag::IterNorm) {
      run_whiten_.assign(static_cast<std::size_t>(channels) * channels, 0.0);
      for (int i = 0; i < channels; ++i)
        run_whiten_[static_cast<std::size_t>(i) * channels + i] = 1.0;
      run_mean_.assign(static_cast<std::size_t>(channels), 0.0);
    }
    if (has_affine()) {
      gamma_ = Tensor(Shape{channels}, 1.0);
      beta_ = Tensor(Shape{channels}, 0.0);
      gamma_.set_requires_grad(true);
      beta_.set_requires_grad(true);
    }
  }

  const NormKind& kind() const { return kind_; }
  int channels() const { return channels_; }
  bool has_affine() const {
    return kind_.affine && kind_.kind != NormKindTag::Identity &&
           kind_.kind != NormKindTag::MeanSubtract;
  }
  bool has_running_stats() const {
    return kind_.kind == NormKindTag::BatchNorm || kind_.kind == NormKindTag::InstanceNorm ||
           kind_.kind == NormKindTag::IBN;
  }
  Tensor& gamma() { return gamma_; }
  Tensor& beta() { return beta_; }
  std::vector<Real>& running_mean() { return run_mean_; }
  std::vector<Real>& running_var() { return run_var_; }
  std::vector<Real>& running_whiten() { return run_whiten_; }

  /// Named running-statistics buffers (checkpointing).
  void collect_buffers(const std::string& prefix,
                       std::vector<std::pair<std::string, std::vector<Real>*>>& out) {
    if (!run_mean_.empty()) out.emplace_back(prefix + ".run_mean", &run_mean_);
    if (!run_var_.empty()) out.emplace_back(prefix + ".run_var", &run_var_);
    if (!run_whiten_.empty()) out.emplace_back(prefix + ".run_whiten", &run_whiten_);
  }

  Tensor forward(const Tensor& x, NormMode mode) {
    Tensor y = normalized(x, mode);
    if (has_affine()) y = channel_affine(y, gamma_, beta_);
    return y;
  }

 private:
  Tensor normalized(const Tensor& x, NormMode mode) {
    switch (kind_.kind) {
      case NormKindTag::Identity:
        return x;
      case NormKindTag::MeanSubtract:
        return mean_subtract(x);
      case NormKindTag::BatchNorm: {
        check_channels(x);
        if (mode == NormMode::Training) {
          if (x.dim(0) < 2)
            throw ValidationError("batch normalization requires batch size >= 2 in training");
          std::vector<Real> mean, var;
          Tensor y = normalize(x, NormGrouping::Batch, kind_.eps, &mean, &var);
          update_running(mean, var, group_count(x));
          return y;
        }
        return fixed_whiten(x, run_mean_, run_var_, kind_.eps);
      }
      case NormKindTag::InstanceNorm: {
        check_channels(x);
        if (x.ndim() != 4)
          throw ValidationError("instance normalization requires [N,C,H,W] input");
        if (mode == NormMode::FrozenAffine)
          return fixed_whiten(x, run_mean_, run_var_, kind_.eps);
        if (mode == NormMode::Training) {
          std::vector<Real> mean, var;
          detail::batch_channel_stats(x, mean, var);
          update_running(mean, var, group_count(x));
        }
        return normalize(x, NormGrouping::Instance, kind_.eps);
      }
      case NormKindTag::IBN: {
        check_channels(x);
        if (x.ndim() != 4) throw ValidationError("IBN requires [N,C,H,W] input");
        const int cin = ibn_split(kind_.ratio, channels_);
        if (mode == NormMode::FrozenAffine)
          return fixed_whiten(x, run_mean_, run_var_, kind_.eps);
        if (mode == NormMode::Training) {
          if (cin < channels_ && x.dim(0) < 2)
            throw ValidationError("batch normalization requires batch size >= 2 in training");
          std::vector<Real> mean, var;
          detail::batch_channel_stats(x, mean, var);
          update_running(mean, var, group_count(x));
        }
        if (cin == 0) {
          if (mode == NormMode::Training) return normalize(x, NormGrouping::Batch, kind_.eps);
          return fixed_whiten(x, run_mean_, run_var_, kind_.eps);
        }
        if (cin == channels_) return normalize(x, NormGrouping::Instance, kind_.eps);
        Tensor in_part = normalize(slice_channels(x, 0, cin), NormGrouping::Instance, kind_.eps);
        Tensor bn_input = slice_channels(x, cin, channels_);
        Tensor bn_part;
        if (mode == NormMode::Training) {
          bn_part = normalize(bn_input, NormGrouping::Batch, kind_.eps);
        } else {
          std::vector<Real> m(run_mean_.begin() + cin, run_mean_.end());
          std::vector<Real> v(run_var_.begin() + cin, run_var_.end());
          bn_part = fixed_whiten(bn_input, m, v, kind_.eps);
        }
        return concat_channels(in_part, bn_part);
      }
      case NormKindTag::IterNorm: {
        check_channels(x);
        if (mode != NormMode::Training)
          return fixed_channel_map(x, run_whiten_, run_mean_);
        const bool spatial = x.ndim() == 4;
        Tensor rows = spatial ? rows_from_nchw(x) : x;
        const int m = rows.dim(0);
        if (m < 2) throw ValidationError("iterative normalization requires batch size >= 2");
        Tensor xc = center_rows(rows);
        Tensor sigma = scale(matmul(transpose(xc), xc), 1.0 / m);
        Tensor eye_eps(Shape{channels_, channels_}, 0.0);
        for (int i = 0; i < channels_; ++i)
          eye_eps.mutable_values()[static_cast<std::size_t>(i) * channels_ + i] = kind_.eps;
        sigma = add(sigma, eye_eps);
        Tensor tr = trace(sigma);
        Tensor sigma_n = mul_scalar(sigma, scalar_recip(tr));
        Tensor p(Shape{channels_, channels_}, 0.0);
        for (int i = 0; i < channels_; ++i)
          p.mutable_values()[static_cast<std::size_t>(i) * channels_ + i] = 1.0;
        for (int it = 0; it < kind_.iterations; ++it) {
          Tensor p3s = matmul(p, matmul(p, matmul(p, sigma_n)));
          p = scale(sub(scale(p, 3.0), p3s), 0.5);
        }
        Tensor w = mul_scalar(p, scalar_rsqrt(tr));
        Tensor y_rows = matmul(xc, w);
        update_whitening(rows, w);
        if (spatial) return nchw_from_rows(y_rows, x.dim(0), channels_, x.dim(2), x.dim(3));
        return y_rows;
      }
    }
    throw ValidationError("NormLayer: unreachable kind");
  }

  void check_channels(const Tensor& x) const {
    const int c = x.ndim() == 4 ? x.dim(1) : (x.ndim() == 2 ? x.dim(1) : -1);
    if (c != channels_)
      throw DimensionError("normalization layer built for " + std::to_string(channels_) +
                           " channels applied to " + shape_str(x.shape()));
  }

  std::int64_t group_count(const Tensor& x) const {
    return static_cast<std::int64_t>(x.dim(0)) * (x.ndim() == 4 ? x.dim(2) * x.dim(3) : 1);
  }

  void update_running(const std::vector<Real>& mean, const std::vector<Real>& var,
                      std::int64_t count) {
    const Real mom = kind_.momentum;
    const Real unbias = count > 1 ? static_cast<Real>(count) / (count - 1) : 1.0;
    for (std::size_t i = 0; i < run_mean_.size(); ++i) {
      run_mean_[i] = (1 - mom) * run_mean_[i] + mom * mean[i];
      run_var_[i] = (1 - mom) * run_var_[i] + mom * var[i] * unbias;
    }
  }

  void update_whitening(const Tensor& rows, const Tensor& w) {
    const Real mom = kind_.momentum;
    const int m = rows.dim(0);
    std::vector<Real> mean(static_cast<std::size_t>(channels_), 0.0);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < channels_; ++j)
        mean[j] += rows.values()[static_cast<std::size_t>(i) * channels_ + j];
    for (int j = 0; j < channels_; ++j) mean[j] /= m;
    for (std::size_t i = 0; i < run_mean_.size(); ++i)
      run_mean_[i] = (1 - mom) * run_mean_[i] + mom * mean[i];
    for (std::size_t i = 0; i < run_whiten_.size(); ++i)
      run_whiten_[i] = (1 - mom) * run_whiten_[i] + mom * w.values()[i];
  }

  NormKind kind_;
  int channels_ = 0;
  Tensor gamma_, beta_;
  std::vector<Real> run_mean_, run_var_;
  std::vector<Real> run_whiten_;
};

}  // namespace polynet
