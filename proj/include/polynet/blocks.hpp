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

#include <string>
#include <vector>

#include "polynet/common.hpp"
#include "polynet/norm.hpp"
#include "polynet/ops.hpp"
#include "polynet/tensor.hpp"

namespace polynet {

enum class PolyVariant { NCP, CCP };

enum class NetMode { DenseMlp, Conv };

/// Declarative description of one polynomial block.
///
/// NCP realizes the recursion
///   x_1 = z,  x_n = (Φ H_nᵀ z) ∘ (Ψ J_nᵀ x_{n-1} + b_n) ∘ Π_τ (ρ_τ·out_τ) + x_{n-1}
/// so `steps` Hadamard steps contribute degree steps+1 in the block input.
/// CCP realizes
///   x_1 = H_1ᵀ z,  x_n = (Φ H_nᵀ z) ∘ x_{n-1} + x_{n-1}
/// where `steps` counts recursion indices including the base, contributing
/// degree == steps (so steps >= 2).
struct PolyBlockSpec {
  PolyVariant variant = PolyVariant::NCP;
  int steps = 1;
  int in = 0;   // features (dense_mlp) or channels (conv)
  int out = 0;
  int stride = 1;  // conv: spatial stride of the z-branch maps and skip
  int ksize = 3;   // conv: kernel size of the H/J maps
  NormKind phi;
  NormKind psi;
  bool use_bias_branch = true;
  bool use_skip = true;
  std::vector<int> dense_inputs;  // 0-based indices of earlier blocks
  bool rho_learnable = true;

  int hadamard_steps() const { return variant == PolyVariant::NCP ? steps : steps - 1; }

  void validate(int own_index, NetMode mode) const {
    const std::string tag = "block " + std::to_string(own_index + 1) + ": ";
    if (in <= 0 || out <= 0) throw ValidationError(tag + "in/out must be positive");
    if (steps < 1) throw ValidationError(tag + "steps must be >= 1");
    if (variant == PolyVariant::CCP) {
      if (steps < 2) throw ValidationError(tag + "CCP recursion needs steps >= 2");
      if (use_bias_branch) throw ValidationError(tag + "CCP has no bias branch");
      if (psi.kind != NormKindTag::Identity) throw ValidationError(tag + "CCP has no Psi map");
    }
    if (stride < 1) throw ValidationError(tag + "stride must be >= 1");
    if (mode == NetMode::DenseMlp && stride != 1)
      throw ValidationError(tag + "stride applies to conv mode only");
    if (mode == NetMode::Conv && (ksize < 1 || ksize % 2 == 0))
      throw ValidationError(tag + "conv kernel size must be odd and positive");
    for (int t : dense_inputs)
      if (t < 0 || t >= own_index)
        throw ValidationError(tag + "dense input " + std::to_string(t + 1) +
                              " must reference an earlier block");
    phi.validate();
    psi.validate();
    if (mode == NetMode::DenseMlp) {
      for (const NormKind* k : {&phi, &psi})
        if (k->kind == NormKindTag::InstanceNorm || k->kind == NormKindTag::IBN)
          throw ValidationError(tag + "instance/IBN normalization needs conv mode");
    }
  }
};

/// Parameters and state of one instantiated block. All tensors are leaves
/// owned by the network's registry.
struct PolyBlockParams {
  std::vector<Tensor> h;       // per step; CCP: h[0] is the base map
  std::vector<Tensor> j;       // NCP only
  std::vector<Tensor> bias;    // NCP with bias branch
  Tensor skip_proj;            // defined when the skip needs a projection
  std::vector<Tensor> rho;     // per dense input (constant 1.0 when not learnable)
  std::vector<Tensor> dense_proj;  // per dense input; defined when channels differ
  NormLayer phi_norm;
  NormLayer psi_norm;
};

namespace detail {

inline Tensor apply_linear(const Tensor& x, const Tensor& w, NetMode mode, int stride) {
  if (mode == NetMode::DenseMlp) return matmul(x, w);
  const int pad = (w.dim(2) - 1) / 2;
  return conv2d(x, w, stride, pad);
}

inline Tensor apply_bias(const Tensor& x, const Tensor& b, NetMode mode) {
  return mode == NetMode::DenseMlp ? add_rowvec(x, b) : add_chanvec(x, b);
}

/// Brings an earlier block output to the consuming Hadamard product's shape:
/// max-pooled to the target spatial size, 1×1-projected when widths differ,
/// then scaled by ρ.
inline Tensor adapt_dense_input(const Tensor& out_tau, const Tensor& proj, const Tensor& rho,
                                NetMode mode, int target_spatial) {
  Tensor d = out_tau;
  if (mode == NetMode::Conv) {
    const int src = d.dim(2);
    if (src != target_spatial) {
      if (target_spatial <= 0 || src % target_spatial != 0)
        throw DimensionError("dense connection cannot pool " + std::to_string(src) + " down to " +
                             std::to_string(target_spatial));
      const int f = src / target_spatial;
      d = max_pool2d(d, f, f);
    }
  }
  if (proj.defined()) d = apply_linear(d, proj, mode, 1);
  return mul_scalar(d, rho);
}

}  // namespace detail

/// One NCP block forward pass (dense connections included). `prev_outputs`
/// holds the raw outputs of every earlier block; only those named in
/// spec.dense_inputs are consumed.
inline Tensor ncp_block_forward(const Tensor& z, PolyBlockParams& params,
                                const PolyBlockSpec& spec,
                                const std::vector<Tensor>& prev_outputs, NetMode mode,
                                NormMode norm_mode, const std::string& name = "block") {
  try {
    Tensor x = z;
    for (int s = 0; s < spec.steps; ++s) {
      Tensor a = detail::apply_linear(z, params.h[s], mode, spec.stride);
      a = params.phi_norm.forward(a, norm_mode);
      Tensor b = detail::apply_linear(x, params.j[s], mode, s == 0 ? spec.stride : 1);
      b = params.psi_norm.forward(b, norm_mode);
      if (spec.use_bias_branch) b = detail::apply_bias(b, params.bias[s], mode);
      Tensor prod = hadamard(a, b);
      for (std::size_t t = 0; t < spec.dense_inputs.size(); ++t) {
        const Tensor& out_tau = prev_outputs.at(static_cast<std::size_t>(spec.dense_inputs[t]));
        Tensor d = detail::adapt_dense_input(out_tau, params.dense_proj[t], params.rho[t], mode,
                                             mode == NetMode::Conv ? a.dim(2) : 0);
        prod = hadamard(prod, d);
      }
      if (spec.use_skip) {
        Tensor skip = s == 0 ? (params.skip_proj.defined()
                                    ? detail::apply_linear(z, params.skip_proj, mode, spec.stride)
                                    : z)
                             : x;
        x = add(prod, skip);
      } else {
        x = prod;
      }
    }
    return x;
  } catch (const NumericError& e) {
    throw NumericError(name + ": " + e.what());
  }
}

/// One regularized-CCP block forward pass.
inline Tensor ccp_block_forward(const Tensor& z, PolyBlockParams& params,
                                const PolyBlockSpec& spec,
                                const std::vector<Tensor>& prev_outputs, NetMode mode,
                                NormMode norm_mode, const std::string& name = "block") {
  if (spec.variant != PolyVariant::CCP)
    throw ValidationError(name + ": ccp_block_forward requires a CCP spec");
  try {
    Tensor x = detail::apply_linear(z, params.h[0], mode, spec.stride);
    for (int n = 1; n < spec.steps; ++n) {
      Tensor a = detail::apply_linear(z, params.h[n], mode, spec.stride);
      a = params.phi_norm.forward(a, norm_mode);
      Tensor prod = hadamard(a, x);
      for (std::size_t t = 0; t < spec.dense_inputs.size(); ++t) {
        const Tensor& out_tau = prev_outputs.at(static_cast<std::size_t>(spec.dense_inputs[t]));
        Tensor d = detail::adapt_dense_input(out_tau, params.dense_proj[t], params.rho[t], mode,
                                             mode == NetMode::Conv ? a.dim(2) : 0);
        prod = hadamard(prod, d);
      }
      x = spec.use_skip ? add(prod, x) : prod;
    }
    return x;
  } catch (const NumericError& e) {
    throw NumericError(name + ": " + e.what());
  }
}

/// Dispatch on the block variant.
inline Tensor poly_block_forward(const Tensor& z, PolyBlockParams& params,
                                 const PolyBlockSpec& spec,
                                 const std::vector<Tensor>& prev_outputs, NetMode mode,
                                 NormMode norm_mode, const std::string& name = "block") {
  return spec.variant == PolyVariant::NCP
             ? ncp_block_forward(z, params, spec, prev_outputs, mode, norm_mode, name)
             : ccp_block_forward(z, params, spec, prev_outputs, mode, norm_mode, name);
}

}  // namespace polynet
