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
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "polynet/blocks.hpp"
#include "polynet/common.hpp"
#include "polynet/degree.hpp"
#include "polynet/dropblock.hpp"
#include "polynet/init.hpp"
#include "polynet/rng.hpp"
#include "polynet/tensor.hpp"

namespace polynet {

struct DropBlockSpec {
  bool enabled = false;
  int block_size = 3;
  Real keep_prob = 0.9;
};

/// Whole-network description: a product of polynomial blocks plus the
/// classifier head x = B x_N + θ.
struct NetworkSpec {
  NetMode mode = NetMode::DenseMlp;
  int input_dim = 0;       // dense_mlp
  int input_channels = 0;  // conv
  int input_size = 0;      // conv, square input
  int classes = 2;
  std::vector<PolyBlockSpec> blocks;
  bool pool_between = false;      // max pool 2/2 after each block except the last
  DropBlockSpec dropblock;        // applied after each block except the last (conv)
  bool relu_hybrid = false;       // comparison toggle; makes the model non-polynomial

  int input_width() const { return mode == NetMode::DenseMlp ? input_dim : input_channels; }

  void validate() const {
    if (blocks.empty()) throw ValidationError("network needs at least one block");
    if (classes < 2) throw ValidationError("network needs at least 2 classes");
    if (mode == NetMode::DenseMlp) {
      if (input_dim <= 0) throw ValidationError("dense_mlp mode needs input_dim > 0");
      if (pool_between) throw ValidationError("pooling between blocks applies to conv mode only");
      if (dropblock.enabled) throw ValidationError("dropblock applies to conv mode only");
    } else {
      if (input_channels <= 0 || input_size <= 0)
        throw ValidationError("conv mode needs input_channels and input_size > 0");
    }
    int width = input_width();
    int spatial = input_size;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const PolyBlockSpec& b = blocks[i];
      b.validate(static_cast<int>(i), mode);
      if (b.in != width)
        throw ValidationError("block " + std::to_string(i + 1) + " input width " +
                              std::to_string(b.in) + " does not match incoming " +
                              std::to_string(width));
      width = b.out;
      if (mode == NetMode::Conv) {
        const int pad = (b.ksize - 1) / 2;
        spatial = (spatial + 2 * pad - b.ksize) / b.stride + 1;
        if (spatial < 1)
          throw ValidationError("block " + std::to_string(i + 1) + " exhausts the spatial extent");
        if (i + 1 < blocks.size() && pool_between) {
          if (spatial < 2)
            throw ValidationError("no spatial extent left to pool after block " +
                                  std::to_string(i + 1));
          spatial /= 2;
        }
        if (dropblock.enabled) {
          if (dropblock.block_size < 1 || dropblock.keep_prob <= 0 || dropblock.keep_prob > 1)
            throw ValidationError("invalid dropblock configuration");
        }
      }
    }
  }
};

/// Built model: parameter registry, per-block layers, forward pass.
class Network {
 public:
  Network() = default;

  Tensor forward(const Tensor& input, NormMode norm_mode,
                 std::mt19937_64* dropblock_rng = nullptr) {
    return forward_impl(input, norm_mode, dropblock_rng, -1, true);
  }

  /// Raw output of block `upto` (1-based count, no pooling/head); oracle hook.
  Tensor forward_blocks(const Tensor& input, int upto, NormMode norm_mode) {
    return forward_impl(input, norm_mode, nullptr, upto, false);
  }

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }

  Tensor* find_param(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second].tensor;
  }

  const NetworkSpec& spec() const { return spec_; }
  int block_count() const { return static_cast<int>(blocks_.size()); }
  PolyBlockParams& block(int i) { return blocks_[static_cast<std::size_t>(i)]; }
  Tensor& head_weight() { return head_b_; }
  Tensor& head_bias() { return head_theta_; }

  /// Named non-trainable state (normalization running statistics).
  std::vector<std::pair<std::string, std::vector<Real>*>> buffers() {
    std::vector<std::pair<std::string, std::vector<Real>*>> out;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const std::string prefix = "block" + std::to_string(i + 1);
      blocks_[i].phi_norm.collect_buffers(prefix + ".phi", out);
      blocks_[i].psi_norm.collect_buffers(prefix + ".psi", out);
    }
    return out;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  DegreeReport degree_report() const {
    return symbolic_degree_of_blocks(spec_.blocks, spec_.relu_hybrid);
  }

  friend Network build_network(const NetworkSpec&, const InitSpec&, std::uint64_t);

 private:
  Tensor forward_impl(const Tensor& input, NormMode norm_mode, std::mt19937_64* dropblock_rng,
                      int upto, bool with_head) {
    const int stop = upto < 0 ? static_cast<int>(blocks_.size()) : upto;
    Tensor x = input;
    std::vector<Tensor> raw_outputs;
    for (int i = 0; i < stop; ++i) {
      const PolyBlockSpec& bs = spec_.blocks[static_cast<std::size_t>(i)];
      x = poly_block_forward(x, blocks_[static_cast<std::size_t>(i)], bs, raw_outputs,
                             spec_.mode, norm_mode, "block" + std::to_string(i + 1));
      raw_outputs.push_back(x);
      if (upto >= 0 && i + 1 == stop) return x;
      if (spec_.relu_hybrid) x = relu(x);
      if (i + 1 < static_cast<int>(blocks_.size()) && spec_.mode == NetMode::Conv) {
        if (spec_.pool_between) x = max_pool2d(x, 2, 2);
        if (spec_.dropblock.enabled && norm_mode == NormMode::Training) {
          if (!dropblock_rng)
            throw UsageError("training forward with dropblock enabled needs an rng");
          x = dropblock(x, spec_.dropblock.block_size, spec_.dropblock.keep_prob, true,
                        *dropblock_rng);
        }
      }
    }
    if (!with_head) return x;
    if (spec_.mode == NetMode::Conv) x = global_avg_pool(x);
    return add_rowvec(matmul(x, head_b_), head_theta_);
  }

  Tensor& add_param(const std::string& name, Tensor t) {
    if (index_.count(name)) throw ValidationError("duplicate parameter name " + name);
    t.set_requires_grad(true);
    index_[name] = params_.size();
    params_.push_back(Parameter{name, std::move(t)});
    return params_.back().tensor;
  }

  NetworkSpec spec_;
  std::vector<PolyBlockParams> blocks_;
  Tensor head_b_, head_theta_;
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

/// Element count across the registry.
inline std::int64_t parameter_count(const Network& net) {
  std::int64_t n = 0;
  for (const auto& p : net.params()) n += p.tensor.size();
  return n;
}

/// Instantiates every parameter of the spec (deterministic in the seed),
/// wires blocks sequentially and registers unique parameter names.
inline Network build_network(const NetworkSpec& spec, const InitSpec& init, std::uint64_t seed) {
  spec.validate();
  Network net;
  net.spec_ = spec;
  const NetMode mode = spec.mode;

  auto draw = [&](const std::string& name, const Shape& shape, std::int64_t m_n) {
    auto rng = make_rng(seed, "init." + name);
    return Tensor(shape, init_values(shape, init, m_n, rng));
  };

  for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
    const PolyBlockSpec& b = spec.blocks[static_cast<std::size_t>(i)];
    const std::string prefix = "block" + std::to_string(i + 1);
    PolyBlockParams params;

    auto map_shape = [&](int cin, int cout, int k) {
      return mode == NetMode::DenseMlp ? Shape{cin, cout} : Shape{cout, cin, k, k};
    };

    if (b.variant == PolyVariant::NCP) {
      for (int s = 0; s < b.steps; ++s) {
        const Shape h_shape = map_shape(b.in, b.out, b.ksize);
        const Shape j_shape = map_shape(s == 0 ? b.in : b.out, b.out, b.ksize);
        // M_n: element count of the whole step term (H, J and the collapsed
        // bias vector together).
        std::int64_t m_n = numel(h_shape) + numel(j_shape) + (b.use_bias_branch ? b.out : 0);
        const std::string sn = std::to_string(s + 1);
        params.h.push_back(net.add_param(prefix + ".H" + sn, draw(prefix + ".H" + sn, h_shape, m_n)));
        params.j.push_back(net.add_param(prefix + ".J" + sn, draw(prefix + ".J" + sn, j_shape, m_n)));
        if (b.use_bias_branch)
          params.bias.push_back(net.add_param(prefix + ".b" + sn, Tensor(Shape{b.out}, 0.0)));
      }
      const bool needs_proj = b.in != b.out || (mode == NetMode::Conv && b.stride != 1);
      if (b.use_skip && needs_proj) {
        const Shape s_shape = map_shape(b.in, b.out, 1);
        params.skip_proj =
            net.add_param(prefix + ".skip", draw(prefix + ".skip", s_shape, numel(s_shape)));
      }
    } else {
      for (int s = 0; s < b.steps; ++s) {
        const Shape h_shape = map_shape(b.in, b.out, b.ksize);
        const std::string sn = std::to_string(s + 1);
        params.h.push_back(net.add_param(prefix + ".H" + sn,
                                         draw(prefix + ".H" + sn, h_shape, numel(h_shape))));
      }
    }

    for (std::size_t t = 0; t < b.dense_inputs.size(); ++t) {
      const int tau = b.dense_inputs[t];
      const PolyBlockSpec& src = spec.blocks[static_cast<std::size_t>(tau)];
      const std::string dn = prefix + ".dense" + std::to_string(t + 1);
      if (src.out != b.out) {
        const Shape p_shape = map_shape(src.out, b.out, 1);
        params.dense_proj.push_back(
            net.add_param(dn + ".proj", draw(dn + ".proj", p_shape, numel(p_shape))));
      } else {
        params.dense_proj.push_back(Tensor());
      }
      if (b.rho_learnable) {
        params.rho.push_back(net.add_param(dn + ".rho", Tensor(Shape{1}, 1.0)));
      } else {
        params.rho.push_back(Tensor(Shape{1}, 1.0));
      }
    }

    params.phi_norm = NormLayer(b.phi, b.out);
    params.psi_norm = NormLayer(b.psi, b.out);
    if (params.phi_norm.has_affine()) {
      net.add_param(prefix + ".phi.gamma", params.phi_norm.gamma());
      net.add_param(prefix + ".phi.beta", params.phi_norm.beta());
    }
    if (params.psi_norm.has_affine()) {
      net.add_param(prefix + ".psi.gamma", params.psi_norm.gamma());
      net.add_param(prefix + ".psi.beta", params.psi_norm.beta());
    }

    net.blocks_.push_back(std::move(params));
  }

  const int feat = spec.blocks.back().out;
  const Shape b_shape{feat, spec.classes};
  net.head_b_ = net.add_param("head.B", draw("head.B", b_shape, numel(b_shape)));
  net.head_theta_ = net.add_param("head.theta", Tensor(Shape{spec.classes}, 0.0));
  return net;
}

/// Degree report straight from a spec (no build needed).
inline DegreeReport symbolic_degree(const NetworkSpec& spec) {
  spec.validate();
  return symbolic_degree_of_blocks(spec.blocks, spec.relu_hybrid);
}

}  // namespace polynet
