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

// Canonical desk-scale architectures used by the experiment configs and the
// acceptance runs: three conv stages of widths 16/32/64 on 32x32 inputs.

#pragma once

#include "polynet/network.hpp"
#include "polynet/trainer.hpp"

namespace polynet {

/// Regularized polynomial network: IBN(0.8) on the input branch of the first
/// two stages, batch norm in the final stage and on every second branch, max
/// pooling between stages, DropBlock after the pooled stage outputs, bias
/// branches on.
inline NetworkSpec desk_conv_regularized(int classes = 10) {
  NetworkSpec spec;
  spec.mode = NetMode::Conv;
  spec.input_channels = 3;
  spec.input_size = 32;
  spec.classes = classes;
  spec.pool_between = true;
  spec.dropblock = {true, 3, 0.9};
  const int widths[3] = {16, 32, 64};
  int in = 3;
  for (int stage = 0; stage < 3; ++stage) {
    PolyBlockSpec b;
    b.in = in;
    b.out = widths[stage];
    b.phi = stage < 2 ? NormKind::ibn(0.8, true) : NormKind::batch_norm(true);
    b.psi = NormKind::batch_norm(true);
    in = b.out;
    spec.blocks.push_back(b);
  }
  return spec;
}

/// Unregularized baseline: identity Φ/Ψ, no pooling (stride-2 stage
/// transitions instead), no DropBlock. Same widths and degree.
inline NetworkSpec desk_conv_plain(int classes = 10) {
  NetworkSpec spec;
  spec.mode = NetMode::Conv;
  spec.input_channels = 3;
  spec.input_size = 32;
  spec.classes = classes;
  spec.pool_between = false;
  const int widths[3] = {16, 32, 64};
  int in = 3;
  for (int stage = 0; stage < 3; ++stage) {
    PolyBlockSpec b;
    b.in = in;
    b.out = widths[stage];
    b.stride = stage == 0 ? 1 : 2;
    in = b.out;
    spec.blocks.push_back(b);
  }
  return spec;
}

/// Densely connected variant: every stage consumes the outputs of all
/// earlier stages in its Hadamard product (learnable ρ per connection),
/// whitening via iterative normalization on the second branch.
inline NetworkSpec desk_conv_dense(int classes = 10) {
  NetworkSpec spec = desk_conv_regularized(classes);
  for (std::size_t i = 1; i < spec.blocks.size(); ++i) {
    for (std::size_t t = 0; t < i; ++t)
      spec.blocks[i].dense_inputs.push_back(static_cast<int>(t));
    spec.blocks[i].psi = NormKind::iter_norm(5, true);
  }
  return spec;
}

/// Dense-mode xor solver: three degree-2 blocks (total degree 8), batch
/// normalization on both branches.
inline NetworkSpec desk_xor_mlp(int width = 16) {
  NetworkSpec spec;
  spec.mode = NetMode::DenseMlp;
  spec.input_dim = 2;
  spec.classes = 2;
  int in = 2;
  for (int i = 0; i < 3; ++i) {
    PolyBlockSpec b;
    b.in = in;
    b.out = width;
    b.phi = NormKind::batch_norm(true);
    b.psi = NormKind::batch_norm(true);
    in = width;
    spec.blocks.push_back(b);
  }
  return spec;
}

/// Table-style training configuration for the desk-scale image runs:
/// SGD 0.1, weight decay 5e-4, momentum 0.9, batch 64, 60 epochs,
/// milestones scaled to 20/30/40/50, crop padding 4 with flips.
inline TrainConfig desk_image_train_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.lr0 = 0.1;
  cfg.momentum = 0.9;
  cfg.weight_decay = 5e-4;
  cfg.batch_size = 64;
  cfg.epochs = 60;
  cfg.schedule.kind = ScheduleKind::MultiStep;
  cfg.schedule.milestones = {20, 30, 40, 50};
  cfg.schedule.factor = 0.1;
  cfg.label_smooth_eps = 0.1;
  cfg.seed = seed;
  cfg.augment_pad = 4;
  cfg.augment_flip = true;
  return cfg;
}

}  // namespace polynet
