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

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "polynet/data.hpp"
#include "polynet/network.hpp"
#include "polynet/ops.hpp"
#include "polynet/rng.hpp"
#include "polynet/smoothing.hpp"

namespace polynet {

enum class ScheduleKind { MultiStep, Exponential };

struct Schedule {
  ScheduleKind kind = ScheduleKind::MultiStep;
  std::vector<int> milestones{40, 60, 80, 100};
  Real factor = 0.1;   // MultiStep decay per milestone
  Real gamma = 0.92;   // Exponential decay per epoch

  void validate() const {
    for (std::size_t i = 1; i < milestones.size(); ++i)
      if (milestones[i] <= milestones[i - 1])
        throw ValidationError("schedule milestones must be strictly increasing");
  }
};

/// Optimizer and loop settings; defaults mirror the small-image recipe
/// (SGD 0.1, weight decay 5e-4, momentum 0.9, batch 128, 120 epochs,
/// milestones 40/60/80/100 at factor 0.1).
struct TrainConfig {
  Real lr0 = 0.1;
  Real momentum = 0.9;
  Real weight_decay = 5e-4;
  int batch_size = 128;
  int epochs = 120;
  Schedule schedule;
  Real label_smooth_eps = 0.1;
  std::uint64_t seed = 0;
  Real grad_clip = 0.0;  // 0 disables clipping
  int augment_pad = 0;   // conv-mode random crop padding
  bool augment_flip = false;

  void validate() const {
    if (lr0 <= 0) throw ValidationError("lr0 must be positive");
    if (momentum < 0 || momentum >= 1) throw ValidationError("momentum must lie in [0, 1)");
    if (weight_decay < 0) throw ValidationError("weight_decay must be >= 0");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (label_smooth_eps < 0 || label_smooth_eps >= 1)
      throw ValidationError("label_smooth_eps must lie in [0, 1)");
    schedule.validate();
  }
};

inline Real lr_at(const Schedule& s, Real lr0, int epoch) {
  if (s.kind == ScheduleKind::Exponential) return lr0 * std::pow(s.gamma, epoch);
  int hits = 0;
  for (int m : s.milestones)
    if (m <= epoch) ++hits;
  return lr0 * std::pow(s.factor, hits);
}

struct MetricsRow {
  int epoch = 0;
  Real train_loss = 0.0;
  Real train_acc = 0.0;
  Real test_acc = 0.0;
  Real lr = 0.0;
  Real wall_seconds = 0.0;
};

/// Momentum buffers aligned with the parameter registry.
struct SgdState {
  std::vector<std::vector<Real>> velocity;
};

/// Classical coupled-decay SGD step:
///   g <- grad + wd·param;  v <- momentum·v + g;  param <- param - lr·v.
inline void sgd_step(std::vector<Parameter>& params, SgdState& state, Real lr, Real momentum,
                     Real weight_decay) {
  if (state.velocity.empty()) state.velocity.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& t = params[i].tensor;
    if (!t.has_grad())
      throw UsageError("sgd_step: missing gradient for parameter " + params[i].name);
    auto& vel = state.velocity[i];
    if (vel.empty()) vel.assign(static_cast<std::size_t>(t.size()), 0.0);
    auto& values = t.mutable_values();
    const auto& grad = t.grad();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const Real g = grad[k] + weight_decay * values[k];
      vel[k] = momentum * vel[k] + g;
      values[k] -= lr * vel[k];
    }
  }
}

/// Inference pass: plain cross-entropy loss and top-1 accuracy. Touches no
/// parameter and no running statistic.
inline std::pair<Real, Real> evaluate(Network& net, const Dataset& ds) {
  if (ds.class_count < 2) throw ValidationError("evaluate needs a classification dataset");
  NoGradGuard ng;
  const int n = ds.size();
  const int chunk = 256;
  Real loss_sum = 0.0;
  std::int64_t correct = 0;
  for (int start = 0; start < n; start += chunk) {
    const int count = std::min(chunk, n - start);
    std::vector<int> idx(static_cast<std::size_t>(count));
    std::iota(idx.begin(), idx.end(), start);
    Tensor batch = gather_rows(ds.images, idx);
    Tensor logits = net.forward(batch, NormMode::Inference);
    std::vector<int> labels = gather_labels(ds.labels, idx);
    Tensor targets = label_smooth(labels, ds.class_count, 0.0);
    loss_sum += softmax_cross_entropy(logits, targets).item() * count;
    const int k = logits.dim(1);
    for (int i = 0; i < count; ++i) {
      int best = 0;
      for (int j = 1; j < k; ++j)
        if (logits[static_cast<std::int64_t>(i) * k + j] >
            logits[static_cast<std::int64_t>(i) * k + best])
          best = j;
      if (best == labels[static_cast<std::size_t>(i)]) ++correct;
    }
  }
  return {loss_sum / n, static_cast<Real>(correct) / n};
}

/// Full training loop: shuffled mini-batches, augmentation, smoothed
/// cross-entropy, backward, SGD with the configured schedule. One MetricsRow
/// per epoch; numerically deterministic given the seed. `eval_set` supplies
/// the per-epoch test accuracy (the training set is reused when absent).
inline std::vector<MetricsRow> fit(Network& net, const Dataset& train, const Dataset* eval_set,
                                   const TrainConfig& cfg) {
  cfg.validate();
  if (train.class_count < 2) throw ValidationError("fit needs a classification dataset");
  const int n = train.size();
  const int k = train.class_count;
  const bool conv = net.spec().mode == NetMode::Conv;
  std::vector<MetricsRow> rows;
  SgdState sgd;
  Real last_finite_loss = std::numeric_limits<Real>::quiet_NaN();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const Real lr = lr_at(cfg.schedule, cfg.lr0, epoch);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    auto shuffle_rng = make_rng(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    auto augment_rng = make_rng(cfg.seed, "augment", static_cast<std::uint64_t>(epoch));
    auto dropblock_rng = make_rng(cfg.seed, "dropblock", static_cast<std::uint64_t>(epoch));

    Real loss_sum = 0.0;
    std::int64_t correct = 0;
    int batch_index = 0;
    for (int start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      const int count = std::min(cfg.batch_size, n - start);
      std::vector<int> idx(order.begin() + start, order.begin() + start + count);
      Tensor batch = gather_rows(train.images, idx);
      if (conv && (cfg.augment_pad > 0 || cfg.augment_flip))
        batch = augment(batch, cfg.augment_pad, cfg.augment_flip, augment_rng);
      std::vector<int> labels = gather_labels(train.labels, idx);
      Tensor targets = label_smooth(labels, k, cfg.label_smooth_eps);

      net.zero_grad();
      Tensor loss;
      Tensor logits;
      try {
        logits = net.forward(batch, NormMode::Training, &dropblock_rng);
        loss = softmax_cross_entropy(logits, targets);
        if (!std::isfinite(loss.item())) throw NumericError("loss is not finite");
      } catch (const NumericError& e) {
        throw NumericError("training aborted at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index) + ": " + e.what() +
                           " (last finite loss " + std::to_string(last_finite_loss) + ")");
      }
      last_finite_loss = loss.item();
      backward(loss);
      if (cfg.grad_clip > 0) {
        Real norm2 = 0.0;
        for (auto& p : net.params())
          if (p.tensor.has_grad())
            for (Real g : p.tensor.grad()) norm2 += g * g;
        const Real norm = std::sqrt(norm2);
        if (norm > cfg.grad_clip) {
          const Real s = cfg.grad_clip / norm;
          for (auto& p : net.params())
            if (p.tensor.has_grad())
              for (Real& g : p.tensor.mutable_grad()) g *= s;
        }
      }
      sgd_step(net.params(), sgd, lr, cfg.momentum, cfg.weight_decay);

      loss_sum += loss.item() * count;
      const int kk = logits.dim(1);
      for (int i = 0; i < count; ++i) {
        int best = 0;
        for (int j = 1; j < kk; ++j)
          if (logits[static_cast<std::int64_t>(i) * kk + j] >
              logits[static_cast<std::int64_t>(i) * kk + best])
            best = j;
        if (best == labels[static_cast<std::size_t>(i)]) ++correct;
      }
    }

    Real eval_acc = 0.0;
    try {
      eval_acc = evaluate(net, eval_set ? *eval_set : train).second;
    } catch (const NumericError& e) {
      throw NumericError("training aborted at epoch " + std::to_string(epoch) +
                         " during evaluation: " + e.what() + " (last finite loss " +
                         std::to_string(last_finite_loss) + ")");
    }
    const auto t1 = std::chrono::steady_clock::now();
    MetricsRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / n;
    row.train_acc = static_cast<Real>(correct) / n;
    row.test_acc = eval_acc;
    row.lr = lr;
    row.wall_seconds = std::chrono::duration<Real>(t1 - t0).count();
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Metrics serialization
// ---------------------------------------------------------------------------

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "epoch,train_loss,train_acc,test_acc,lr,wall_seconds\n";
  char buf[256];
  for (const MetricsRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.6f\n", r.epoch, r.train_loss,
                  r.train_acc, r.test_acc, r.lr, r.wall_seconds);
    out += buf;
  }
  return out;
}

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << metrics_csv(rows);
}

}  // namespace polynet
