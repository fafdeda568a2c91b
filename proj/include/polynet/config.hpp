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

// Flat typed key-value experiment configuration with dotted section keys
// (train.lr0 = 0.1). Unknown keys are rejected; parsing a serialized
// resolved config reproduces the experiment bit-identically.

#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "polynet/common.hpp"
#include "polynet/data.hpp"
#include "polynet/network.hpp"
#include "polynet/trainer.hpp"

namespace polynet {

/// Configuration file problem (parse or semantic); distinct from dataset
/// format errors so the CLI can map them to different exit codes.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

class ConfigMap {
 public:
  static ConfigMap parse(const std::string& text) {
    ConfigMap map;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
      };
      std::string t = trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(t.substr(0, eq));
      const std::string value = trim(t.substr(eq + 1));
      if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
      if (map.entries_.count(key))
        throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
      map.entries_[key] = {value, lineno};
    }
    return map;
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.consumed = true;
    return it->second.value;
  }

  Real get_real(const std::string& key, Real fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.consumed = true;
    try {
      std::size_t pos = 0;
      const Real v = std::stod(it->second.value, &pos);
      if (pos != it->second.value.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw ConfigError(where(key) + ": '" + it->second.value + "' is not a number");
    }
  }

  int get_int(const std::string& key, int fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.consumed = true;
    try {
      std::size_t pos = 0;
      const long v = std::stol(it->second.value, &pos);
      if (pos != it->second.value.size()) throw std::invalid_argument("");
      return static_cast<int>(v);
    } catch (...) {
      throw ConfigError(where(key) + ": '" + it->second.value + "' is not an integer");
    }
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.consumed = true;
    try {
      std::size_t pos = 0;
      const std::uint64_t v = std::stoull(it->second.value, &pos);
      if (pos != it->second.value.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw ConfigError(where(key) + ": '" + it->second.value + "' is not an unsigned integer");
    }
  }

  bool get_bool(const std::string& key, bool fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.consumed = true;
    const std::string& v = it->second.value;
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(where(key) + ": '" + v + "' is not a boolean (true/false)");
  }

  std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.consumed = true;
    std::vector<int> out;
    std::istringstream ss(it->second.value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto b = item.find_first_not_of(" \t");
      if (b == std::string::npos) continue;
      const auto e = item.find_last_not_of(" \t");
      try {
        out.push_back(std::stoi(item.substr(b, e - b + 1)));
      } catch (...) {
        throw ConfigError(where(key) + ": '" + item + "' is not an integer");
      }
    }
    return out;
  }

  void reject_unconsumed() const {
    for (const auto& [key, entry] : entries_)
      if (!entry.consumed)
        throw ConfigError("unknown key '" + key + "' (line " + std::to_string(entry.line) + ")");
  }

 private:
  struct Entry {
    std::string value;
    int line = 0;
    bool consumed = false;
  };

  std::string where(const std::string& key) const {
    auto it = entries_.find(key);
    return "key '" + key + "' (line " + std::to_string(it->second.line) + ")";
  }

  std::map<std::string, Entry> entries_;
};

}  // namespace detail

struct DataConfig {
  std::string kind = "xor";  // cifar10 | shapes | idx | xor | moons
  std::string root;
  int limit_per_class = 0;  // 0: all
  int eval_limit = 0;       // 0: full test split for per-epoch accuracy
  int synth_n = 400;
  Real synth_noise = 0.1;
  int shapes_train_per_batch = 1000;
  int shapes_test = 2000;
  std::string idx_train_images = "train-images.idx";
  std::string idx_train_labels = "train-labels.idx";
  std::string idx_test_images = "test-images.idx";
  std::string idx_test_labels = "test-labels.idx";
};

struct ExperimentConfig {
  NetworkSpec network;
  InitSpec init;
  TrainConfig train;
  DataConfig data;
  std::string output_dir = "runs/out";
  std::string verify_suite = "all";
};

inline ExperimentConfig parse_experiment_config(const std::string& text) {
  detail::ConfigMap map = detail::ConfigMap::parse(text);
  ExperimentConfig cfg;

  const std::string mode = map.get_string("network.mode", "dense_mlp");
  if (mode == "dense_mlp")
    cfg.network.mode = NetMode::DenseMlp;
  else if (mode == "conv")
    cfg.network.mode = NetMode::Conv;
  else
    throw ConfigError("network.mode must be dense_mlp or conv, got '" + mode + "'");
  cfg.network.input_dim = map.get_int("network.input_dim", 0);
  cfg.network.input_channels = map.get_int("network.input_channels", 0);
  cfg.network.input_size = map.get_int("network.input_size", 0);
  cfg.network.classes = map.get_int("network.classes", 2);
  cfg.network.pool_between = map.get_bool("network.pool_between", false);
  cfg.network.dropblock.enabled = map.get_bool("network.dropblock", false);
  cfg.network.dropblock.block_size = map.get_int("network.dropblock_size", 3);
  cfg.network.dropblock.keep_prob = map.get_real("network.dropblock_keep", 0.9);
  cfg.network.relu_hybrid = map.get_bool("network.relu_hybrid", false);

  const bool affine = map.get_bool("network.norm_affine", true);
  const Real momentum = map.get_real("network.norm_momentum", 0.1);
  const Real eps = map.get_real("network.norm_eps", 1e-5);
  const Real ratio = map.get_real("network.ibn_ratio", 0.8);
  const int iters = map.get_int("network.iternorm_iterations", 5);
  auto parse_norm = [&](const std::string& value, const std::string& key) {
    NormKind k;
    k.kind = [&] {
      try {
        return parse_norm_kind(value);
      } catch (const ValidationError& e) {
        throw ConfigError(key + ": " + e.what());
      }
    }();
    k.affine = affine && k.kind != NormKindTag::Identity && k.kind != NormKindTag::MeanSubtract;
    k.momentum = momentum;
    k.eps = eps;
    k.ratio = ratio;
    k.iterations = iters;
    return k;
  };

  const int block_count = map.get_int("network.block_count", 0);
  if (block_count < 1) throw ConfigError("network.block_count must be >= 1");
  int incoming = cfg.network.mode == NetMode::DenseMlp ? cfg.network.input_dim
                                                       : cfg.network.input_channels;
  for (int i = 1; i <= block_count; ++i) {
    const std::string p = "network.block" + std::to_string(i) + ".";
    PolyBlockSpec b;
    const std::string variant = map.get_string(p + "variant", "ncp");
    if (variant == "ncp")
      b.variant = PolyVariant::NCP;
    else if (variant == "ccp")
      b.variant = PolyVariant::CCP;
    else
      throw ConfigError(p + "variant must be ncp or ccp");
    b.steps = map.get_int(p + "steps", b.variant == PolyVariant::NCP ? 1 : 2);
    b.in = incoming;
    b.out = map.get_int(p + "out", 0);
    if (b.out <= 0) throw ConfigError(p + "out must be a positive width");
    b.stride = map.get_int(p + "stride", 1);
    b.ksize = map.get_int(p + "ksize", 3);
    b.phi = parse_norm(map.get_string(p + "phi", "identity"), p + "phi");
    b.psi = parse_norm(map.get_string(p + "psi", "identity"), p + "psi");
    b.use_bias_branch =
        map.get_bool(p + "bias_branch", b.variant == PolyVariant::NCP);
    b.rho_learnable = map.get_bool(p + "rho_learnable", true);
    for (int t : map.get_int_list(p + "dense_inputs", {})) {
      if (t < 1 || t > block_count)
        throw ConfigError(p + "dense_inputs: block index " + std::to_string(t) + " out of range");
      b.dense_inputs.push_back(t - 1);  // config uses 1-based block numbers
    }
    incoming = b.out;
    cfg.network.blocks.push_back(b);
  }

  const std::string init_kind = map.get_string("init.kind", "zero_mean");
  try {
    cfg.init.kind = parse_init_kind(init_kind);
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("init.kind: ") + e.what());
  }
  cfg.init.D = map.get_real("init.d", 16.0);

  cfg.train.lr0 = map.get_real("train.lr0", 0.1);
  cfg.train.momentum = map.get_real("train.momentum", 0.9);
  cfg.train.weight_decay = map.get_real("train.weight_decay", 5e-4);
  cfg.train.batch_size = map.get_int("train.batch_size", 128);
  cfg.train.epochs = map.get_int("train.epochs", 120);
  const std::string sched = map.get_string("train.schedule", "multistep");
  if (sched == "multistep")
    cfg.train.schedule.kind = ScheduleKind::MultiStep;
  else if (sched == "exponential")
    cfg.train.schedule.kind = ScheduleKind::Exponential;
  else
    throw ConfigError("train.schedule must be multistep or exponential");
  cfg.train.schedule.milestones = map.get_int_list("train.milestones", {40, 60, 80, 100});
  cfg.train.schedule.factor = map.get_real("train.factor", 0.1);
  cfg.train.schedule.gamma = map.get_real("train.gamma", 0.92);
  cfg.train.label_smooth_eps = map.get_real("train.label_smooth_eps", 0.1);
  cfg.train.seed = map.get_u64("train.seed", 0);
  cfg.train.grad_clip = map.get_real("train.grad_clip", 0.0);
  cfg.train.augment_pad = map.get_int("train.augment_pad", 0);
  cfg.train.augment_flip = map.get_bool("train.augment_flip", false);

  cfg.data.kind = map.get_string("data.kind", "xor");
  cfg.data.root = map.get_string("data.root", "");
  cfg.data.limit_per_class = map.get_int("data.limit_per_class", 0);
  cfg.data.eval_limit = map.get_int("data.eval_limit", 0);
  cfg.data.synth_n = map.get_int("data.synth_n", 400);
  cfg.data.synth_noise = map.get_real("data.synth_noise", 0.1);
  cfg.data.shapes_train_per_batch = map.get_int("data.shapes_train_per_batch", 1000);
  cfg.data.shapes_test = map.get_int("data.shapes_test", 2000);
  cfg.data.idx_train_images = map.get_string("data.idx_train_images", cfg.data.idx_train_images);
  cfg.data.idx_train_labels = map.get_string("data.idx_train_labels", cfg.data.idx_train_labels);
  cfg.data.idx_test_images = map.get_string("data.idx_test_images", cfg.data.idx_test_images);
  cfg.data.idx_test_labels = map.get_string("data.idx_test_labels", cfg.data.idx_test_labels);

  cfg.output_dir = map.get_string("output.dir", "runs/out");
  cfg.verify_suite = map.get_string("verify.suite", "all");

  map.reject_unconsumed();

  try {
    cfg.network.validate();
    cfg.train.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

namespace detail {

inline std::string real_str(Real v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// Serializes a fully resolved config; parsing it back reproduces the
/// experiment exactly. Keys are emitted in a fixed order.
inline std::string serialize_experiment_config(const ExperimentConfig& cfg,
                                               const std::string& comment = "") {
  std::ostringstream out;
  if (!comment.empty()) out << "# " << comment << "\n";
  out << "network.mode = " << (cfg.network.mode == NetMode::DenseMlp ? "dense_mlp" : "conv")
      << "\n";
  out << "network.input_dim = " << cfg.network.input_dim << "\n";
  out << "network.input_channels = " << cfg.network.input_channels << "\n";
  out << "network.input_size = " << cfg.network.input_size << "\n";
  out << "network.classes = " << cfg.network.classes << "\n";
  out << "network.pool_between = " << (cfg.network.pool_between ? "true" : "false") << "\n";
  out << "network.dropblock = " << (cfg.network.dropblock.enabled ? "true" : "false") << "\n";
  out << "network.dropblock_size = " << cfg.network.dropblock.block_size << "\n";
  out << "network.dropblock_keep = " << detail::real_str(cfg.network.dropblock.keep_prob) << "\n";
  out << "network.relu_hybrid = " << (cfg.network.relu_hybrid ? "true" : "false") << "\n";
  const NormKind* probe = nullptr;
  for (const auto& b : cfg.network.blocks) {
    if (b.phi.kind != NormKindTag::Identity && b.phi.kind != NormKindTag::MeanSubtract)
      probe = &b.phi;
    if (!probe && b.psi.kind != NormKindTag::Identity && b.psi.kind != NormKindTag::MeanSubtract)
      probe = &b.psi;
    if (probe) break;
  }
  out << "network.norm_affine = " << (probe ? (probe->affine ? "true" : "false") : "true") << "\n";
  out << "network.norm_momentum = " << detail::real_str(probe ? probe->momentum : 0.1) << "\n";
  out << "network.norm_eps = " << detail::real_str(probe ? probe->eps : 1e-5) << "\n";
  out << "network.ibn_ratio = " << detail::real_str(probe ? probe->ratio : 0.8) << "\n";
  out << "network.iternorm_iterations = " << (probe ? probe->iterations : 5) << "\n";
  out << "network.block_count = " << cfg.network.blocks.size() << "\n";
  for (std::size_t i = 0; i < cfg.network.blocks.size(); ++i) {
    const PolyBlockSpec& b = cfg.network.blocks[i];
    const std::string p = "network.block" + std::to_string(i + 1) + ".";
    out << p << "variant = " << (b.variant == PolyVariant::NCP ? "ncp" : "ccp") << "\n";
    out << p << "steps = " << b.steps << "\n";
    out << p << "out = " << b.out << "\n";
    out << p << "stride = " << b.stride << "\n";
    out << p << "ksize = " << b.ksize << "\n";
    out << p << "phi = " << norm_kind_name(b.phi.kind) << "\n";
    out << p << "psi = " << norm_kind_name(b.psi.kind) << "\n";
    out << p << "bias_branch = " << (b.use_bias_branch ? "true" : "false") << "\n";
    out << p << "rho_learnable = " << (b.rho_learnable ? "true" : "false") << "\n";
    out << p << "dense_inputs = ";
    for (std::size_t t = 0; t < b.dense_inputs.size(); ++t)
      out << (t ? "," : "") << b.dense_inputs[t] + 1;
    out << "\n";
  }
  out << "init.kind = " << init_kind_name(cfg.init.kind) << "\n";
  out << "init.d = " << detail::real_str(cfg.init.D) << "\n";
  out << "train.lr0 = " << detail::real_str(cfg.train.lr0) << "\n";
  out << "train.momentum = " << detail::real_str(cfg.train.momentum) << "\n";
  out << "train.weight_decay = " << detail::real_str(cfg.train.weight_decay) << "\n";
  out << "train.batch_size = " << cfg.train.batch_size << "\n";
  out << "train.epochs = " << cfg.train.epochs << "\n";
  out << "train.schedule = "
      << (cfg.train.schedule.kind == ScheduleKind::MultiStep ? "multistep" : "exponential")
      << "\n";
  out << "train.milestones = ";
  for (std::size_t i = 0; i < cfg.train.schedule.milestones.size(); ++i)
    out << (i ? "," : "") << cfg.train.schedule.milestones[i];
  out << "\n";
  out << "train.factor = " << detail::real_str(cfg.train.schedule.factor) << "\n";
  out << "train.gamma = " << detail::real_str(cfg.train.schedule.gamma) << "\n";
  out << "train.label_smooth_eps = " << detail::real_str(cfg.train.label_smooth_eps) << "\n";
  out << "train.seed = " << cfg.train.seed << "\n";
  out << "train.grad_clip = " << detail::real_str(cfg.train.grad_clip) << "\n";
  out << "train.augment_pad = " << cfg.train.augment_pad << "\n";
  out << "train.augment_flip = " << (cfg.train.augment_flip ? "true" : "false") << "\n";
  out << "data.kind = " << cfg.data.kind << "\n";
  out << "data.root = " << cfg.data.root << "\n";
  out << "data.limit_per_class = " << cfg.data.limit_per_class << "\n";
  out << "data.eval_limit = " << cfg.data.eval_limit << "\n";
  out << "data.synth_n = " << cfg.data.synth_n << "\n";
  out << "data.synth_noise = " << detail::real_str(cfg.data.synth_noise) << "\n";
  out << "data.shapes_train_per_batch = " << cfg.data.shapes_train_per_batch << "\n";
  out << "data.shapes_test = " << cfg.data.shapes_test << "\n";
  out << "data.idx_train_images = " << cfg.data.idx_train_images << "\n";
  out << "data.idx_train_labels = " << cfg.data.idx_train_labels << "\n";
  out << "data.idx_test_images = " << cfg.data.idx_test_images << "\n";
  out << "data.idx_test_labels = " << cfg.data.idx_test_labels << "\n";
  out << "output.dir = " << cfg.output_dir << "\n";
  out << "verify.suite = " << cfg.verify_suite << "\n";
  return out.str();
}

}  // namespace polynet
