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

// Entry points behind the polynet command-line tool. Kept in the library so
// the exit-code contracts are directly testable.

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "polynet/checkpoint.hpp"
#include "polynet/config.hpp"
#include "polynet/data.hpp"
#include "polynet/network.hpp"
#include "polynet/trainer.hpp"
#include "polynet/verify_suites.hpp"

namespace polynet {

// Stable exit codes (documented in --help).
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,       // unexpected error
  kExitConfigError = 2,   // config parse/validation problem (names key and line)
  kExitDataError = 3,     // dataset missing or malformed
  kExitNumericAbort = 4,  // training loss became non-finite
  kExitVerifyFailed = 5,  // at least one verification oracle failed
};

inline const char* exit_codes_help() {
  return "exit codes: 0 success, 1 unexpected error, 2 config error, "
         "3 dataset error, 4 numeric abort during training, 5 verification failure";
}

struct CliOptions {
  std::string config_path;
  bool has_seed = false;
  std::uint64_t seed = 0;
  std::string data_root;     // overrides data.root (or POLYNET_DATA_ROOT)
  std::string out_dir;       // overrides output.dir
  int limit_per_class = -1;  // overrides data.limit_per_class when >= 0
  std::string format = "text";
};

namespace detail {

constexpr std::uint64_t kShapeCorpusSeed = 424242;  // corpus fixed across runs

struct LoadedData {
  Dataset train, test;
  bool has_test = false;
};

inline LoadedData load_for_config(const ExperimentConfig& cfg) {
  LoadedData out;
  const DataConfig& d = cfg.data;
  if (d.kind == "xor" || d.kind == "moons") {
    const SynthKind kind = d.kind == "xor" ? SynthKind::Xor : SynthKind::Moons;
    out.train = synth_dataset(kind, d.synth_n, d.synth_noise, derive_seed(cfg.train.seed, "data"));
    out.test = synth_dataset(kind, std::max(4, d.synth_n / 4), d.synth_noise,
                             derive_seed(cfg.train.seed, "data_test"));
    out.test.split = "test";
    out.has_test = true;
    return out;
  }
  if (d.kind == "cifar10" || d.kind == "shapes") {
    std::string root = d.root;
    if (d.kind == "shapes") {
      namespace fs = std::filesystem;
      if (root.empty()) root = cfg.output_dir + "/shape_data";
      if (!fs::exists(fs::path(root) / "data_batch_1.bin") &&
          !fs::exists(fs::path(root) / "cifar-10-batches-bin"))
        generate_shape_corpus(root, d.shapes_train_per_batch, d.shapes_test, kShapeCorpusSeed);
    }
    if (root.empty())
      throw FormatError("data.root is required for data.kind = " + d.kind);
    auto [train, test] = load_cifar10_dir(root);
    out.train = std::move(train);
    out.test = std::move(test);
    out.has_test = true;
  } else if (d.kind == "idx") {
    if (d.root.empty()) throw FormatError("data.root is required for data.kind = idx");
    namespace fs = std::filesystem;
    out.train = load_idx((fs::path(d.root) / d.idx_train_images).string(),
                         (fs::path(d.root) / d.idx_train_labels).string(), "train");
    out.test = load_idx((fs::path(d.root) / d.idx_test_images).string(),
                        (fs::path(d.root) / d.idx_test_labels).string(), "test");
    out.has_test = true;
  } else {
    throw ConfigError("unknown data.kind '" + d.kind + "'");
  }
  // standardization statistics from the training split only
  ChannelStats stats = compute_channel_stats(out.train);
  standardize(out.train, stats);
  standardize(out.test, stats);
  if (d.limit_per_class > 0)
    out.train = subsample_per_class(out.train, d.limit_per_class, derive_seed(cfg.train.seed, "limit"));
  return out;
}

inline void print_suite_rows(const std::vector<SuiteRow>& rows, const std::string& format,
                             std::ostream& os) {
  if (format == "csv") {
    os << "suite,name,pass,metric,detail\n";
    for (const auto& r : rows)
      os << r.suite << ',' << r.name << ',' << (r.pass ? "pass" : "FAIL") << ',' << r.metric
         << ",\"" << r.detail << "\"\n";
    return;
  }
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-12s %-38s %-5s %-12.3g %s\n", r.suite.c_str(),
                  r.name.c_str(), r.pass ? "pass" : "FAIL", r.metric, r.detail.c_str());
    os << buf;
  }
}

}  // namespace detail

/// `train` subcommand: build, fit, write metrics.csv + config.resolved +
/// final.ckpt into the output directory.
inline int run_train(const CliOptions& opts, std::ostream& os = std::cout) {
  ExperimentConfig cfg;
  try {
    cfg = load_experiment_config(opts.config_path);
    if (opts.has_seed) cfg.train.seed = opts.seed;
    if (!opts.data_root.empty()) cfg.data.root = opts.data_root;
    if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
    if (opts.limit_per_class >= 0) cfg.data.limit_per_class = opts.limit_per_class;
    if (cfg.data.root.empty()) {
      const char* env = std::getenv("POLYNET_DATA_ROOT");
      if (env) cfg.data.root = env;
    }
  } catch (const ConfigError& e) {
    os << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }

  try {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);

    detail::LoadedData data = detail::load_for_config(cfg);

    // mlp-mode synthetic data has no spatial dims to validate
    if (cfg.network.mode == NetMode::Conv) {
      if (data.train.images.ndim() != 4 || data.train.images.dim(1) != cfg.network.input_channels ||
          data.train.images.dim(2) != cfg.network.input_size) {
        os << "config error: network expects " << cfg.network.input_channels << "x"
           << cfg.network.input_size << "x" << cfg.network.input_size << " input, dataset is "
           << shape_str(data.train.images.shape()) << "\n";
        return kExitConfigError;
      }
    } else if (data.train.images.ndim() != 2 ||
               data.train.images.dim(1) != cfg.network.input_dim) {
      os << "config error: network expects input_dim " << cfg.network.input_dim
         << ", dataset is " << shape_str(data.train.images.shape()) << "\n";
      return kExitConfigError;
    }

    Dataset eval_view = data.has_test ? data.test : data.train;
    if (cfg.data.eval_limit > 0 && eval_view.class_count > 0) {
      const int per = std::max(1, cfg.data.eval_limit / eval_view.class_count);
      eval_view = subsample_per_class(eval_view, per, 7);
    }

    const std::string resolved_note =
        "resolved: train_count = " + std::to_string(data.train.size()) +
        ", eval_count = " + std::to_string(eval_view.size());
    {
      std::ofstream rc(fs::path(cfg.output_dir) / "config.resolved");
      rc << serialize_experiment_config(cfg, resolved_note);
    }

    Network net = build_network(cfg.network, cfg.init, cfg.train.seed);
    std::vector<MetricsRow> rows;
    try {
      rows = fit(net, data.train, &eval_view, cfg.train);
    } catch (const NumericError& e) {
      os << "numeric abort: " << e.what() << "\n";
      return kExitNumericAbort;
    }
    write_metrics_csv((fs::path(cfg.output_dir) / "metrics.csv").string(), rows);
    save_checkpoint((fs::path(cfg.output_dir) / "final.ckpt").string(), net);
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "train ok: epochs=%d train_acc=%.4f test_acc=%.4f params=%lld out=%s\n",
                  cfg.train.epochs, rows.back().train_acc, rows.back().test_acc,
                  static_cast<long long>(parameter_count(net)), cfg.output_dir.c_str());
    os << buf;
    return kExitOk;
  } catch (const ConfigError& e) {
    os << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const ValidationError& e) {
    os << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const FormatError& e) {
    os << "dataset error: " << e.what() << "\n";
    return kExitDataError;
  } catch (const std::exception& e) {
    os << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

/// `verify` subcommand: runs the selected oracle suite on the canonical tiny
/// configurations; exit 0 iff every row passes.
inline int run_verify(const std::string& suite, std::uint64_t seed, const std::string& format,
                      const std::string& out_dir, bool corrupt_backward = false,
                      std::ostream& os = std::cout) {
  try {
    std::vector<SuiteRow> rows;
    if (suite == "grad")
      rows = run_grad_suite(seed, corrupt_backward);
    else if (suite == "degree")
      rows = run_degree_suite(seed);
    else if (suite == "equivalence")
      rows = run_equivalence_suite(seed);
    else if (suite == "all") {
      rows = run_grad_suite(seed, corrupt_backward);
      for (auto& r : run_degree_suite(seed)) rows.push_back(r);
      for (auto& r : run_equivalence_suite(seed)) rows.push_back(r);
    } else {
      os << "config error: unknown suite '" << suite << "' (grad|degree|equivalence|all)\n";
      return kExitConfigError;
    }
    detail::print_suite_rows(rows, format, os);
    if (!out_dir.empty()) {
      namespace fs = std::filesystem;
      fs::create_directories(out_dir);
      std::ofstream csv(fs::path(out_dir) / "verify_report.csv");
      detail::print_suite_rows(rows, "csv", csv);
    }
    bool all = true;
    for (const auto& r : rows) all = all && r.pass;
    os << (all ? "verify: all checks passed\n" : "verify: FAILURES present\n");
    return all ? kExitOk : kExitVerifyFailed;
  } catch (const std::exception& e) {
    os << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

/// `degree` subcommand: symbolic degree report plus parameter count for the
/// configured network.
inline int run_degree_report(const CliOptions& opts, std::ostream& os = std::cout) {
  try {
    ExperimentConfig cfg = load_experiment_config(opts.config_path);
    if (opts.has_seed) cfg.train.seed = opts.seed;
    DegreeReport report = symbolic_degree(cfg.network);
    Network net = build_network(cfg.network, cfg.init, cfg.train.seed);
    if (opts.format == "csv") {
      os << "block,degree\n";
      for (std::size_t i = 0; i < report.per_block.size(); ++i)
        os << i + 1 << ',' << report.per_block[i] << "\n";
      os << "total," << report.total << "\n";
      os << "parameters," << parameter_count(net) << "\n";
    } else {
      os << "per-block:";
      for (long long d : report.per_block) os << ' ' << d;
      os << "\ntotal degree: " << report.total << "\n";
      os << "parameters: " << parameter_count(net) << "\n";
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    os << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const ValidationError& e) {
    os << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    os << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace polynet
