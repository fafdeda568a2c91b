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

#include <CLI11.hpp>

#include "polynet/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"polynet: polynomial-network training and verification"};
  app.footer(polynet::exit_codes_help());
  app.require_subcommand(1);

  polynet::CliOptions opts;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* c = cmd->add_option("--config", opts.config_path, "experiment config file");
    if (needs_config) c->required();
    cmd->add_option("--seed", seed, "master seed (overrides train.seed)")
        ->each([&](const std::string&) { opts.has_seed = true; });
    cmd->add_option("--format", opts.format, "output format: text or csv")
        ->check(CLI::IsMember({"text", "csv"}));
  };

  CLI::App* train = app.add_subcommand("train", "train a network from a config file");
  add_common(train, true);
  train->add_option("--data-root", opts.data_root,
                    "dataset root (fallback: POLYNET_DATA_ROOT environment variable)");
  train->add_option("--out", opts.out_dir, "output directory (overrides output.dir)");
  train->add_option("--limit-per-class", opts.limit_per_class,
                    "cap training examples per class (overrides data.limit_per_class)");

  std::string suite = "all";
  std::string verify_out;
  bool corrupt = false;
  CLI::App* verify = app.add_subcommand("verify", "run the verification oracle suites");
  verify->add_option("--suite", suite, "grad | degree | equivalence | all");
  verify->add_option("--seed", seed, "master seed")
      ->each([&](const std::string&) { opts.has_seed = true; });
  verify->add_option("--format", opts.format, "output format: text or csv")
      ->check(CLI::IsMember({"text", "csv"}));
  verify->add_option("--out", verify_out, "directory for verify_report.csv");
  verify->add_flag("--corrupt-backward", corrupt,
                   "negative control: flip one backward sign; all gradient checks must fail");

  CLI::App* degree = app.add_subcommand("degree", "print the symbolic degree report");
  add_common(degree, true);

  CLI11_PARSE(app, argc, argv);
  if (opts.has_seed) opts.seed = seed;

  if (train->parsed()) return polynet::run_train(opts);
  if (verify->parsed())
    return polynet::run_verify(suite, opts.has_seed ? seed : 2026, opts.format, verify_out,
                               corrupt);
  return polynet::run_degree_report(opts);
}
