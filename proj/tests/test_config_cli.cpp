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

#include <gtest/gtest.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "polynet/cli.hpp"
#include "polynet/presets.hpp"

using namespace polynet;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    dir_ = fs::temp_directory_path() / ("polynet_cli_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter_++));
    fs::create_directories(dir_);
  }
  ~TempDir() { fs::remove_all(dir_); }
  std::string file(const std::string& name, const std::string& content) const {
    const std::string p = (dir_ / name).string();
    std::ofstream out(p);
    out << content;
    return p;
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string root() const { return dir_.string(); }

 private:
  fs::path dir_;
  static inline int counter_ = 0;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kXorConfig = R"(
# tiny xor experiment
network.mode = dense_mlp
network.input_dim = 2
network.classes = 2
network.block_count = 2
network.block1.out = 8
network.block1.phi = bn
network.block1.psi = bn
network.block2.out = 8
network.block2.phi = bn
network.block2.psi = bn
train.lr0 = 0.05
train.batch_size = 32
train.epochs = 3
train.milestones = 40,60
train.label_smooth_eps = 0.0
train.seed = 5
data.kind = xor
data.synth_n = 96
)";

std::string chain_config(int blocks, bool dense) {
  std::ostringstream os;
  os << "network.mode = dense_mlp\nnetwork.input_dim = 2\nnetwork.classes = 2\n";
  os << "network.block_count = " << blocks << "\n";
  for (int i = 1; i <= blocks; ++i) {
    os << "network.block" << i << ".out = 4\n";
    if (dense && i > 1) {
      os << "network.block" << i << ".dense_inputs = ";
      for (int t = 1; t < i; ++t) os << (t > 1 ? "," : "") << t;
      os << "\n";
    }
  }
  os << "data.kind = xor\n";
  return os.str();
}

}  // namespace

TEST(Config, ParsesValuesAndDefaults) {
  ExperimentConfig cfg = parse_experiment_config(kXorConfig);
  EXPECT_EQ(cfg.network.blocks.size(), 2u);
  EXPECT_EQ(cfg.network.blocks[0].out, 8);
  EXPECT_EQ(cfg.network.blocks[1].in, 8);
  EXPECT_EQ(cfg.train.batch_size, 32);
  EXPECT_EQ(cfg.train.schedule.milestones, (std::vector<int>{40, 60}));
  EXPECT_DOUBLE_EQ(cfg.train.momentum, 0.9);       // default
  EXPECT_DOUBLE_EQ(cfg.train.weight_decay, 5e-4);  // default
  EXPECT_EQ(cfg.data.synth_n, 96);
}

TEST(Config, RejectsUnknownKeyWithLine) {
  const std::string bad = std::string(kXorConfig) + "train.lr_typo = 3\n";
  try {
    parse_experiment_config(bad);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("train.lr_typo"), std::string::npos);
    EXPECT_NE(msg.find("line"), std::string::npos);
  }
}

TEST(Config, RejectsDuplicatesAndBadTypes) {
  EXPECT_THROW(parse_experiment_config("a = 1\na = 2\n"), ConfigError);
  EXPECT_THROW(parse_experiment_config(std::string(kXorConfig) + "train.grad_clip = soup\n"),
               ConfigError);
  EXPECT_THROW(parse_experiment_config("network.block_count = 0\ndata.kind = xor\n"), ConfigError);
}

TEST(Config, SerializeParseIsAFixedPoint) {
  ExperimentConfig cfg = parse_experiment_config(kXorConfig);
  const std::string once = serialize_experiment_config(cfg);
  ExperimentConfig cfg2 = parse_experiment_config(once);
  const std::string twice = serialize_experiment_config(cfg2);
  EXPECT_EQ(once, twice);
}

TEST(Config, DenseInputsUseOneBasedBlockNumbers) {
  ExperimentConfig cfg = parse_experiment_config(chain_config(3, true));
  EXPECT_EQ(cfg.network.blocks[2].dense_inputs, (std::vector<int>{0, 1}));
}

TEST(RunTrain, WritesMetricsResolvedConfigAndCheckpoint) {
  TempDir tmp;
  CliOptions opts;
  opts.config_path = tmp.file("exp.cfg", kXorConfig);
  opts.out_dir = tmp.path("out");
  std::ostringstream os;
  EXPECT_EQ(run_train(opts, os), kExitOk) << os.str();
  const std::string metrics = read_file(tmp.path("out/metrics.csv"));
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 4);  // header + 3 epochs
  EXPECT_EQ(metrics.find("epoch,train_loss,train_acc,test_acc,lr,wall_seconds"), 0u);
  EXPECT_TRUE(fs::exists(tmp.path("out/config.resolved")));
  EXPECT_TRUE(fs::exists(tmp.path("out/final.ckpt")));
  // resolved config re-parses and pins the output dir override
  ExperimentConfig resolved = load_experiment_config(tmp.path("out/config.resolved"));
  EXPECT_EQ(resolved.output_dir, tmp.path("out"));
  EXPECT_EQ(resolved.train.seed, 5u);
}

TEST(RunTrain, MissingDatasetPathNamesTheKey) {
  TempDir tmp;
  CliOptions opts;
  std::string cfg = std::string(kXorConfig);
  cfg.replace(cfg.find("data.kind = xor"), 15, "data.kind = cifar10");
  opts.config_path = tmp.file("exp.cfg", cfg);
  opts.out_dir = tmp.path("out");
  std::ostringstream os;
  // no data.root, no --data-root, env cleared for the call
  unsetenv("POLYNET_DATA_ROOT");
  EXPECT_EQ(run_train(opts, os), kExitDataError);
  EXPECT_NE(os.str().find("data.root"), std::string::npos);
}

TEST(RunTrain, SeedOverrideAndReproducibleMetrics) {
  TempDir tmp;
  CliOptions opts;
  opts.config_path = tmp.file("exp.cfg", kXorConfig);
  opts.out_dir = tmp.path("a");
  opts.has_seed = true;
  opts.seed = 901;
  std::ostringstream os;
  ASSERT_EQ(run_train(opts, os), kExitOk);
  // rerun from the resolved config into a second directory
  CliOptions opts2;
  opts2.config_path = tmp.path("a/config.resolved");
  opts2.out_dir = tmp.path("b");
  ASSERT_EQ(run_train(opts2, os), kExitOk);
  auto strip_wall = [](const std::string& csv) {
    std::istringstream in(csv);
    std::string line, out;
    while (std::getline(in, line)) {
      const auto comma = line.rfind(',');
      out += line.substr(0, comma) + "\n";
    }
    return out;
  };
  const std::string a = read_file(tmp.path("a/metrics.csv"));
  const std::string b = read_file(tmp.path("b/metrics.csv"));
  EXPECT_EQ(strip_wall(a), strip_wall(b));
}

TEST(RunTrain, LimitPerClassIsRecordedInResolvedConfig) {
  TempDir tmp;
  const std::string cfg = R"(
network.mode = conv
network.input_channels = 3
network.input_size = 32
network.classes = 10
network.block_count = 1
network.block1.out = 4
network.block1.phi = bn
network.block1.psi = bn
train.lr0 = 0.05
train.batch_size = 16
train.epochs = 1
train.label_smooth_eps = 0.1
train.seed = 3
data.kind = shapes
data.shapes_train_per_batch = 20
data.shapes_test = 20
data.eval_limit = 20
)";
  CliOptions opts;
  opts.config_path = tmp.file("exp.cfg", cfg);
  opts.out_dir = tmp.path("out");
  opts.limit_per_class = 5;
  std::ostringstream os;
  ASSERT_EQ(run_train(opts, os), kExitOk) << os.str();
  const std::string resolved = read_file(tmp.path("out/config.resolved"));
  EXPECT_NE(resolved.find("data.limit_per_class = 5"), std::string::npos);
  EXPECT_NE(resolved.find("train_count = 50"), std::string::npos);
}

TEST(RunVerify, AllSuitesPassAndNegativeControlFails) {
  std::ostringstream os;
  EXPECT_EQ(run_verify("degree", 1, "text", "", false, os), kExitOk);
  std::ostringstream os2;
  EXPECT_EQ(run_verify("grad", 1, "csv", "", true, os2), kExitVerifyFailed);
  EXPECT_NE(os2.str().find("FAIL"), std::string::npos);
}

TEST(RunVerify, DeterministicReports) {
  std::ostringstream a, b;
  run_verify("degree", 1, "csv", "", false, a);
  run_verify("degree", 1, "csv", "", false, b);
  EXPECT_EQ(a.str(), b.str());
  std::ostringstream c;
  EXPECT_EQ(run_verify("bogus", 1, "text", "", false, c), kExitConfigError);
}

TEST(RunDegree, ReportsChainDegrees) {
  TempDir tmp;
  {
    CliOptions opts;
    opts.config_path = tmp.file("c8.cfg", chain_config(8, false));
    std::ostringstream os;
    EXPECT_EQ(run_degree_report(opts, os), kExitOk);
    EXPECT_NE(os.str().find("total degree: 256"), std::string::npos);
  }
  {
    CliOptions opts;
    opts.config_path = tmp.file("c10.cfg", chain_config(10, false));
    std::ostringstream os;
    EXPECT_EQ(run_degree_report(opts, os), kExitOk);
    EXPECT_NE(os.str().find("total degree: 1024"), std::string::npos);
  }
  {
    CliOptions opts;
    opts.config_path = tmp.file("d3.cfg", chain_config(3, true));
    std::ostringstream os;
    EXPECT_EQ(run_degree_report(opts, os), kExitOk);
    EXPECT_NE(os.str().find("per-block: 2 6 20"), std::string::npos);
  }
  {
    CliOptions opts;
    opts.config_path = tmp.path("missing.cfg");
    std::ostringstream os;
    EXPECT_EQ(run_degree_report(opts, os), kExitConfigError);
  }
}

TEST(Presets, DeskSpecsAreConsistent) {
  EXPECT_NO_THROW(desk_conv_regularized().validate());
  EXPECT_NO_THROW(desk_conv_plain().validate());
  EXPECT_NO_THROW(desk_conv_dense().validate());
  EXPECT_NO_THROW(desk_xor_mlp().validate());
  EXPECT_EQ(symbolic_degree(desk_conv_regularized()).total, 8);
  EXPECT_EQ(symbolic_degree(desk_conv_plain()).total, 8);
  EXPECT_GT(symbolic_degree(desk_conv_dense()).total, 8);
  EXPECT_EQ(symbolic_degree(desk_xor_mlp()).total, 8);
}
