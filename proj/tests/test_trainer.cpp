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

#include <cmath>
#include <filesystem>
#include <random>

#include "polynet/checkpoint.hpp"
#include "polynet/trainer.hpp"
#include "test_util.hpp"

using namespace polynet;

namespace {

Parameter scalar_param(const std::string& name, double v) {
  Tensor t(Shape{1}, {v});
  t.set_requires_grad(true);
  return {name, t};
}

void set_grad(Parameter& p, double g) {
  p.tensor.zero_grad();
  Tensor loss = mul_scalar(Tensor::scalar(g), p.tensor);
  backward(loss);
}

NetworkSpec xor_net_spec() {
  NetworkSpec spec;
  spec.mode = NetMode::DenseMlp;
  spec.input_dim = 2;
  spec.classes = 2;
  int in = 2;
  for (int i = 0; i < 3; ++i) {
    PolyBlockSpec b;
    b.in = in;
    b.out = 16;
    b.phi = NormKind::batch_norm(true);
    b.psi = NormKind::batch_norm(true);
    in = 16;
    spec.blocks.push_back(b);
  }
  return spec;
}

}  // namespace

TEST(SgdStep, VanillaStep) {
  std::vector<Parameter> params{scalar_param("w", 1.0)};
  SgdState state;
  set_grad(params[0], 1.0);
  sgd_step(params, state, 0.1, 0.0, 0.0);
  EXPECT_DOUBLE_EQ(params[0].tensor[0], 0.9);
}

TEST(SgdStep, DecayOnlyStep) {
  std::vector<Parameter> params{scalar_param("w", 1.0)};
  SgdState state;
  set_grad(params[0], 0.0);
  sgd_step(params, state, 0.1, 0.0, 0.5);
  EXPECT_DOUBLE_EQ(params[0].tensor[0], 0.95);
}

TEST(SgdStep, MomentumAccumulatesOverTwoSteps) {
  std::vector<Parameter> params{scalar_param("w", 1.0)};
  SgdState state;
  set_grad(params[0], 1.0);
  sgd_step(params, state, 0.1, 0.9, 0.0);
  EXPECT_NEAR(params[0].tensor[0], 0.9, 1e-15);
  set_grad(params[0], 1.0);
  sgd_step(params, state, 0.1, 0.9, 0.0);
  EXPECT_NEAR(params[0].tensor[0], 0.71, 1e-15);  // v2 = 0.9 + 1 = 1.9
}

TEST(SgdStep, MissingGradientIsUsageError) {
  std::vector<Parameter> params{scalar_param("w", 1.0)};
  SgdState state;
  EXPECT_THROW(sgd_step(params, state, 0.1, 0.9, 0.0), UsageError);
}

TEST(SgdStep, DecayShrinksNormsWithZeroGradients) {
  std::vector<Parameter> params{scalar_param("a", 2.0), scalar_param("b", -3.0)};
  SgdState state;
  double prev = std::sqrt(4.0 + 9.0);
  for (int step = 0; step < 5; ++step) {
    for (auto& p : params) set_grad(p, 0.0);
    sgd_step(params, state, 0.05, 0.9, 1e-2);
    const double norm = std::sqrt(params[0].tensor[0] * params[0].tensor[0] +
                                  params[1].tensor[0] * params[1].tensor[0]);
    EXPECT_LT(norm, prev);
    prev = norm;
  }
}

TEST(LrSchedule, MultiStepDecaysAtMilestones) {
  Schedule s;  // milestones 40/60/80/100, factor 0.1
  EXPECT_DOUBLE_EQ(lr_at(s, 0.1, 45), 0.01);
  EXPECT_DOUBLE_EQ(lr_at(s, 0.1, 0), 0.1);
  EXPECT_DOUBLE_EQ(lr_at(s, 0.1, 39), 0.1);
  EXPECT_DOUBLE_EQ(lr_at(s, 0.1, 40), 0.01);
  EXPECT_NEAR(lr_at(s, 0.1, 119), 1e-5, 1e-18);
}

TEST(LrSchedule, ExponentialDecay) {
  Schedule s;
  s.kind = ScheduleKind::Exponential;
  s.gamma = 0.92;
  EXPECT_NEAR(lr_at(s, 0.1, 2), 0.08464, 1e-12);
  EXPECT_DOUBLE_EQ(lr_at(s, 0.1, 0), 0.1);
}

TEST(Evaluate, UntrainedHeadIsAtChanceOnBalancedData) {
  std::mt19937_64 rng(3);
  NetworkSpec spec;
  spec.mode = NetMode::DenseMlp;
  spec.input_dim = 4;
  spec.classes = 10;
  PolyBlockSpec b;
  b.in = 4;
  b.out = 8;
  spec.blocks.push_back(b);
  Network net = build_network(spec, InitSpec{}, 11);
  Dataset ds;
  ds.images = testutil::random_tensor({600, 4}, rng);
  ds.class_count = 10;
  for (int i = 0; i < 600; ++i) ds.labels.push_back(i % 10);
  auto [loss, acc] = evaluate(net, ds);
  EXPECT_NEAR(acc, 0.1, 0.03);
  EXPECT_GT(loss, 0.0);
}

TEST(Evaluate, PureAndRepeatable) {
  std::mt19937_64 rng(5);
  NetworkSpec spec = xor_net_spec();
  Network net = build_network(spec, InitSpec{}, 7);
  Dataset ds = synth_dataset(SynthKind::Xor, 64, 0.1, 3);
  // snapshot every parameter and every running statistic
  std::vector<std::vector<double>> params_before;
  for (auto& p : net.params()) params_before.push_back(p.tensor.values());
  std::vector<std::vector<double>> buffers_before;
  for (auto& [name, vec] : net.buffers()) buffers_before.push_back(*vec);
  auto [l1, a1] = evaluate(net, ds);
  auto [l2, a2] = evaluate(net, ds);
  EXPECT_EQ(l1, l2);
  EXPECT_EQ(a1, a2);
  std::size_t i = 0;
  for (auto& p : net.params()) EXPECT_EQ(p.tensor.values(), params_before[i++]) << p.name;
  i = 0;
  for (auto& [name, vec] : net.buffers()) EXPECT_EQ(*vec, buffers_before[i++]) << name;
}

TEST(Fit, LearnsXorAndTracksSchedule) {
  Dataset train = synth_dataset(SynthKind::Xor, 200, 0.1, 17);
  Network net = build_network(xor_net_spec(), InitSpec{}, 17);
  TrainConfig cfg;
  cfg.lr0 = 0.05;
  cfg.batch_size = 64;
  cfg.epochs = 120;
  cfg.schedule.milestones = {60, 90};
  cfg.label_smooth_eps = 0.0;
  cfg.seed = 17;
  auto rows = fit(net, train, nullptr, cfg);
  ASSERT_EQ(rows.size(), 120u);
  for (std::size_t e = 0; e < rows.size(); ++e) {
    EXPECT_EQ(rows[e].epoch, static_cast<int>(e));
    EXPECT_DOUBLE_EQ(rows[e].lr, lr_at(cfg.schedule, cfg.lr0, static_cast<int>(e)));
    EXPECT_TRUE(std::isfinite(rows[e].train_loss));
  }
  EXPECT_GE(rows.back().train_acc, 0.9);
}

TEST(Fit, DeterministicGivenSeed) {
  Dataset train = synth_dataset(SynthKind::Xor, 96, 0.1, 23);
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.epochs = 5;
  cfg.label_smooth_eps = 0.1;
  cfg.seed = 42;
  Network a = build_network(xor_net_spec(), InitSpec{}, 42);
  Network b = build_network(xor_net_spec(), InitSpec{}, 42);
  auto ra = fit(a, train, nullptr, cfg);
  auto rb = fit(b, train, nullptr, cfg);
  ASSERT_EQ(ra.size(), rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    EXPECT_EQ(ra[i].train_loss, rb[i].train_loss);
    EXPECT_EQ(ra[i].train_acc, rb[i].train_acc);
    EXPECT_EQ(ra[i].test_acc, rb[i].test_acc);
  }
}

TEST(Fit, AbortsWithDiagnosticOnDivergence) {
  Dataset train = synth_dataset(SynthKind::Xor, 64, 0.1, 29);
  NetworkSpec spec = xor_net_spec();
  for (auto& b : spec.blocks) {  // no normalization, nothing to tame lr 1e3
    b.phi = NormKind::identity();
    b.psi = NormKind::identity();
  }
  Network net = build_network(spec, InitSpec{}, 29);
  TrainConfig cfg;
  cfg.lr0 = 1e6;  // guaranteed blow-up within the first epoch's batches
  cfg.batch_size = 8;
  cfg.epochs = 50;
  cfg.label_smooth_eps = 0.0;
  cfg.seed = 29;
  try {
    fit(net, train, nullptr, cfg);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch"), std::string::npos);
    EXPECT_NE(msg.find("batch"), std::string::npos);
    EXPECT_NE(msg.find("last finite loss"), std::string::npos);
  }
}

TEST(Fit, PolyRegressionReachesNearZeroLoss) {
  // degree-2 bilinear features fit y = z1^2 exactly; plain SGD on MSE
  Dataset ds = synth_dataset(SynthKind::PolyRegression, 64, 0.0, 31);
  NetworkSpec spec;
  spec.mode = NetMode::DenseMlp;
  spec.input_dim = 2;
  spec.classes = 2;  // head unused; regression reads a manual linear map
  PolyBlockSpec b;
  b.in = 2;
  b.out = 6;
  spec.blocks.push_back(b);
  Network net = build_network(spec, InitSpec{}, 31);
  Tensor w(Shape{6, 1}, 0.0);
  w.set_requires_grad(true);
  std::vector<Parameter> params;  // block parameters plus the readout; no head
  for (auto& p : net.params())
    if (p.name.rfind("head.", 0) != 0) params.push_back(p);
  params.push_back({"readout", w});
  SgdState state;
  double loss_val = 1.0;
  for (int step = 0; step < 4000; ++step) {
    for (auto& p : params) p.tensor.zero_grad();
    Tensor feats = net.forward_blocks(ds.images, 1, NormMode::Inference);
    Tensor pred = matmul(feats, w);
    Tensor diff = sub(pred, ds.targets);
    Tensor loss = scale(sum(hadamard(diff, diff)), 1.0 / ds.size());
    loss_val = loss.item();
    if (loss_val < 1e-5) break;
    backward(loss);
    sgd_step(params, state, 0.05, 0.9, 0.0);
  }
  EXPECT_LT(loss_val, 1e-4);
}

TEST(Metrics, CsvShapeAndHeader) {
  std::vector<MetricsRow> rows{{0, 1.5, 0.5, 0.4, 0.1, 2.0}, {1, 1.2, 0.6, 0.5, 0.1, 2.1}};
  const std::string csv = metrics_csv(rows);
  EXPECT_EQ(csv.find("epoch,train_loss,train_acc,test_acc,lr,wall_seconds\n"), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Checkpoint, RoundTripRestoresEverything) {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "polynet_ckpt_test.bin").string();
  Dataset train = synth_dataset(SynthKind::Xor, 64, 0.1, 37);
  Network net = build_network(xor_net_spec(), InitSpec{}, 37);
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.epochs = 3;
  cfg.seed = 37;
  cfg.label_smooth_eps = 0.0;
  fit(net, train, nullptr, cfg);
  save_checkpoint(path, net);

  Network fresh = build_network(xor_net_spec(), InitSpec{}, 99);
  apply_checkpoint(fresh, load_checkpoint(path));
  for (std::size_t i = 0; i < net.params().size(); ++i)
    EXPECT_EQ(fresh.params()[i].tensor.values(), net.params()[i].tensor.values());
  auto nb = net.buffers();
  auto fb = fresh.buffers();
  for (std::size_t i = 0; i < nb.size(); ++i) EXPECT_EQ(*fb[i].second, *nb[i].second);
  auto [l1, a1] = evaluate(net, train);
  auto [l2, a2] = evaluate(fresh, train);
  EXPECT_EQ(l1, l2);
  EXPECT_EQ(a1, a2);
  fs::remove(path);
}
