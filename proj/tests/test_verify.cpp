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

#include <random>

#include "polynet/verify.hpp"
#include "polynet/verify_suites.hpp"
#include "test_util.hpp"

using namespace polynet;
using testutil::random_tensor;

TEST(GradCheck, QuadraticCase) {
  std::vector<Parameter> params;
  Tensor w(Shape{3}, {0.5, -1.0, 2.0});
  w.set_requires_grad(true);
  params.push_back({"w", w});
  auto loss = [&] { return sum(hadamard(w, w)); };
  GradCheckReport r = grad_check(loss, params, 1e-5, 1e-5);
  EXPECT_TRUE(r.pass);
  EXPECT_LT(r.max_rel_err, 1e-9);
}

TEST(GradCheck, CorruptedBackwardIsReported) {
  std::vector<Parameter> params;
  Tensor w(Shape{3}, {0.5, -1.0, 2.0});
  w.set_requires_grad(true);
  params.push_back({"w", w});
  auto loss = [&] { return sum(hadamard(detail::corrupted_identity(w), w)); };
  GradCheckReport r = grad_check(loss, params, 1e-5, 1e-5);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.worst_param, "w");
}

TEST(GradCheck, SubsamplesLargeParameters) {
  std::vector<Parameter> params;
  std::mt19937_64 rng(5);
  Tensor w = random_tensor({40, 10}, rng);
  w.set_requires_grad(true);
  params.push_back({"w", w});
  auto loss = [&] { return sum(hadamard(w, w)); };
  GradCheckReport r = grad_check(loss, params, 1e-5, 1e-5, 25);
  EXPECT_TRUE(r.pass);
  EXPECT_LE(r.checked_coords, 25);
}

TEST(Annihilation, SingleBlockIsDegreeTwo) {
  NetworkSpec spec = detail::suite_mlp_chain(1, 2, 4, NormKind::identity(), NormKind::identity());
  Network net = build_network(spec, InitSpec{}, 42);
  std::mt19937_64 rng(7);
  DegreeTestReport ok = degree_annihilation(net, 2, 5, 1e-6, rng);
  EXPECT_TRUE(ok.pass) << "ann " << ok.annihilation_residual << " wit " << ok.witness_residual;
  DegreeTestReport bad = degree_annihilation(net, 1, 5, 1e-6, rng);
  EXPECT_FALSE(bad.pass);
}

TEST(Annihilation, ThreeBlockChainIsDegreeEight) {
  NetworkSpec spec = detail::suite_mlp_chain(3, 2, 4, NormKind::identity(), NormKind::identity());
  Network net = build_network(spec, InitSpec{}, 43);
  std::mt19937_64 rng(8);
  EXPECT_TRUE(degree_annihilation(net, 8, 5, 1e-6, rng).pass);
  EXPECT_FALSE(degree_annihilation(net, 7, 5, 1e-6, rng).pass);
}

TEST(Annihilation, DenseTwoChainIsDegreeSix) {
  NetworkSpec spec = detail::suite_mlp_chain(2, 2, 4, NormKind::identity(), NormKind::identity());
  spec.blocks[1].dense_inputs = {0};
  Network net = build_network(spec, InitSpec{}, 44);
  std::mt19937_64 rng(9);
  EXPECT_TRUE(degree_annihilation(net, 6, 5, 1e-6, rng).pass);
  EXPECT_FALSE(degree_annihilation(net, 5, 5, 1e-6, rng).pass);
}

TEST(Annihilation, RejectsHybridNetworks) {
  NetworkSpec spec = detail::suite_mlp_chain(1, 2, 4, NormKind::identity(), NormKind::identity());
  spec.relu_hybrid = true;
  Network net = build_network(spec, InitSpec{}, 45);
  std::mt19937_64 rng(10);
  EXPECT_THROW(degree_annihilation(net, 2, 3, 1e-6, rng), ValidationError);
}

TEST(MonomialExpand, IdentityBlockHandCoefficients) {
  // z ∈ R², identity maps: block output feature 0 is z0² + z0.
  NetworkSpec spec = detail::suite_mlp_chain(1, 2, 2, NormKind::identity(), NormKind::identity());
  Network net = build_network(spec, InitSpec{}, 1);
  for (auto& p : net.params()) {
    if (p.name == "block1.H1" || p.name == "block1.J1")
      p.tensor.mutable_values() = {1, 0, 0, 1};
  }
  MonomialExpansion exp = monomial_expand(net, 1);
  EXPECT_NEAR((exp.outputs[0][{2, 0}]), 1.0, 1e-9);
  EXPECT_NEAR((exp.outputs[0][{1, 0}]), 1.0, 1e-9);
  EXPECT_NEAR((exp.outputs[0][{0, 2}]), 0.0, 1e-9);
  EXPECT_EQ(exp.max_total_degree(), 2);
  // evaluating the hand case: z=(1,2) -> (2,6)
  EXPECT_NEAR(exp.eval_feature(0, {1.0, 2.0}), 2.0, 1e-9);
  EXPECT_NEAR(exp.eval_feature(1, {1.0, 2.0}), 6.0, 1e-9);
}

TEST(MonomialExpand, MeanSubtractPhiHandCase) {
  NetworkSpec spec = detail::suite_mlp_chain(1, 2, 2, NormKind::mean_subtract(), NormKind::identity());
  Network net = build_network(spec, InitSpec{}, 1);
  for (auto& p : net.params()) {
    if (p.name == "block1.H1" || p.name == "block1.J1")
      p.tensor.mutable_values() = {1, 0, 0, 1};
  }
  MonomialExpansion exp = monomial_expand(net, 1);
  EXPECT_NEAR(exp.eval_feature(0, {1.0, 2.0}), 0.5, 1e-9);
  EXPECT_NEAR(exp.eval_feature(1, {1.0, 2.0}), 3.0, 1e-9);
}

TEST(MonomialExpand, ReconstructionMatchesNetwork) {
  NetworkSpec spec = detail::suite_mlp_chain(2, 2, 3, NormKind::identity(), NormKind::identity());
  Network net = build_network(spec, InitSpec{}, 46);
  MonomialExpansion exp = monomial_expand(net);  // full network with head
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  NoGradGuard ng;
  double fmax = 1e-8;
  std::vector<std::pair<std::vector<double>, std::vector<double>>> samples;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> point{uni(rng), uni(rng)};
    Tensor y = net.forward(Tensor(Shape{1, 2}, point), NormMode::FrozenAffine);
    samples.push_back({point, y.values()});
    for (double v : y.values()) fmax = std::max(fmax, std::abs(v));
  }
  for (auto& [point, y] : samples)
    for (std::size_t j = 0; j < y.size(); ++j)
      EXPECT_LT(std::abs(exp.eval_feature(j, point) - y[j]) / fmax, 1e-8);
}

TEST(MonomialExpand, SymbolicPathHandlesDegreeTwenty) {
  NetworkSpec spec = detail::suite_mlp_chain(3, 2, 4, NormKind::identity(), NormKind::identity());
  spec.blocks[1].dense_inputs = {0};
  spec.blocks[2].dense_inputs = {0, 1};
  Network net = build_network(spec, InitSpec{}, 47);
  MonomialExpansion b3 = monomial_expand(net, 3);
  EXPECT_TRUE(b3.used_symbolic_path);
  EXPECT_EQ(b3.max_total_degree(), 20);
  EXPECT_EQ(monomial_expand(net, 1).max_total_degree(), 2);
  EXPECT_EQ(monomial_expand(net, 2).max_total_degree(), 6);
}

TEST(MonomialExpand, CrossOracleAgreementWithSymbolicDegree) {
  std::mt19937_64 seeds(12);
  for (int trial = 0; trial < 3; ++trial) {
    NetworkSpec spec = detail::suite_mlp_chain(2, 2, 3, NormKind::identity(), NormKind::identity());
    spec.blocks[trial % 2].steps = 1 + trial % 2;
    Network net = build_network(spec, InitSpec{}, seeds());
    EXPECT_EQ(monomial_expand(net).max_total_degree(), net.degree_report().total);
  }
}

TEST(PinetEquivalence, RandomDrawsAreExact) {
  std::mt19937_64 rng(13);
  for (int steps = 1; steps <= 3; ++steps) {
    NetworkSpec spec = detail::suite_mlp_chain(1, 4, 4, NormKind::identity(), NormKind::identity());
    spec.blocks[0].steps = steps;
    Network net = build_network(spec, InitSpec{}, 100 + static_cast<std::uint64_t>(steps));
    for (auto& bias : net.block(0).bias)
      for (auto& v : bias.mutable_values()) v = 0.5;
    Tensor z = random_tensor({2, 4}, rng);
    EXPECT_LT(pinet_equivalence(net.block(0), spec.blocks[0], z), 1e-12);
  }
}

TEST(PinetEquivalence, MeanSubtractIsAWitnessOfNonEquivalence) {
  std::mt19937_64 rng(14);
  NetworkSpec spec = detail::suite_mlp_chain(1, 4, 4, NormKind::mean_subtract(), NormKind::identity());
  Network net = build_network(spec, InitSpec{}, 15);
  Tensor z = random_tensor({2, 4}, rng);
  EXPECT_GT(pinet_equivalence(net.block(0), spec.blocks[0], z), 1e-6);
}

TEST(Suites, GradSuiteAllPass) {
  for (const SuiteRow& r : run_grad_suite(2026)) {
    EXPECT_TRUE(r.pass) << r.name << " metric " << r.metric << " (" << r.detail << ")";
    EXPECT_LT(r.metric, 1e-5) << r.name;
  }
}

TEST(Suites, GradSuiteNegativeControlFailsEverywhere) {
  for (const SuiteRow& r : run_grad_suite(2026, /*corrupt_backward=*/true))
    EXPECT_FALSE(r.pass) << r.name;
}

TEST(Suites, DegreeSuiteAllPass) {
  for (const SuiteRow& r : run_degree_suite(2026))
    EXPECT_TRUE(r.pass) << r.name << " metric " << r.metric << " (" << r.detail << ")";
}

TEST(Suites, EquivalenceSuiteAllPass) {
  for (const SuiteRow& r : run_equivalence_suite(2026))
    EXPECT_TRUE(r.pass) << r.name << " metric " << r.metric;
}

TEST(Suites, DeterministicAcrossRuns) {
  auto a = run_all_suites(7);
  auto b = run_all_suites(7);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(a[i].pass, b[i].pass);
    EXPECT_EQ(a[i].metric, b[i].metric);
  }
}
