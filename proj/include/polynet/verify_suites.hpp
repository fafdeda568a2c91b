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

// Canonical tiny configurations for the `verify` entry point: each row is
// one oracle run with a pass verdict and its headline metric.

#pragma once

#include <random>
#include <string>
#include <vector>

#include "polynet/network.hpp"
#include "polynet/verify.hpp"

namespace polynet {

struct SuiteRow {
  std::string suite;
  std::string name;
  bool pass = false;
  Real metric = 0.0;   // max relative error / residual / deviation
  std::string detail;
};

namespace detail {

/// Forward-identity op with a sign-flipped backward; negative-control hook
/// for the gradient suite.
inline Tensor corrupted_identity(const Tensor& x) {
  std::vector<Real> copy = x.values();
  return make_op("corrupted_identity", x.shape(), std::move(copy), {x},
                 [](const std::vector<Real>& g, const TensorNode&,
                    const std::vector<std::vector<Real>*>& pg) {
                   if (pg[0])
                     for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] -= g[i];
                 });
}

inline NetworkSpec suite_mlp_chain(int blocks, int in_dim, int width, NormKind phi, NormKind psi,
                                   int classes = 3) {
  NetworkSpec spec;
  spec.mode = NetMode::DenseMlp;
  spec.input_dim = in_dim;
  spec.classes = classes;
  for (int i = 0; i < blocks; ++i) {
    PolyBlockSpec b;
    b.in = i == 0 ? in_dim : width;
    b.out = width;
    b.phi = phi;
    b.psi = psi;
    spec.blocks.push_back(b);
  }
  return spec;
}

/// Gives every normalization layer generic frozen-affine behavior:
/// randomized running statistics and affine parameters.
inline void randomize_norm_state(Network& net, std::uint64_t seed) {
  auto rng = make_rng(seed, "norm_state");
  std::normal_distribution<Real> normal(0.0, 1.0);
  for (int i = 0; i < net.block_count(); ++i) {
    for (NormLayer* layer : {&net.block(i).phi_norm, &net.block(i).psi_norm}) {
      for (auto& m : layer->running_mean()) m = 0.3 * normal(rng);
      for (auto& v : layer->running_var()) v = 0.5 + std::abs(normal(rng));
      if (!layer->running_whiten().empty()) {
        const int c = layer->channels();
        for (int a = 0; a < c; ++a)
          for (int b = 0; b < c; ++b)
            layer->running_whiten()[static_cast<std::size_t>(a) * c + b] =
                (a == b ? 1.0 : 0.0) + 0.1 * normal(rng);
      }
      if (layer->has_affine()) {
        for (auto& g : layer->gamma().mutable_values()) g = 1.0 + 0.3 * normal(rng);
        for (auto& b : layer->beta().mutable_values()) b = 0.3 * normal(rng);
      }
    }
  }
}

inline GradCheckReport grad_check_network(Network& net, const Tensor& x, std::uint64_t seed,
                                          bool corrupt) {
  auto rng = make_rng(seed, "grad_loss");
  std::uniform_real_distribution<Real> uni(-1.0, 1.0);
  Shape out_shape{x.dim(0), net.spec().classes};
  std::vector<Real> w1(static_cast<std::size_t>(numel(out_shape))), w2 = w1;
  for (auto& v : w1) v = uni(rng);
  for (auto& v : w2) v = uni(rng);
  Tensor t1(out_shape, std::move(w1)), t2(out_shape, std::move(w2));
  auto loss_fn = [&net, &x, t1, t2, corrupt]() {
    Tensor y = net.forward(x, NormMode::FrozenAffine);
    if (corrupt) y = corrupted_identity(y);
    return add(sum(hadamard(t1, y)), sum(hadamard(t2, hadamard(y, y))));
  };
  return grad_check(loss_fn, net.params());
}

}  // namespace detail

/// Gradient oracle over every block variant with norms frozen to inference
/// affine: NCP steps 1-3, CCP steps 2-3, dense blocks with 1-2 inputs, and a
/// conv IBN case. `corrupt_backward` flips one backward sign as a negative
/// control; every row must then fail.
inline std::vector<SuiteRow> run_grad_suite(std::uint64_t seed, bool corrupt_backward = false) {
  std::vector<SuiteRow> rows;
  auto data_rng = make_rng(seed, "grad_data");
  std::uniform_real_distribution<Real> uni(-1.0, 1.0);
  auto random_input = [&](Shape shape) {
    std::vector<Real> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) x = uni(data_rng);
    return Tensor(std::move(shape), std::move(v));
  };
  auto run_case = [&](const std::string& name, NetworkSpec spec, Shape in_shape) {
    Network net = build_network(spec, InitSpec{}, derive_seed(seed, name));
    detail::randomize_norm_state(net, derive_seed(seed, name + ".norms"));
    for (auto& p : net.params()) {  // generic bias point
      const auto dot = p.name.rfind('.');
      if (dot != std::string::npos && p.name[dot + 1] == 'b')
        for (auto& v : p.tensor.mutable_values()) v = 0.3 * uni(data_rng);
    }
    Tensor x = random_input(std::move(in_shape));
    GradCheckReport r = detail::grad_check_network(net, x, derive_seed(seed, name + ".loss"),
                                                   corrupt_backward);
    rows.push_back({"grad", name, r.pass, r.max_rel_err,
                    "worst " + r.worst_param + ", " + std::to_string(r.checked_coords) + " coords"});
  };

  for (int steps : {1, 2, 3}) {
    NetworkSpec spec =
        detail::suite_mlp_chain(1, 5, 4, NormKind::batch_norm(true), NormKind::batch_norm(true));
    spec.blocks[0].steps = steps;
    run_case("ncp_steps" + std::to_string(steps), spec, Shape{3, 5});
  }
  for (int steps : {2, 3}) {
    NetworkSpec spec = detail::suite_mlp_chain(1, 5, 4, NormKind::batch_norm(true), NormKind::identity());
    spec.blocks[0].variant = PolyVariant::CCP;
    spec.blocks[0].steps = steps;
    spec.blocks[0].use_bias_branch = false;
    run_case("ccp_steps" + std::to_string(steps), spec, Shape{3, 5});
  }
  {
    NetworkSpec spec =
        detail::suite_mlp_chain(2, 5, 4, NormKind::batch_norm(true), NormKind::batch_norm(true));
    spec.blocks[1].dense_inputs = {0};
    run_case("dense_1_input", spec, Shape{3, 5});
  }
  {
    NetworkSpec spec =
        detail::suite_mlp_chain(3, 5, 4, NormKind::batch_norm(true), NormKind::batch_norm(true));
    spec.blocks[1].dense_inputs = {0};
    spec.blocks[2].dense_inputs = {0, 1};
    run_case("dense_2_inputs", spec, Shape{3, 5});
  }
  {
    NetworkSpec spec;
    spec.mode = NetMode::Conv;
    spec.input_channels = 3;
    spec.input_size = 8;
    spec.classes = 3;
    PolyBlockSpec b1;
    b1.in = 3;
    b1.out = 4;
    b1.phi = NormKind::ibn(0.8, true);
    b1.psi = NormKind::batch_norm(true);
    PolyBlockSpec b2;
    b2.in = 4;
    b2.out = 5;
    b2.stride = 2;
    b2.phi = NormKind::batch_norm(true);
    b2.psi = NormKind::batch_norm(true);
    spec.blocks = {b1, b2};
    run_case("conv_ncp_ibn", spec, Shape{2, 3, 8, 8});
  }
  return rows;
}

/// Degree oracle: annihilation at the claimed degree must pass, one order
/// below must be rejected, and the dense 3-chain per-block degrees must be
/// confirmed by full monomial expansion.
inline std::vector<SuiteRow> run_degree_suite(std::uint64_t seed) {
  std::vector<SuiteRow> rows;
  constexpr Real tol = 1e-6;
  const int trials = 5;

  auto annihilation_pair = [&](const std::string& name, NetworkSpec spec, long long degree) {
    Network net = build_network(spec, InitSpec{}, derive_seed(seed, name));
    auto rng = make_rng(seed, name + ".trials");
    DegreeTestReport ok = degree_annihilation(net, degree, trials, tol, rng);
    rows.push_back({"degree", name + "_annihilate_d" + std::to_string(degree), ok.pass,
                    ok.annihilation_residual,
                    "witness " + std::to_string(ok.witness_residual)});
    DegreeTestReport bad = degree_annihilation(net, degree - 1, trials, tol, rng);
    rows.push_back({"degree", name + "_reject_d" + std::to_string(degree - 1), !bad.pass,
                    bad.annihilation_residual, "must not annihilate one order below"});
  };

  for (int b = 1; b <= 3; ++b) {
    NetworkSpec spec = detail::suite_mlp_chain(b, 2, 4, NormKind::identity(), NormKind::identity());
    annihilation_pair("plain_B" + std::to_string(b), spec, 1LL << b);
  }
  {
    NetworkSpec spec = detail::suite_mlp_chain(2, 2, 4, NormKind::identity(), NormKind::identity());
    spec.blocks[1].dense_inputs = {0};
    annihilation_pair("dense_chain2", spec, 6);
  }
  {
    NetworkSpec spec =
        detail::suite_mlp_chain(2, 2, 4, NormKind::mean_subtract(), NormKind::identity());
    annihilation_pair("mean_subtract_chain2", spec, 4);
  }
  {
    NetworkSpec spec = detail::suite_mlp_chain(3, 2, 4, NormKind::identity(), NormKind::identity());
    spec.blocks[1].dense_inputs = {0};
    spec.blocks[2].dense_inputs = {0, 1};
    Network net = build_network(spec, InitSpec{}, derive_seed(seed, "dense3"));
    DegreeReport symbolic = net.degree_report();
    bool all_match = symbolic.per_block == std::vector<long long>{2, 6, 20};
    std::string detail_str = "per-block";
    for (int blk = 1; blk <= 3; ++blk) {
      MonomialExpansion exp = monomial_expand(net, blk);
      const long long got = exp.max_total_degree();
      detail_str += " " + std::to_string(got);
      if (got != symbolic.per_block[static_cast<std::size_t>(blk) - 1]) all_match = false;
    }
    rows.push_back({"degree", "dense_chain3_monomial_degrees", all_match, 0.0, detail_str});
  }
  {
    // random tiny CCP net: expansion degree equals the symbolic total
    NetworkSpec spec = detail::suite_mlp_chain(2, 2, 3, NormKind::identity(), NormKind::identity());
    for (auto& b : spec.blocks) {
      b.variant = PolyVariant::CCP;
      b.steps = 2;
      b.use_bias_branch = false;
    }
    Network net = build_network(spec, InitSpec{}, derive_seed(seed, "ccp_tiny"));
    MonomialExpansion exp = monomial_expand(net);
    const long long got = exp.max_total_degree();
    const long long want = net.degree_report().total;
    rows.push_back({"degree", "ccp_expansion_matches_symbolic", got == want,
                    static_cast<Real>(got), "symbolic " + std::to_string(want)});
  }
  return rows;
}

/// Recovery of the plain recursion as the Φ=Ψ=identity special case, with a
/// mean-subtract negative control and the zero-input annihilation case.
inline std::vector<SuiteRow> run_equivalence_suite(std::uint64_t seed, int draws = 100) {
  std::vector<SuiteRow> rows;
  auto rng = make_rng(seed, "equiv");
  std::uniform_real_distribution<Real> uni(-1.0, 1.0);
  Real worst = 0.0;
  for (int d = 0; d < draws; ++d) {
    NetworkSpec spec = detail::suite_mlp_chain(1, 4, 4, NormKind::identity(), NormKind::identity());
    spec.blocks[0].steps = 1 + d % 3;
    Network net = build_network(spec, InitSpec{}, derive_seed(seed, "equiv_draw", static_cast<std::uint64_t>(d)));
    for (auto& bias : net.block(0).bias)
      for (auto& v : bias.mutable_values()) v = uni(rng);
    std::vector<Real> zv(8);
    for (auto& v : zv) v = uni(rng);
    Tensor z(Shape{2, 4}, std::move(zv));
    worst = std::max(worst, pinet_equivalence(net.block(0), spec.blocks[0], z));
  }
  rows.push_back({"equivalence", "pinet_recovery_" + std::to_string(draws) + "draws",
                  worst < 1e-12, worst, "max deviation"});
  {
    NetworkSpec spec =
        detail::suite_mlp_chain(1, 4, 4, NormKind::mean_subtract(), NormKind::identity());
    Network net = build_network(spec, InitSpec{}, derive_seed(seed, "equiv_neg"));
    std::vector<Real> zv(8);
    for (auto& v : zv) v = uni(rng);
    Tensor z(Shape{2, 4}, std::move(zv));
    const Real dev = pinet_equivalence(net.block(0), spec.blocks[0], z);
    rows.push_back({"equivalence", "mean_subtract_breaks_equivalence", dev > 1e-6, dev,
                    "generic deviation expected"});
  }
  {
    NetworkSpec spec = detail::suite_mlp_chain(1, 4, 4, NormKind::identity(), NormKind::identity());
    Network net = build_network(spec, InitSpec{}, derive_seed(seed, "equiv_zero"));
    Tensor z(Shape{2, 4}, 0.0);
    const Real dev = pinet_equivalence(net.block(0), spec.blocks[0], z);
    NoGradGuard ng;
    Tensor out = ncp_block_forward(z, net.block(0), spec.blocks[0], {}, NetMode::DenseMlp,
                                   NormMode::Inference);
    Real out_mag = 0.0;
    for (Real v : out.values()) out_mag = std::max(out_mag, std::abs(v));
    rows.push_back({"equivalence", "zero_input_zero_bias", dev == 0.0 && out_mag == 0.0,
                    std::max(dev, out_mag), "both implementations vanish"});
  }
  return rows;
}

inline std::vector<SuiteRow> run_all_suites(std::uint64_t seed) {
  std::vector<SuiteRow> rows = run_grad_suite(seed);
  for (auto& r : run_degree_suite(seed)) rows.push_back(r);
  for (auto& r : run_equivalence_suite(seed)) rows.push_back(r);
  return rows;
}

}  // namespace polynet
