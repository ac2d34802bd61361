// Copyright (c) 2026 The groklab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstring>

#include <doctest.h>

#include "groklab/optim.hpp"
#include "support/oracles.hpp"

using namespace groklab;

namespace {

ParamSet single_param(const std::string& name, std::vector<int> shape, double fill) {
  ParamSet params;
  Tensor t = Tensor::full(std::move(shape), fill);
  t.set_requires_grad(true);
  params.entries.push_back({name, t});
  return params;
}

void set_grad(ParamSet& params, std::size_t index, double value) {
  Tensor& t = params.entries[index].tensor;
  auto g = t.grad_data();
  for (double& v : g) v = value;
}

}  // namespace

TEST_CASE("adamw worked examples") {
  SUBCASE("zero gradient, zero decay leaves parameters unchanged") {
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    ParamSet params = single_param("w", {2, 2}, 0.7);
    set_grad(params, 0, 0.0);
    AdamW opt(cfg);
    opt.step(params);
    for (double v : params.entries[0].tensor.values()) CHECK(v == doctest::Approx(0.7));
  }
  SUBCASE("first step from zero state with g=1, lr=0.1 moves by -0.1") {
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.eps = 1e-300;  // the hand example assumes eps = 0
    cfg.weight_decay = 0.0;
    ParamSet params = single_param("w", {3}, 2.0);
    set_grad(params, 0, 1.0);
    AdamW opt(cfg);
    opt.step(params);
    for (double v : params.entries[0].tensor.values()) CHECK(v == doctest::Approx(1.9).epsilon(1e-12));
  }
  SUBCASE("decoupled decay with zero gradient multiplies by 1 - lr*wd") {
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.1;
    ParamSet params = single_param("w", {2}, 5.0);
    set_grad(params, 0, 0.0);
    AdamW opt(cfg);
    opt.step(params);
    for (double v : params.entries[0].tensor.values()) CHECK(v == doctest::Approx(0.99 * 5.0));
  }
}

TEST_CASE("adamw first step matches a scalar oracle for random (g, lr) pairs") {
  Rng rng(1001);
  for (int trial = 0; trial < 20; ++trial) {
    AdamWConfig cfg;
    cfg.lr = std::pow(10.0, -1.0 - 2.0 * rng.next_double());
    cfg.weight_decay = 0.0;
    const double g = 3.0 * rng.normal();
    const double theta0 = rng.normal();

    ParamSet params = single_param("w", {1}, theta0);
    set_grad(params, 0, g);
    AdamW opt(cfg);
    opt.step(params);

    // scalar oracle of the bias-corrected first step
    const double m_hat = ((1 - cfg.beta1) * g) / (1 - cfg.beta1);
    const double v_hat = ((1 - cfg.beta2) * g * g) / (1 - cfg.beta2);
    const double want = theta0 - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    CHECK(params.entries[0].tensor.values()[0] == doctest::Approx(want).epsilon(1e-14));
  }
}

TEST_CASE("shape_scale") {
  CHECK(shape_scale(128, 128) == doctest::Approx(1.0));
  CHECK(shape_scale(512, 128) == doctest::Approx(2.0));
  CHECK(shape_scale(128, 512) == doctest::Approx(1.0));
}

TEST_CASE("newton_schulz on isotropic input stays isotropic (cubic)") {
  // 2*I_4 normalizes to singular values all 0.5; the cubic drives them to a
  // common value, so O^T O must stay proportional to the identity.
  std::vector<double> m(16, 0.0);
  for (int i = 0; i < 4; ++i) m[static_cast<std::size_t>(i) * 4 + i] = 2.0;
  const auto out = newton_schulz_orthogonalize(m, 4, 4, {1.5, -0.5, 0.0}, 5);
  const double diag = out[0];
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      const double want = (i == j) ? diag : 0.0;
      CHECK(out[static_cast<std::size_t>(i) * 4 + j] == doctest::Approx(want).epsilon(1e-12));
    }
  }
  // all singular values equal after the iteration
  const auto svd = oracles::jacobi_svd(out, 4, 4);
  for (double s : svd.singular_values) CHECK(s == doctest::Approx(svd.singular_values[0]).epsilon(1e-9));
}

TEST_CASE("newton_schulz zero matrix returns zero") {
  std::vector<double> zeros(12, 0.0);
  const auto out = newton_schulz_orthogonalize(zeros, 3, 4, {3.4445, -4.7750, 2.0315}, 5);
  for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("quintic newton_schulz on scaled-orthogonal 16x16 lands in the spectral band") {
  // condition number 1: every singular value follows the same trajectory
  Rng rng(7);
  std::vector<double> spectrum(16, 3.7);
  const auto m = oracles::matrix_with_spectrum(16, 16, spectrum, rng);
  const auto out = newton_schulz_orthogonalize(m, 16, 16, {3.4445, -4.7750, 2.0315}, 5);
  const auto svd = oracles::jacobi_svd(out, 16, 16);
  for (double s : svd.singular_values) {
    CHECK(s >= 0.7);
    CHECK(s <= 1.3);
  }
}

TEST_CASE("quintic newton_schulz keeps the spectral norm capped at 1.3") {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const int rows = 2 + static_cast<int>(rng.next_below(31));
    const int cols = 2 + static_cast<int>(rng.next_below(31));
    const int r = std::min(rows, cols);
    std::vector<double> spectrum(static_cast<std::size_t>(r));
    for (double& s : spectrum) s = std::pow(10.0, -2.0 * rng.next_double());  // cond <= 100
    const auto m = oracles::matrix_with_spectrum(rows, cols, spectrum, rng);
    const auto out = newton_schulz_orthogonalize(m, rows, cols, {3.4445, -4.7750, 2.0315}, 5);
    CHECK(oracles::spectral_norm(out, rows, cols) <= 1.3);
  }
}

TEST_CASE("cubic newton_schulz approaches U.V^T for conditioned inputs") {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const int rows = 4 + static_cast<int>(rng.next_below(29));
    const int cols = 4 + static_cast<int>(rng.next_below(29));
    const int r = std::min(rows, cols);
    std::vector<double> spectrum(static_cast<std::size_t>(r));
    for (double& s : spectrum) s = 0.5 + 4.0 * rng.next_double();
    const auto m = oracles::matrix_with_spectrum(rows, cols, spectrum, rng);
    const auto out = newton_schulz_orthogonalize(m, rows, cols, {1.5, -0.5, 0.0}, 30);
    const auto svd = oracles::jacobi_svd(m, rows, cols);
    std::vector<double> diff(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) diff[i] = out[i] - svd.u_vt[i];
    CHECK(oracles::spectral_norm(diff, rows, cols) <= 0.35);
  }
}

TEST_CASE("muon worked behavior") {
  SUBCASE("zero gradient, fresh state, zero decay is the identity") {
    MuonConfig cfg;
    cfg.weight_decay = 0.0;
    ParamSet params = single_param("w", {4, 4}, 1.25);
    set_grad(params, 0, 0.0);
    Muon opt(cfg);
    opt.step(params);
    for (double v : params.entries[0].tensor.values()) CHECK(v == doctest::Approx(1.25));
  }
  SUBCASE("rank-1 gradient update points along -u v^T") {
    MuonConfig cfg;
    cfg.weight_decay = 0.0;
    cfg.lr = 0.01;
    const int n = 8;
    Rng rng(19);
    std::vector<double> u(n), v(n);
    double un = 0.0, vn = 0.0;
    for (int i = 0; i < n; ++i) {
      u[static_cast<std::size_t>(i)] = rng.normal();
      v[static_cast<std::size_t>(i)] = rng.normal();
      un += u[static_cast<std::size_t>(i)] * u[static_cast<std::size_t>(i)];
      vn += v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
    }
    un = std::sqrt(un);
    vn = std::sqrt(vn);

    ParamSet params = single_param("w", {n, n}, 0.0);
    Tensor& t = params.entries[0].tensor;
    auto g = t.grad_data();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        g[static_cast<std::size_t>(i) * n + j] =
            (u[static_cast<std::size_t>(i)] / un) * (v[static_cast<std::size_t>(j)] / vn);

    Muon opt(cfg);
    opt.step(params);

    // cosine similarity between the applied update and -lr * u v^T
    double dot = 0.0, nw = 0.0, nref = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double w = t.values()[static_cast<std::size_t>(i) * n + j];
        const double ref =
            -cfg.lr * (u[static_cast<std::size_t>(i)] / un) * (v[static_cast<std::size_t>(j)] / vn);
        dot += w * ref;
        nw += w * w;
        nref += ref * ref;
      }
    }
    CHECK(dot / std::sqrt(nw * nref) > 0.95);
  }
  SUBCASE("embedding and 1-D gains use the AdamW fallback rule") {
    MuonConfig cfg;
    cfg.fallback.lr = 0.1;
    cfg.fallback.weight_decay = 0.1;
    ParamSet params;
    Tensor embed = Tensor::full({4, 2}, 3.0);
    embed.set_requires_grad(true);
    params.entries.push_back({"embed", embed});
    Tensor gain = Tensor::full({4}, 3.0);
    gain.set_requires_grad(true);
    params.entries.push_back({"norm.gain", gain});
    set_grad(params, 0, 0.0);
    set_grad(params, 1, 0.0);

    CHECK_FALSE(Muon::uses_orthogonalized_rule("embed", embed));
    CHECK_FALSE(Muon::uses_orthogonalized_rule("norm.gain", gain));

    Muon opt(cfg);
    opt.step(params);
    // pure decoupled decay: 3.0 * (1 - 0.1*0.1)
    for (double v : params.entries[0].tensor.values()) CHECK(v == doctest::Approx(2.97));
    for (double v : params.entries[1].tensor.values()) CHECK(v == doctest::Approx(2.97));
  }
}

TEST_CASE("muon update spectral norm stays within lr * shape_scale * 1.35") {
  // a short real training trajectory's worth of random gradients
  MuonConfig cfg;
  cfg.weight_decay = 0.0;
  const int rows = 24, cols = 12;
  ParamSet params = single_param("w", {rows, cols}, 0.0);
  Tensor& t = params.entries[0].tensor;
  Rng rng(23);
  Muon opt(cfg);
  std::vector<double> previous(t.values().begin(), t.values().end());
  for (int step = 0; step < 50; ++step) {
    auto g = t.grad_data();
    for (double& v : g) v = rng.normal() * std::pow(10.0, -rng.next_double());
    opt.step(params);
    std::vector<double> update(t.size());
    for (int i = 0; i < t.size(); ++i) update[static_cast<std::size_t>(i)] = t.values()[i] - previous[static_cast<std::size_t>(i)];
    previous.assign(t.values().begin(), t.values().end());
    t.zero_grad();
    CHECK(oracles::spectral_norm(update, rows, cols) <= cfg.lr * shape_scale(rows, cols) * 1.35);
  }
}

TEST_CASE("optimizer determinism: identical inputs give bitwise-identical results") {
  const auto run = [](std::vector<double>& out, std::string_view which) {
    ParamSet params = single_param("w", {6, 6}, 0.5);
    Rng rng(31);
    auto g = params.entries[0].tensor.grad_data();
    for (double& v : g) v = rng.normal();
    AdamWConfig acfg;
    MuonConfig mcfg;
    std::unique_ptr<Optimizer> opt = make_optimizer(which, acfg, mcfg);
    opt->step(params);
    out.assign(params.entries[0].tensor.values().begin(), params.entries[0].tensor.values().end());
  };
  for (std::string_view which : {"adamw", "muon"}) {
    std::vector<double> a, b;
    run(a, which);
    run(b, which);
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("config validation") {
  AdamWConfig bad;
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  MuonConfig badm;
  badm.ns_iterations = 0;
  CHECK_THROWS_AS(badm.validate(), ConfigError);
  CHECK_THROWS_AS(make_optimizer("sgd", {}, {}), ConfigError);
}
