// Copyright (c) 2026 The groklab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstring>

#include <doctest.h>

#include "groklab/tensor.hpp"
#include "support/oracles.hpp"

using namespace groklab;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.mutable_values()) v = scale * rng.normal();
  return t;
}

}  // namespace

TEST_CASE("matmul identity and hand example") {
  Rng rng(1);
  Tensor a = random_tensor({2, 2}, rng);
  Tensor eye = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  Tensor prod = matmul(a, eye);
  for (int i = 0; i < 4; ++i) CHECK(prod.values()[i] == doctest::Approx(a.values()[i]).epsilon(1e-15));

  Tensor b = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  Tensor c = Tensor::from_values({2, 1}, {5, 6});
  Tensor r = matmul(b, c);
  CHECK(r.shape() == std::vector<int>{2, 1});
  CHECK(r.values()[0] == doctest::Approx(17.0));
  CHECK(r.values()[1] == doctest::Approx(39.0));
}

TEST_CASE("matmul rejects mismatched inner dimensions, naming both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), ShapeError);
}

TEST_CASE("matmul associativity on random conformable triples") {
  Rng rng(42);
  for (int trial = 0; trial < 5; ++trial) {
    const int m = 2 + (int)rng.next_below(6), k = 2 + (int)rng.next_below(6);
    const int n = 2 + (int)rng.next_below(6), p = 2 + (int)rng.next_below(6);
    Tensor a = random_tensor({m, k}, rng);
    Tensor b = random_tensor({k, n}, rng);
    Tensor c = random_tensor({n, p}, rng);
    Tensor left = matmul(matmul(a, b), c);
    Tensor right = matmul(a, matmul(b, c));
    for (int i = 0; i < left.size(); ++i) {
      const double denom = std::max(1.0, std::abs(left.values()[i]));
      CHECK(std::abs(left.values()[i] - right.values()[i]) / denom < 1e-9);
    }
  }
}

TEST_CASE("silu values and gradient at zero") {
  Tensor x = Tensor::from_values({3}, {0.0, 1.0, -1.0});
  Tensor y = silu(x);
  CHECK(y.values()[0] == doctest::Approx(0.0));
  CHECK(y.values()[1] == doctest::Approx(0.7310585786300049));
  CHECK(y.values()[2] == doctest::Approx(-0.2689414213699951));

  // analytic derivative at 0 is sigma(0) = 0.5
  Tensor x0 = Tensor::scalar(0.0).set_requires_grad(true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(sum(silu(x0)));
  }
  CHECK(x0.grad()[0] == doctest::Approx(0.5));

  const double err = grad_check([](const Tensor& t) { return sum(silu(t)); }, Tensor::from_values({1}, {0.0}));
  CHECK(err < 1e-6);
}

TEST_CASE("dropout_mask contract") {
  Rng rng(3);
  SUBCASE("rate 0 is the identity mask") {
    Tensor m = dropout_mask({4, 4}, 0.0, rng);
    for (double v : m.values()) CHECK(v == 1.0);
  }
  SUBCASE("fixed seed reproduces the mask") {
    Rng r1(77), r2(77);
    Tensor m1 = dropout_mask({32}, 0.5, r1);
    Tensor m2 = dropout_mask({32}, 0.5, r2);
    CHECK(std::memcmp(m1.values().data(), m2.values().data(), 32 * sizeof(double)) == 0);
  }
  SUBCASE("inverted scaling keeps the mean near one") {
    Tensor m = dropout_mask({100000}, 0.5, rng);
    double mean = 0.0;
    for (double v : m.values()) mean += v;
    mean /= m.size();
    CHECK(mean == doctest::Approx(1.0).epsilon(0.02));
  }
  SUBCASE("rate >= 1 is a configuration error") {
    CHECK_THROWS_AS(dropout_mask({2}, 1.0, rng), ConfigError);
  }
}

TEST_CASE("backward basics") {
  SUBCASE("loss = sum(x) gives all-ones gradient") {
    Tensor x = Tensor::zeros({2, 3}).set_requires_grad(true);
    Tape tape;
    {
      Tape::Scope scope(tape);
      tape.backward(sum(x));
    }
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  SUBCASE("loss = sum(x*x) doubles the values") {
    Tensor x = Tensor::from_values({3}, {1, 2, 3}).set_requires_grad(true);
    Tape tape;
    {
      Tape::Scope scope(tape);
      tape.backward(sum(mul(x, x)));
    }
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
    CHECK(x.grad()[2] == doctest::Approx(6.0));
  }
  SUBCASE("non-scalar loss is a contract error") {
    Tensor x = Tensor::zeros({2, 2}).set_requires_grad(true);
    Tape tape;
    Tape::Scope scope(tape);
    Tensor y = add(x, x);
    CHECK_THROWS_AS(tape.backward(y), ContractError);
  }
  SUBCASE("fan-out accumulates additively") {
    Tensor x = Tensor::from_values({2}, {1.0, 2.0}).set_requires_grad(true);
    Tape tape;
    {
      Tape::Scope scope(tape);
      Tensor y = add(x, x);  // dy/dx = 2
      tape.backward(sum(y));
    }
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(2.0));
  }
}

TEST_CASE("grad_check on trivial and composite functions") {
  Rng rng(11);
  Tensor x = random_tensor({3, 3}, rng);
  CHECK(grad_check([](const Tensor& t) { return sum(t); }, x) < 1e-10);

  // softmax-cross-entropy style composite: exp-normalize via primitives
  Tensor w = random_tensor({3, 4}, rng);
  const double err = grad_check(
      [&](const Tensor& t) { return mean(silu(matmul(t, w))); }, x);
  CHECK(err < 1e-4);
}

TEST_CASE("gradient check sweep over every registered op") {
  Rng rng(2718);
  const auto run = [&](const char* name, const std::function<Tensor(const Tensor&)>& f,
                       std::vector<int> shape, double tol = 1e-6) {
    for (int point = 0; point < 10; ++point) {
      Tensor x = random_tensor(shape, rng);
      const double err = grad_check(f, x);
      INFO(name, " point ", point, " err ", err);
      CHECK(err < tol);
    }
  };

  Tensor w = random_tensor({4, 3}, rng);
  Tensor gain = random_tensor({4}, rng, 0.5);
  for (double& v : gain.mutable_values()) v += 1.0;

  run("add", [](const Tensor& t) { return sum(add(t, t)); }, {2, 4});
  run("sub", [](const Tensor& t) { return sum(sub(scale(t, 2.0), t)); }, {2, 4});
  run("mul", [](const Tensor& t) { return sum(mul(t, t)); }, {2, 4});
  run("scale", [](const Tensor& t) { return sum(scale(t, -1.7)); }, {2, 4});
  run("silu", [](const Tensor& t) { return sum(silu(t)); }, {2, 4});
  run("mean", [](const Tensor& t) { return mean(mul(t, t)); }, {2, 4});
  run("reshape", [](const Tensor& t) { return sum(mul(reshape(t, {4, 2}), reshape(t, {4, 2}))); },
      {2, 4});
  run("transpose", [](const Tensor& t) { return sum(mul(transpose(t), transpose(t))); }, {2, 4});
  run("matmul", [&](const Tensor& t) { return sum(matmul(t, w)); }, {2, 4}, 1e-7);
  run("gather_rows", [](const Tensor& t) { return sum(gather_rows(t, {1, 1, 0})); }, {3, 2});
  run("rmsnorm", [&](const Tensor& t) { return sum(mul(rmsnorm(t, gain, 1e-5), rmsnorm(t, gain, 1e-5))); },
      {3, 4});
  run("rmsnorm gain", [&](const Tensor& t) { return sum(rmsnorm(w, t, 1e-5)); }, {3});
  run("rope", [](const Tensor& t) { return sum(mul(rope_rotate(t, 1, 3, 2, 100.0), rope_rotate(t, 1, 3, 2, 100.0))); },
      {3, 4});
  run("attention-q", [&](const Tensor& t) {
        Tensor kv = Tensor::from_values({4, 4}, {0.3, -0.2, 0.5, 0.9, -0.6, 0.1, 0.2, -0.4,
                                                 0.8, 0.7, -0.1, 0.3, -0.5, 0.2, 0.6, -0.9});
        return sum(causal_attention(t, kv, kv, 1, 4, 2));
      },
      {4, 4});
  run("attention-kv", [&](const Tensor& t) { return sum(mul(causal_attention(t, t, t, 2, 2, 2),
                                                            causal_attention(t, t, t, 2, 2, 2))); },
      {4, 4});
}

TEST_CASE("attention matches the independent reference implementation") {
  Rng rng(5);
  const int batch = 2, seq = 4, heads = 2, d = 8;
  Tensor q = random_tensor({batch * seq, d}, rng);
  Tensor k = random_tensor({batch * seq, d}, rng);
  Tensor v = random_tensor({batch * seq, d}, rng);
  Tensor out = causal_attention(q, k, v, batch, seq, heads);
  const std::vector<double> want =
      oracles::reference_attention(q.values(), k.values(), v.values(), batch, seq, heads);
  for (int i = 0; i < out.size(); ++i) {
    CHECK(out.values()[i] == doctest::Approx(want[static_cast<std::size_t>(i)]).epsilon(1e-12));
  }
}

TEST_CASE("forward and backward are bitwise deterministic") {
  const auto run_once = [](std::vector<double>& grads_out) {
    Rng rng(99);
    Tensor x = Tensor::zeros({4, 6});
    for (double& v : x.mutable_values()) v = rng.normal();
    x.set_requires_grad(true);
    Tensor w = Tensor::zeros({6, 3});
    for (double& v : w.mutable_values()) v = rng.normal();
    Tape tape;
    double loss = 0.0;
    {
      Tape::Scope scope(tape);
      Tensor y = mean(silu(matmul(x, w)));
      loss = y.item();
      tape.backward(y);
    }
    grads_out.assign(x.grad().begin(), x.grad().end());
    return loss;
  };
  std::vector<double> g1, g2;
  const double l1 = run_once(g1);
  const double l2 = run_once(g2);
  CHECK(std::memcmp(&l1, &l2, sizeof(double)) == 0);
  REQUIRE(g1.size() == g2.size());
  CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}

TEST_CASE("ops run pure-forward without an active tape") {
  Tensor x = Tensor::from_values({2}, {1.0, 2.0}).set_requires_grad(true);
  Tensor y = mul(x, x);
  CHECK_FALSE(y.has_grad());
  CHECK(y.values()[1] == doctest::Approx(4.0));
}
