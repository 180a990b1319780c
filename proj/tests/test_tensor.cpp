// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "gridcast/error.hpp"
#include "gridcast/rng.hpp"
#include "gridcast/tensor.hpp"

using namespace gridcast;

TEST_CASE("matmul examples") {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  CHECK(matmul(Tensor::identity(2), a) == a);
  CHECK(matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{0}, {0}})) == Tensor::matrix({{0}}));
  CHECK(matmul(a, Tensor::matrix({{5}, {6}})) == Tensor::matrix({{17}, {39}}));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    matmul(Tensor({2, 3}), Tensor({2, 3}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("transposed products agree with explicit transposes") {
  Rng rng(3);
  const Tensor a = testing::random_tensor({4, 3}, rng);
  const Tensor b = testing::random_tensor({4, 5}, rng);
  const Tensor c = testing::random_tensor({6, 3}, rng);
  const Tensor tn = matmul_tn(a, b), ref_tn = matmul(transpose(a), b);
  const Tensor nt = matmul_nt(a, c), ref_nt = matmul(a, transpose(c));
  for (std::size_t i = 0; i < tn.size(); ++i) CHECK(tn[i] == doctest::Approx(ref_tn[i]).epsilon(1e-14));
  for (std::size_t i = 0; i < nt.size(); ++i) CHECK(nt[i] == doctest::Approx(ref_nt[i]).epsilon(1e-14));
}

TEST_CASE("identity is exact for random matrices") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor a = testing::random_tensor({5, 7}, rng, 100.0);
    CHECK(matmul(Tensor::identity(5), a) == a);
  }
}

TEST_CASE("activations") {
  CHECK(activate(Tensor::vector({0.0}), Activation::sigmoid)[0] == 0.5);
  CHECK(activate(Tensor::vector({0.0}), Activation::tanh)[0] == 0.0);
  const Tensor r = activate(Tensor::vector({-3.2, 3.2}), Activation::relu);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 3.2);
  const Tensor s = activate(Tensor::vector({-800.0, 800.0, 12.0}), Activation::sigmoid);
  CHECK(all_finite(s));
  CHECK(s[0] >= 0.0);
  CHECK(s[1] <= 1.0);
}

TEST_CASE("softmax examples") {
  const Tensor u = softmax(Tensor::vector({2.5, 2.5, 2.5}));
  for (double v : u.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(softmax(Tensor::vector({-7.0}))[0] == 1.0);
  const Tensor q = softmax(Tensor::vector({0.0, std::log(3.0)}));
  CHECK(q[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(q[1] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK_THROWS_AS(softmax(Tensor({0})), DimensionError);
}

TEST_CASE("softmax is shift invariant and normalized") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = testing::random_tensor({1 + rng.below(9)}, rng, 30.0);
    const double shift = rng.uniform(-500.0, 500.0);
    Tensor shifted = x;
    for (auto& v : shifted.values()) v += shift;
    const Tensor a = softmax(x), b = softmax(shifted);
    CHECK(std::abs(sum(a) - 1.0) < 1e-12);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i] > 0.0);
      CHECK(std::abs(a[i] - b[i]) < 1e-12);
    }
  }
}

TEST_CASE("rng streams are reproducible") {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const double x = a.normal(), y = b.normal();
    CHECK(x == y);
    differs = differs || (c.normal() != x);
  }
  CHECK(differs);
  Rng u(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    CHECK(u.below(7) < 7);
  }
}

TEST_CASE("rng normal draws have unit moments") {
  Rng rng(9);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    s += v;
    s2 += v * v;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(s2 / n - 1.0) < 0.02);
}
