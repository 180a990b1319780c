// SPDX-License-Identifier: Apache-2.0
#include <vector>

#include "doctest.h"
#include "gridcast/kernels.hpp"
#include "gridcast/rng.hpp"

using namespace gridcast;

namespace {

std::vector<double> random_values(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
  Rng rng(2024);
  const std::size_t m = 37, k = 53, n = 29;
  const auto a = random_values(m * k, rng);
  const auto b = random_values(k * n, rng);
  const auto at = random_values(k * m, rng);
  const auto bt = random_values(n * k, rng);
  std::vector<double> s(m * n), p(m * n);

  kernels::serial::matmul(a, b, s, m, k, n);
  kernels::parallel::matmul(a, b, p, m, k, n);
  CHECK(s == p);

  kernels::serial::matmul_tn(at, b, s, m, k, n);
  kernels::parallel::matmul_tn(at, b, p, m, k, n);
  CHECK(s == p);

  kernels::serial::matmul_nt(a, bt, s, m, k, n);
  kernels::parallel::matmul_nt(a, bt, p, m, k, n);
  CHECK(s == p);

  std::vector<double> ds(m * n), dp(m * n);
  kernels::serial::squared_distances(a, bt, ds, m, n, k);
  kernels::parallel::squared_distances(a, bt, dp, m, n, k);
  CHECK(ds == dp);
}

TEST_CASE("serial matmul matches a naive triple loop") {
  Rng rng(7);
  const std::size_t m = 5, k = 4, n = 3;
  const auto a = random_values(m * k, rng);
  const auto b = random_values(k * n, rng);
  std::vector<double> c(m * n);
  kernels::serial::matmul(a, b, c, m, k, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      CHECK(c[i * n + j] == doctest::Approx(acc).epsilon(1e-14));
    }
}

TEST_CASE("squared distances") {
  const std::vector<double> q{0, 0, 1, 1};
  const std::vector<double> pts{3, 4, 1, 1};
  std::vector<double> d(4);
  kernels::serial::squared_distances(q, pts, d, 2, 2, 2);
  CHECK(d == std::vector<double>{25, 2, 13, 0});
}
