// SPDX-License-Identifier: Apache-2.0
#include "gridcast/kernels.hpp"

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gridcast::kernels {

namespace {

inline void matmul_row(const double* a, const double* b, double* c, std::size_t k,
                       std::size_t n) {
  std::fill(c, c + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a[p];
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
  }
}

// Row i of a^T b: sum over p of a[p, i] * b[p, :].
inline void matmul_tn_row(const double* a, const double* b, double* c, std::size_t i,
                          std::size_t m, std::size_t k, std::size_t n) {
  std::fill(c, c + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a[p * m + i];
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
  }
}

inline void matmul_nt_row(const double* a, const double* b, double* c, std::size_t k,
                          std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    const double* brow = b + j * k;
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += a[p] * brow[p];
    c[j] = acc;
  }
}

inline void distance_row(const double* q, const double* points, double* dist, std::size_t n,
                         std::size_t d) {
  for (std::size_t j = 0; j < n; ++j) {
    const double* p = points + j * d;
    double acc = 0.0;
    for (std::size_t f = 0; f < d; ++f) {
      const double diff = q[f] - p[f];
      acc += diff * diff;
    }
    dist[j] = acc;
  }
}

}  // namespace

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) matmul_row(a.data() + i * k, b.data(), c.data() + i * n, k, n);
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) matmul_tn_row(a.data(), b.data(), c.data() + i * n, i, m, k, n);
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) matmul_nt_row(a.data() + i * k, b.data(), c.data() + i * n, k, n);
}

void squared_distances(std::span<const double> queries, std::span<const double> points,
                       std::span<double> dist, std::size_t q, std::size_t n, std::size_t d) {
  for (std::size_t i = 0; i < q; ++i)
    distance_row(queries.data() + i * d, points.data(), dist.data() + i * n, n, d);
}

}  // namespace serial

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    matmul_row(a.data() + r * k, b.data(), c.data() + r * n, k, n);
  }
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    matmul_tn_row(a.data(), b.data(), c.data() + r * n, r, m, k, n);
  }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    matmul_nt_row(a.data() + r * k, b.data(), c.data() + r * n, k, n);
  }
}

void squared_distances(std::span<const double> queries, std::span<const double> points,
                       std::span<double> dist, std::size_t q, std::size_t n, std::size_t d) {
  const auto rows = static_cast<std::ptrdiff_t>(q);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    distance_row(queries.data() + r * d, points.data(), dist.data() + r * n, n, d);
  }
}

}  // namespace parallel

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace gridcast::kernels
