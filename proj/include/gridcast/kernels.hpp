// SPDX-License-Identifier: Apache-2.0
#pragma once

// Hot loops used by the tensor, baseline and training code. Each kernel has a
// serial reference and an OpenMP version; both visit every output element
// with the same inner-loop order so their results are bit-identical.

#include <cstddef>
#include <span>

namespace gridcast::kernels {

// c[m x n] = a[m x k] * b[k x n]
// c[m x n] = a^T b with a[k x m], b[k x n]
// c[m x n] = a b^T with a[m x k], b[n x k]
// dist[q x n] = squared euclidean distance between query rows and point rows
namespace serial {
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);
void squared_distances(std::span<const double> queries, std::span<const double> points,
                       std::span<double> dist, std::size_t q, std::size_t n, std::size_t d);
}  // namespace serial

namespace parallel {
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);
void squared_distances(std::span<const double> queries, std::span<const double> points,
                       std::span<double> dist, std::size_t q, std::size_t n, std::size_t d);
}  // namespace parallel

// Work (multiply-adds) above which the tensor layer dispatches to the
// parallel kernels.
inline constexpr std::size_t kParallelWorkThreshold = std::size_t{1} << 18;

int max_threads();

}  // namespace gridcast::kernels
