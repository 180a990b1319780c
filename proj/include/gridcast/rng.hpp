// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <cstddef>

namespace gridcast {

// splitmix64 finalizer; also used to derive independent child seeds.
std::uint64_t mix64(std::uint64_t x);

// Seed for a sub-stream identified by (seed, a, b). Used so that per-sample
// and per-tree streams do not depend on thread scheduling.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

/// xoshiro256** generator seeded through splitmix64. Streams are identical
/// on every platform for a given seed; normal draws use an in-repo
/// Box-Muller transform rather than <random> distributions, whose output is
/// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t draws() const { return draws_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n); n > 0.
  std::size_t below(std::size_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::uint64_t seed_;
  std::uint64_t draws_ = 0;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace gridcast
