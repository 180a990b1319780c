// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gridcast/tensor.hpp"

namespace gridcast {

// Scalar model over a [W x d] window. Must be safe to call concurrently.
using WindowModel = std::function<double(const Tensor&)>;

// Players are columns: a masked column takes its background value at every
// timestep. `background` is either [d] (broadcast over time) or [W x d].
Tensor mask_window(const Tensor& x, const Tensor& background, const std::vector<bool>& present);

inline constexpr std::size_t kMaxExactPlayers = 12;

// Exact Shapley values by enumerating all 2^d coalitions (d <= 12).
std::vector<double> shapley_exact(const WindowModel& model, const Tensor& x, const Tensor& background);

struct ShapleyEstimate {
  std::vector<double> values;
  std::vector<double> std_errors;  // 0 when n_perms == 1
};

// Permutation sampling; permutation p is drawn from derive_seed(seed, p).
ShapleyEstimate shapley_sample(const WindowModel& model, const Tensor& x, const Tensor& background,
                               std::size_t n_perms, std::uint64_t seed);

enum class ShapleyMethod { automatic, exact, sampling };

struct ExplainOptions {
  ShapleyMethod method = ShapleyMethod::automatic;  // exact when d <= 12
  std::size_t n_perms = 200;
  std::uint64_t seed = 0;
};

struct AttributionReport {
  std::vector<std::string> features;
  std::string method;
  double baseline = 0.0;                           // model(background)
  std::vector<std::size_t> sample_ids;
  std::vector<double> predictions;                 // model(x) per sample
  std::vector<std::vector<double>> values;         // [sample][feature]
  std::vector<std::vector<double>> std_errors;     // empty for exact
  std::vector<double> mean_abs;                    // per feature

  // Feature indices by decreasing mean |value|; ties keep column order.
  std::vector<std::size_t> ranking() const;
  // Largest |sum(values) - (prediction - baseline)| over samples.
  double max_efficiency_gap() const;
};

AttributionReport explain(const WindowModel& model, const std::vector<Tensor>& windows,
                          const std::vector<std::size_t>& sample_ids, const Tensor& background,
                          const std::vector<std::string>& feature_names, const ExplainOptions& options);

// `count` distinct indices from [0, n), sorted, chosen by seed. All of them
// when count >= n.
std::vector<std::size_t> choose_samples(std::size_t n, std::size_t count, std::uint64_t seed);

std::string attribution_json(const AttributionReport& report);
// feature,mean_abs_shapley in ranking order.
void write_shapley_csv(const std::string& path, const AttributionReport& report);

}  // namespace gridcast
