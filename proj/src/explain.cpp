// SPDX-License-Identifier: Apache-2.0
#include "gridcast/explain.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "gridcast/error.hpp"
#include "gridcast/rng.hpp"

namespace gridcast {

namespace {

std::size_t player_count(const Tensor& x, const Tensor& background) {
  if (x.rank() != 2) throw DimensionError("explain: window must be [W x d], got " + shape_string(x.shape()));
  const std::size_t d = x.cols();
  const bool broadcast = background.rank() == 1 && background.size() == d;
  const bool full = background.rank() == 2 && background.shape() == x.shape();
  if (!broadcast && !full)
    throw DimensionError("explain: background " + shape_string(background.shape()) + " does not match window " +
                         shape_string(x.shape()));
  if (d == 0) throw DimensionError("explain: window has no features");
  return d;
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

Tensor mask_window(const Tensor& x, const Tensor& background, const std::vector<bool>& present) {
  const std::size_t d = player_count(x, background);
  if (present.size() != d) throw DimensionError("explain: coalition mask has wrong length");
  Tensor out = x;
  const bool broadcast = background.rank() == 1;
  for (std::size_t t = 0; t < x.rows(); ++t)
    for (std::size_t j = 0; j < d; ++j)
      if (!present[j]) out(t, j) = broadcast ? background[j] : background(t, j);
  return out;
}

std::vector<double> shapley_exact(const WindowModel& model, const Tensor& x, const Tensor& background) {
  const std::size_t d = player_count(x, background);
  if (d > kMaxExactPlayers)
    throw SizeError("exact Shapley values need 2^d model calls; d = " + std::to_string(d) + " exceeds " +
                    std::to_string(kMaxExactPlayers) + ", use the sampling estimator");
  const std::size_t coalitions = std::size_t{1} << d;
  std::vector<double> f(coalitions);
  parallel_for(coalitions, [&](std::size_t s) {
    std::vector<bool> present(d);
    for (std::size_t j = 0; j < d; ++j) present[j] = (s >> j) & 1u;
    f[s] = model(mask_window(x, background, present));
  });

  // weight[k] = k! (d - k - 1)! / d!
  std::vector<double> weight(d);
  for (std::size_t k = 0; k < d; ++k)
    weight[k] = std::exp(std::lgamma(k + 1.0) + std::lgamma(static_cast<double>(d - k)) - std::lgamma(d + 1.0));

  std::vector<double> phi(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    const std::size_t bit = std::size_t{1} << i;
    for (std::size_t s = 0; s < coalitions; ++s) {
      if (s & bit) continue;
      phi[i] += weight[static_cast<std::size_t>(std::popcount(s))] * (f[s | bit] - f[s]);
    }
  }
  return phi;
}

ShapleyEstimate shapley_sample(const WindowModel& model, const Tensor& x, const Tensor& background,
                               std::size_t n_perms, std::uint64_t seed) {
  const std::size_t d = player_count(x, background);
  if (n_perms == 0) throw ParameterError("shapley sampling needs n_perms >= 1");
  const double base = model(mask_window(x, background, std::vector<bool>(d, false)));

  std::vector<std::vector<double>> marginals(n_perms, std::vector<double>(d));
  parallel_for(n_perms, [&](std::size_t p) {
    Rng rng(derive_seed(seed, p));
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = d; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    std::vector<bool> present(d, false);
    double previous = base;
    for (std::size_t j : order) {
      present[j] = true;
      const double v = model(mask_window(x, background, present));
      marginals[p][j] = v - previous;
      previous = v;
    }
  });

  ShapleyEstimate est{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  for (std::size_t i = 0; i < d; ++i) {
    double mean = 0.0;
    for (const auto& m : marginals) mean += m[i];
    mean /= static_cast<double>(n_perms);
    est.values[i] = mean;
    if (n_perms > 1) {
      double ss = 0.0;
      for (const auto& m : marginals) ss += (m[i] - mean) * (m[i] - mean);
      est.std_errors[i] = std::sqrt(ss / static_cast<double>(n_perms - 1) / static_cast<double>(n_perms));
    }
  }
  return est;
}

std::vector<std::size_t> AttributionReport::ranking() const {
  std::vector<std::size_t> order(mean_abs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mean_abs[a] > mean_abs[b]; });
  return order;
}

double AttributionReport::max_efficiency_gap() const {
  double worst = 0.0;
  for (std::size_t s = 0; s < values.size(); ++s) {
    const double total = std::accumulate(values[s].begin(), values[s].end(), 0.0);
    worst = std::max(worst, std::abs(total - (predictions[s] - baseline)));
  }
  return worst;
}

AttributionReport explain(const WindowModel& model, const std::vector<Tensor>& windows,
                          const std::vector<std::size_t>& sample_ids, const Tensor& background,
                          const std::vector<std::string>& feature_names, const ExplainOptions& options) {
  if (windows.empty()) throw DataError("explain: no windows to attribute");
  if (sample_ids.size() != windows.size()) throw DimensionError("explain: one sample id per window required");
  const std::size_t d = player_count(windows.front(), background);
  if (feature_names.size() != d) throw DimensionError("explain: feature name count does not match columns");

  bool exact = false;
  switch (options.method) {
    case ShapleyMethod::automatic: exact = d <= kMaxExactPlayers; break;
    case ShapleyMethod::exact: exact = true; break;
    case ShapleyMethod::sampling: exact = false; break;
  }

  AttributionReport r;
  r.features = feature_names;
  r.method = exact ? "exact" : "permutation_sampling";
  r.sample_ids = sample_ids;
  r.baseline = model(mask_window(windows.front(), background, std::vector<bool>(d, false)));
  r.mean_abs.assign(d, 0.0);
  for (std::size_t s = 0; s < windows.size(); ++s) {
    r.predictions.push_back(model(windows[s]));
    if (exact) {
      r.values.push_back(shapley_exact(model, windows[s], background));
    } else {
      auto est = shapley_sample(model, windows[s], background, options.n_perms, derive_seed(options.seed, sample_ids[s]));
      r.values.push_back(std::move(est.values));
      r.std_errors.push_back(std::move(est.std_errors));
    }
    for (std::size_t j = 0; j < d; ++j) r.mean_abs[j] += std::abs(r.values.back()[j]);
  }
  for (auto& v : r.mean_abs) v /= static_cast<double>(windows.size());
  return r;
}

std::vector<std::size_t> choose_samples(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (count >= n) return all;
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) std::swap(all[i], all[i + rng.below(n - i)]);
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

std::string attribution_json(const AttributionReport& report) {
  nlohmann::ordered_json j;
  j["method"] = report.method;
  j["baseline"] = report.baseline;
  j["max_efficiency_gap"] = report.max_efficiency_gap();
  nlohmann::ordered_json ranking = nlohmann::ordered_json::array();
  for (std::size_t i : report.ranking())
    ranking.push_back({{"feature", report.features[i]}, {"mean_abs_shapley", report.mean_abs[i]}});
  j["ranking"] = ranking;
  nlohmann::ordered_json samples = nlohmann::ordered_json::array();
  for (std::size_t s = 0; s < report.values.size(); ++s) {
    nlohmann::ordered_json e;
    e["sample"] = report.sample_ids[s];
    e["prediction"] = report.predictions[s];
    e["values"] = report.values[s];
    if (!report.std_errors.empty()) e["std_errors"] = report.std_errors[s];
    samples.push_back(e);
  }
  j["features"] = report.features;
  j["samples"] = samples;
  return j.dump(2) + "\n";
}

void write_shapley_csv(const std::string& path, const AttributionReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "feature,mean_abs_shapley\n";
  for (std::size_t i : report.ranking()) out << report.features[i] << ',' << format_double(report.mean_abs[i]) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace gridcast
