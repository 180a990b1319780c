// SPDX-License-Identifier: Apache-2.0
#include "gridcast/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include "gridcast/error.hpp"
#include "gridcast/kernels.hpp"
#include "gridcast/rng.hpp"

namespace gridcast {

void FlatSamples::push_back(std::span<const double> features, double target) {
  if (size() == 0 && x.empty()) dim = features.size();
  if (features.size() != dim)
    throw DimensionError("flat sample has " + std::to_string(features.size()) + " features, expected " +
                         std::to_string(dim));
  x.insert(x.end(), features.begin(), features.end());
  y.push_back(target);
}

FlatSamples FlatSamples::from(const SupervisedSet& set) {
  FlatSamples out;
  if (set.inputs.size() != set.targets.size()) throw DimensionError("inputs and targets differ in length");
  for (std::size_t i = 0; i < set.size(); ++i) out.push_back(flatten(set.inputs[i]), set.targets[i]);
  return out;
}

namespace {

void require_train(const FlatSamples& train, const char* who) {
  if (train.size() == 0) throw DataError(std::string(who) + ": empty training set");
  if (train.x.size() != train.size() * train.dim) throw DimensionError(std::string(who) + ": malformed samples");
}

void require_query(const FlatSamples& train, std::size_t dim) {
  if (dim != train.dim)
    throw DimensionError("query has " + std::to_string(dim) + " features, model expects " +
                         std::to_string(train.dim));
}

double knn_from_distances(const FlatSamples& train, std::span<const double> dist, std::size_t k, KnnMode mode,
                          std::vector<std::size_t>& order) {
  order.resize(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); });
  if (mode == KnnMode::regression) {
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += train.y[order[i]];
    return s / static_cast<double>(k);
  }
  std::size_t ones = 0;
  for (std::size_t i = 0; i < k; ++i) ones += train.y[order[i]] != 0.0 ? 1 : 0;
  return 2 * ones > k ? 1.0 : 0.0;
}

void check_k(const FlatSamples& train, std::size_t k) {
  if (k == 0 || k > train.size())
    throw ParameterError("knn: k must be in [1, " + std::to_string(train.size()) + "], got " + std::to_string(k));
}

}  // namespace

double knn_predict(const FlatSamples& train, std::span<const double> query, std::size_t k, KnnMode mode) {
  require_train(train, "knn");
  require_query(train, query.size());
  check_k(train, k);
  std::vector<double> dist(train.size());
  kernels::serial::squared_distances(query, train.x, dist, 1, train.size(), train.dim);
  std::vector<std::size_t> order;
  return knn_from_distances(train, dist, k, mode, order);
}

std::vector<double> knn_predict_all(const FlatSamples& train, const FlatSamples& queries, std::size_t k,
                                    KnnMode mode) {
  require_train(train, "knn");
  require_query(train, queries.dim);
  check_k(train, k);
  constexpr std::size_t kBlock = 256;
  const std::size_t n = train.size();
  std::vector<double> out(queries.size());
  std::vector<double> dist;
  for (std::size_t start = 0; start < queries.size(); start += kBlock) {
    const std::size_t q = std::min(kBlock, queries.size() - start);
    dist.assign(q * n, 0.0);
    kernels::parallel::squared_distances({queries.x.data() + start * queries.dim, q * queries.dim}, train.x, dist,
                                         q, n, train.dim);
#pragma omp parallel
    {
      std::vector<std::size_t> order;
#pragma omp for schedule(static)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(q); ++i)
        out[start + i] = knn_from_distances(train, {dist.data() + i * n, n}, k, mode, order);
    }
  }
  return out;
}

double BayesRidgeModel::predict(std::span<const double> features) const {
  if (features.size() != weights.size())
    throw DimensionError("ridge: query has " + std::to_string(features.size()) + " features, model expects " +
                         std::to_string(weights.size()));
  double s = intercept;
  for (std::size_t j = 0; j < weights.size(); ++j) s += weights[j] * features[j];
  return s;
}

std::vector<double> BayesRidgeModel::predict_all(const FlatSamples& samples) const {
  std::vector<double> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) out.push_back(predict(samples.row(i)));
  return out;
}

std::vector<double> cholesky_solve(std::vector<double> a, std::vector<double> b, std::size_t n) {
  if (a.size() != n * n || b.size() != n) throw DimensionError("cholesky: inconsistent system size");
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a[i * n + i]));
  const double floor = std::max(max_diag, 1.0) * 1e-13;
  // Lower factor overwrites the lower triangle.
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t p = 0; p < j; ++p) d -= a[j * n + p] * a[j * n + p];
    if (!(d > floor)) throw NumericError("cholesky: matrix is singular or not positive definite");
    const double l = std::sqrt(d);
    a[j * n + j] = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t p = 0; p < j; ++p) s -= a[i * n + p] * a[j * n + p];
      a[i * n + j] = s / l;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t p = 0; p < i; ++p) s -= a[i * n + p] * b[p];
    b[i] = s / a[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t p = i + 1; p < n; ++p) s -= a[p * n + i] * b[p];
    b[i] = s / a[i * n + i];
  }
  return b;
}

BayesRidgeModel bayes_ridge_fit(const FlatSamples& train, double alpha, double lambda) {
  require_train(train, "bayesian ridge");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ParameterError("ridge: alpha must be a finite value >= 0");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ParameterError("ridge: lambda must be positive");
  const std::size_t n = train.size(), d = train.dim;

  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += train.x[i * d + j];
  for (auto& m : mean) m /= static_cast<double>(n);
  double y_mean = 0.0;
  for (double y : train.y) y_mean += y;
  y_mean /= static_cast<double>(n);

  std::vector<double> xc(n * d), yc(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) xc[i * d + j] = train.x[i * d + j] - mean[j];
    yc[i] = train.y[i] - y_mean;
  }

  std::vector<double> a(d * d), b(d);
  kernels::parallel::matmul_tn(xc, xc, a, d, n, d);
  kernels::serial::matmul_tn(xc, yc, b, d, n, 1);
  for (auto& v : a) v *= lambda;
  for (auto& v : b) v *= lambda;
  for (std::size_t j = 0; j < d; ++j) a[j * d + j] += alpha;

  BayesRidgeModel model;
  try {
    model.weights = cholesky_solve(std::move(a), std::move(b), d);
  } catch (const NumericError&) {
    throw NumericError("bayesian ridge: normal equations are singular (alpha = " + std::to_string(alpha) +
                       "); use a prior precision alpha > 0");
  }
  model.intercept = y_mean;
  for (std::size_t j = 0; j < d; ++j) model.intercept -= model.weights[j] * mean[j];
  return model;
}

void ForestConfig::validate() const {
  if (n_trees == 0) throw ParameterError("forest: n_trees must be >= 1");
  if (max_depth == 0) throw ParameterError("forest: max_depth must be >= 1");
  if (min_leaf == 0) throw ParameterError("forest: min_leaf must be >= 1");
}

namespace {

struct TreeBuilder {
  const FlatSamples& train;
  std::size_t max_depth;
  std::size_t min_leaf;
  std::size_t per_split;
  Rng rng;
  std::vector<RegressionTree::Node>& nodes;
  std::vector<std::size_t> features;
  std::vector<std::pair<double, std::size_t>> column;  // (value, row)

  std::int32_t grow(std::vector<std::size_t>& rows, std::size_t depth) {
    const std::int32_t id = static_cast<std::int32_t>(nodes.size());
    nodes.emplace_back();
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t r : rows) {
      sum += train.y[r];
      sumsq += train.y[r] * train.y[r];
    }
    const double count = static_cast<double>(rows.size());
    nodes[id].value = sum / count;
    const double parent_sse = sumsq - sum * sum / count;
    if (depth >= max_depth || rows.size() < 2 * min_leaf || parent_sse <= 1e-12 * std::max(1.0, sumsq)) return id;

    // Partial Fisher-Yates draw of the candidate features.
    for (std::size_t i = 0; i < per_split; ++i) std::swap(features[i], features[i + rng.below(features.size() - i)]);

    double best_score = sum * sum / count + 1e-12 * std::max(1.0, std::abs(parent_sse));
    std::int32_t best_feature = -1;
    double best_threshold = 0.0;
    for (std::size_t f = 0; f < per_split; ++f) {
      const std::size_t feat = features[f];
      column.clear();
      for (std::size_t r : rows) column.emplace_back(train.x[r * train.dim + feat], r);
      std::sort(column.begin(), column.end());
      double left = 0.0;
      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        left += train.y[column[i].second];
        const std::size_t nl = i + 1, nr = column.size() - nl;
        if (column[i].first == column[i + 1].first) continue;
        if (nl < min_leaf || nr < min_leaf) continue;
        const double right = sum - left;
        const double score = left * left / static_cast<double>(nl) + right * right / static_cast<double>(nr);
        if (score > best_score) {
          best_score = score;
          best_feature = static_cast<std::int32_t>(feat);
          best_threshold = 0.5 * (column[i].first + column[i + 1].first);
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<std::size_t> left_rows, right_rows;
    for (std::size_t r : rows)
      (train.x[r * train.dim + static_cast<std::size_t>(best_feature)] < best_threshold ? left_rows : right_rows)
          .push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    nodes[id].feature = best_feature;
    nodes[id].threshold = best_threshold;
    const std::int32_t l = grow(left_rows, depth + 1);
    nodes[id].left = l;
    const std::int32_t r = grow(right_rows, depth + 1);
    nodes[id].right = r;
    return id;
  }
};

}  // namespace

RegressionTree RegressionTree::fit(const FlatSamples& train, std::vector<std::size_t> rows, std::size_t max_depth,
                                   std::size_t min_leaf, std::size_t features_per_split, std::uint64_t seed) {
  require_train(train, "regression tree");
  if (rows.empty()) throw DataError("regression tree: no rows to fit");
  for (std::size_t r : rows)
    if (r >= train.size()) throw DimensionError("regression tree: row index out of range");
  if (max_depth == 0 || min_leaf == 0) throw ParameterError("regression tree: max_depth and min_leaf must be >= 1");
  RegressionTree tree;
  tree.dim_ = train.dim;
  TreeBuilder b{train, max_depth, min_leaf, std::clamp<std::size_t>(features_per_split, 1, train.dim), Rng(seed),
                tree.nodes_, {}, {}};
  b.features.resize(train.dim);
  std::iota(b.features.begin(), b.features.end(), std::size_t{0});
  b.grow(rows, 0);
  return tree;
}

double RegressionTree::predict(std::span<const double> features) const {
  if (nodes_.empty()) throw StateError("regression tree has not been fitted");
  if (features.size() != dim_) throw DimensionError("regression tree: query has wrong feature count");
  std::int32_t i = 0;
  while (nodes_[i].feature >= 0)
    i = features[static_cast<std::size_t>(nodes_[i].feature)] < nodes_[i].threshold ? nodes_[i].left : nodes_[i].right;
  return nodes_[i].value;
}

std::size_t RegressionTree::depth() const {
  std::vector<std::size_t> d(nodes_.size(), 0);
  std::size_t worst = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    worst = std::max(worst, d[i]);
    if (nodes_[i].feature >= 0) {
      d[static_cast<std::size_t>(nodes_[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes_[i].right)] = d[i] + 1;
    }
  }
  return worst;
}

RandomForest RandomForest::fit(const FlatSamples& train, const ForestConfig& config) {
  config.validate();
  require_train(train, "random forest");
  if (train.size() < 2) throw DataError("random forest: need at least 2 samples");
  const std::size_t per_split =
      config.feature_subsample > 0
          ? config.feature_subsample
          : std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(train.dim)))));

  RandomForest forest;
  forest.dim_ = train.dim;
  forest.trees_.resize(config.n_trees);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(config.n_trees); ++t) {
    try {
      const std::uint64_t seed = derive_seed(config.seed, static_cast<std::uint64_t>(t));
      std::vector<std::size_t> rows(train.size());
      if (config.bootstrap) {
        Rng rng(derive_seed(seed, 0xB00Fu));
        for (auto& r : rows) r = rng.below(train.size());
      } else {
        std::iota(rows.begin(), rows.end(), std::size_t{0});
      }
      forest.trees_[t] = RegressionTree::fit(train, std::move(rows), config.max_depth, config.min_leaf, per_split, seed);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return forest;
}

double RandomForest::predict(std::span<const double> features) const {
  if (trees_.empty()) throw StateError("random forest has not been fitted");
  if (features.size() != dim_) throw DimensionError("random forest: query has wrong feature count");
  double s = 0.0;
  for (const auto& t : trees_) s += t.predict(features);
  return s / static_cast<double>(trees_.size());
}

std::vector<double> RandomForest::predict_all(const FlatSamples& samples) const {
  if (trees_.empty()) throw StateError("random forest has not been fitted");
  if (samples.size() > 0 && samples.dim != dim_) throw DimensionError("random forest: query has wrong feature count");
  std::vector<double> out(samples.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(samples.size()); ++i) out[i] = predict(samples.row(i));
  return out;
}

double forest_fit_predict(const FlatSamples& train, const ForestConfig& config, std::span<const double> query) {
  require_query(train, query.size());
  return RandomForest::fit(train, config).predict(query);
}

}  // namespace gridcast
