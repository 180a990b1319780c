// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gridcast/data.hpp"

namespace gridcast {

/// Row-major design matrix of flattened windows plus targets.
struct FlatSamples {
  std::size_t dim = 0;
  std::vector<double> x;  // size() * dim values
  std::vector<double> y;

  std::size_t size() const { return y.size(); }
  std::span<const double> row(std::size_t i) const { return {x.data() + i * dim, dim}; }
  void push_back(std::span<const double> features, double target);

  // Windows flattened time-major, feature-minor.
  static FlatSamples from(const SupervisedSet& set);
};

// ---------------------------------------------------------------- knn

enum class KnnMode { regression, classification };

// Euclidean k nearest neighbours. Equal distances go to the lower training
// index; a tied vote goes to label 0.
double knn_predict(const FlatSamples& train, std::span<const double> query, std::size_t k, KnnMode mode);
std::vector<double> knn_predict_all(const FlatSamples& train, const FlatSamples& queries, std::size_t k,
                                    KnnMode mode);

inline constexpr std::size_t kDefaultKnnK = 5;

// ---------------------------------------------------------------- bayesian ridge

struct BayesRidgeModel {
  std::vector<double> weights;
  double intercept = 0.0;

  double predict(std::span<const double> features) const;
  std::vector<double> predict_all(const FlatSamples& samples) const;
};

inline constexpr double kDefaultRidgeAlpha = 1e-6;
inline constexpr double kDefaultRidgeLambda = 1.0;

// Posterior mean (lambda X'X + alpha I)^-1 lambda X'y on centred data.
BayesRidgeModel bayes_ridge_fit(const FlatSamples& train, double alpha = kDefaultRidgeAlpha,
                                double lambda = kDefaultRidgeLambda);

// In-place Cholesky solve of the symmetric positive definite system a x = b
// (a is n x n row-major and is overwritten). Throws NumericError when a is
// not numerically positive definite.
std::vector<double> cholesky_solve(std::vector<double> a, std::vector<double> b, std::size_t n);

// ---------------------------------------------------------------- random forest

struct ForestConfig {
  std::size_t n_trees = 100;
  std::size_t max_depth = 12;
  std::size_t min_leaf = 2;
  std::size_t feature_subsample = 0;  // 0 -> floor(sqrt(dim)), at least 1
  bool bootstrap = true;
  std::uint64_t seed = 0;

  void validate() const;
};

class RegressionTree {
 public:
  struct Node {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;     // x[feature] < threshold goes left
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;
  };

  // Fits on train rows listed in `rows` (repeats allowed).
  static RegressionTree fit(const FlatSamples& train, std::vector<std::size_t> rows, std::size_t max_depth,
                            std::size_t min_leaf, std::size_t features_per_split, std::uint64_t seed);

  double predict(std::span<const double> features) const;
  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t depth() const;
  std::size_t dim() const { return dim_; }

 private:
  std::vector<Node> nodes_;
  std::size_t dim_ = 0;
};

class RandomForest {
 public:
  // Trees are fitted in parallel; tree t uses seed derive_seed(cfg.seed, t).
  static RandomForest fit(const FlatSamples& train, const ForestConfig& config);

  double predict(std::span<const double> features) const;
  std::vector<double> predict_all(const FlatSamples& samples) const;
  const std::vector<RegressionTree>& trees() const { return trees_; }

 private:
  std::vector<RegressionTree> trees_;
  std::size_t dim_ = 0;
};

double forest_fit_predict(const FlatSamples& train, const ForestConfig& config, std::span<const double> query);

}  // namespace gridcast
