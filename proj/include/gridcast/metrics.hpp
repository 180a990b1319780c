// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace gridcast {

struct RegressionReport {
  double mae = 0.0;
  double rmse = 0.0;
  double r2 = 0.0;
};

// MAE, RMSE and R^2 = 1 - SS_res / SS_tot (SS_tot about the mean of `real`).
RegressionReport regression_metrics(std::span<const double> pred, std::span<const double> real);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct ClassificationReport {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  double threshold = 0.5;
  double accuracy = 0.0;
  std::optional<double> precision;  // undefined when nothing is predicted positive
  std::vector<RocPoint> roc;
  std::optional<double> auc;  // undefined when only one class is present
};

// A score at or above `threshold` predicts label 1. The ROC sweep uses
// every distinct score as a threshold plus +inf and -inf sentinels; AUC is
// the trapezoid area under it.
ClassificationReport classification_metrics(std::span<const double> scores, std::span<const double> labels,
                                            double threshold = 0.5);

// One row of a model comparison table.
struct TableRow {
  std::string model;
  std::optional<double> mae, rmse, r2;
  std::string status = "ok";
};

// The published comparison table, kept as reference data.
std::vector<TableRow> published_reference_rows();

// Names of rows whose RMSE is smaller than their MAE, which no set of
// residuals can produce.
std::vector<std::string> inconsistent_rows(const std::vector<TableRow>& rows);

nlohmann::ordered_json to_json(const RegressionReport& r);
nlohmann::ordered_json to_json(const ClassificationReport& r);

}  // namespace gridcast
