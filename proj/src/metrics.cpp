// SPDX-License-Identifier: Apache-2.0
#include "gridcast/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gridcast/error.hpp"

namespace gridcast {

RegressionReport regression_metrics(std::span<const double> pred, std::span<const double> real) {
  if (pred.size() != real.size())
    throw DimensionError("regression_metrics: " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(real.size()) + " targets");
  if (pred.empty()) throw DimensionError("regression_metrics: empty input");
  const double n = static_cast<double>(pred.size());
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - real[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  const double mean = std::accumulate(real.begin(), real.end(), 0.0) / n;
  double total = 0.0;
  for (double y : real) total += (y - mean) * (y - mean);
  if (!(total > 0.0)) throw NumericError("regression_metrics: R^2 is undefined for constant targets");
  return {abs_sum / n, std::sqrt(sq_sum / n), 1.0 - sq_sum / total};
}

ClassificationReport classification_metrics(std::span<const double> scores, std::span<const double> labels,
                                            double threshold) {
  if (scores.size() != labels.size())
    throw DimensionError("classification_metrics: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
  if (scores.empty()) throw DataError("classification_metrics: empty input");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!(scores[i] >= 0.0 && scores[i] <= 1.0))
      throw ParameterError("classification_metrics: score " + std::to_string(scores[i]) + " outside [0, 1]");
    if (labels[i] != 0.0 && labels[i] != 1.0)
      throw ParameterError("classification_metrics: labels must be 0 or 1");
  }

  ClassificationReport r;
  r.threshold = threshold;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    const bool actual = labels[i] == 1.0;
    if (predicted && actual) ++r.tp;
    else if (predicted) ++r.fp;
    else if (actual) ++r.fn;
    else ++r.tn;
  }
  r.accuracy = static_cast<double>(r.tp + r.tn) / static_cast<double>(r.tp + r.tn + r.fp + r.fn);
  if (r.tp + r.fp > 0) r.precision = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);

  const double positives = static_cast<double>(r.tp + r.fn);
  const double negatives = static_cast<double>(r.tn + r.fp);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const double inf = std::numeric_limits<double>::infinity();
  auto rate = [](double count, double total) { return total > 0.0 ? count / total : 0.0; };
  r.roc.push_back({0.0, 0.0, inf});
  double tp = 0.0, fp = 0.0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    while (k < order.size() && scores[order[k]] == s) {
      (labels[order[k]] == 1.0 ? tp : fp) += 1.0;
      ++k;
    }
    r.roc.push_back({rate(fp, negatives), rate(tp, positives), s});
  }
  r.roc.push_back({1.0, 1.0, -inf});
  if (positives > 0.0 && negatives > 0.0) {
    double area = 0.0;
    for (std::size_t k = 1; k < r.roc.size(); ++k)
      area += (r.roc[k].fpr - r.roc[k - 1].fpr) * 0.5 * (r.roc[k].tpr + r.roc[k - 1].tpr);
    r.auc = area;
  }
  return r;
}

std::vector<TableRow> published_reference_rows() {
  auto row = [](const char* name, double mae, double rmse, double r2) {
    return TableRow{name, mae, rmse, r2, "reference"};
  };
  return {row("CNN-GRU-Attention", 0.39, 0.28, 98.89),        row("SVR", 1.18, 3.81, 80.54),
          row("KNN", 0.41, 0.82, 95.70),                      row("XGB", 0.59, 1.03, 94.74),
          row("Bayesian Ridge", 0.49, 0.44, 97.74),           row("RF", 0.25, 0.48, 97.53),
          row("CNN-GRU-Attention (Kenya)", 0.38, 0.27, 98.88), row("SVR (Kenya)", 1.31, 4.63, 76.42),
          row("KNN (Kenya)", 0.61, 0.39, 96.84),              row("XGB (Kenya)", 0.64, 1.03, 94.57),
          row("Bayesian Ridge (Kenya)", 0.45, 0.51, 97.66),   row("RF (Kenya)", 0.45, 0.51, 97.66)};
}

std::vector<std::string> inconsistent_rows(const std::vector<TableRow>& rows) {
  std::vector<std::string> out;
  for (const auto& r : rows)
    if (r.mae && r.rmse && *r.rmse < *r.mae) out.push_back(r.model);
  return out;
}

nlohmann::ordered_json to_json(const RegressionReport& r) {
  return {{"mae", r.mae}, {"rmse", r.rmse}, {"r2", r.r2}};
}

nlohmann::ordered_json to_json(const ClassificationReport& r) {
  nlohmann::ordered_json j;
  j["threshold"] = r.threshold;
  j["accuracy"] = r.accuracy;
  j["precision"] = r.precision ? nlohmann::ordered_json(*r.precision) : nlohmann::ordered_json(nullptr);
  j["auc"] = r.auc ? nlohmann::ordered_json(*r.auc) : nlohmann::ordered_json(nullptr);
  j["confusion"] = {{"tp", r.tp}, {"tn", r.tn}, {"fp", r.fp}, {"fn", r.fn}};
  auto roc = nlohmann::ordered_json::array();
  for (const auto& p : r.roc) {
    // JSON has no infinities; the sentinels are written as strings.
    nlohmann::ordered_json t = std::isfinite(p.threshold) ? nlohmann::ordered_json(p.threshold)
                                                          : nlohmann::ordered_json(p.threshold > 0 ? "+inf" : "-inf");
    roc.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}, {"threshold", t}});
  }
  j["roc"] = std::move(roc);
  return j;
}

}  // namespace gridcast
