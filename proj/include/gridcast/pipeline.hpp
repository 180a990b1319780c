// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gridcast/baselines.hpp"
#include "gridcast/data.hpp"
#include "gridcast/explain.hpp"
#include "gridcast/metrics.hpp"
#include "gridcast/network.hpp"
#include "gridcast/train.hpp"

namespace gridcast {

enum class Task { regression, classification };

std::string to_string(Task task);
Task task_from_string(const std::string& name);

/// Everything a run needs. Set from a flat `key = value` file, then from
/// command-line overrides, using the same keys (see keys()).
struct RunConfig {
  // data
  std::string csv;
  std::size_t synth_rows = 0;
  Regime regime = Regime::standard;
  MissingPolicy missing = MissingPolicy::reject;
  std::size_t window = 8;
  double train_frac = 0.8;
  double val_frac = 0.1;
  bool shuffle_split = false;
  // Use the test part for early stopping and fold validation rows back into
  // training (no separate validation split).
  bool validate_on_test = false;

  Task task = Task::regression;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::string model;  // existing model file for compare/explain

  NetworkConfig network;  // window, features and head are derived
  TrainConfig train;

  std::size_t knn_k = kDefaultKnnK;
  double ridge_alpha = kDefaultRidgeAlpha;
  double ridge_lambda = kDefaultRidgeLambda;
  ForestConfig forest;

  std::size_t explain_samples = 100;
  std::size_t shapley_perms = 200;
  bool shapley_exact = false;

  static const std::vector<std::string>& keys();
  // Throws ParameterError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  // key = value lines in keys() order.
  std::string dump() const;

  NetworkConfig network_config() const;
  TrainConfig train_config() const;

  std::vector<std::string> violations() const;
  void validate() const;
};

// Reads `key = value` lines; '#' starts a comment.
void apply_config_file(RunConfig& config, const std::string& path);

// ---------------------------------------------------------------- data

struct PreparedData {
  std::vector<Record> records;
  SplitSets split;  // targets are kW (regression, scaled) or 0/1 labels
};

PreparedData prepare_data(const RunConfig& config, std::ostream& log);

// Model outputs in reporting units: kW for regression, probability for
// classification.
std::vector<double> network_outputs(const Network& net, const SupervisedSet& set, const Scaler& scaler, Task task);
// Unscaled targets read back from the records (kW or 0/1 labels).
std::vector<double> reporting_targets(const SupervisedSet& set, const PreparedData& data, std::size_t window,
                                      Task task);

// MAE/RMSE always; R^2 left empty when the targets are constant.
TableRow regression_row(const std::string& name, std::span<const double> pred, std::span<const double> real);

// ---------------------------------------------------------------- commands

struct SynthOptions {
  std::size_t rows = 0;
  std::uint64_t seed = 0;
  Regime regime = Regime::standard;
  std::string out;  // CSV path; metadata goes to out + ".meta.json"
};

void cmd_synth(const SynthOptions& options, std::ostream& log);

struct TrainOutcome {
  ModelFile model;
  TrainLog log;
  nlohmann::ordered_json metrics;
};

// Writes model.gcm, trainlog.csv, metrics.json and config.effective.txt.
TrainOutcome cmd_train(const RunConfig& config, std::ostream& log);

struct CompareOutcome {
  std::vector<TableRow> rows;
  std::vector<std::size_t> test_positions;
};

// Writes compare.csv, compare.json and config.effective.txt.
CompareOutcome cmd_compare(const RunConfig& config, std::ostream& log);

struct PredictOptions {
  std::string model;
  std::string csv;
  std::string out;  // predictions CSV
  MissingPolicy missing = MissingPolicy::reject;
};

struct PredictOutcome {
  std::vector<std::size_t> index;
  std::vector<double> predicted;
  std::vector<double> real;  // empty when the input holds a single window
  std::optional<double> r2;
  std::optional<double> accuracy;
};

PredictOutcome cmd_predict(const PredictOptions& options, std::ostream& log);

// Writes shapley.csv, shapley.json and config.effective.txt.
AttributionReport cmd_explain(const RunConfig& config, std::ostream& log);

// Model file helpers: the scaler and task travel with the network.
ModelFile make_model_file(const Network& net, const Scaler& scaler, Task task);
Scaler model_scaler(const ModelFile& model);
Task model_task(const ModelFile& model);

// Process exit status for an exception escaping a command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;
inline constexpr int kExitIo = 5;

int exit_code_for(const std::exception& error);

}  // namespace gridcast
