// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gridcast/tensor.hpp"

namespace gridcast {

inline constexpr std::size_t kFeatureCount = 13;

// Column names of the microgrid dataset, in model input order.
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "pv_kw",          "battery_kw",      "battery_kwh", "generator_kw",  "pv_capital",
    "pv_om",          "battery_capital", "battery_om",  "diesel_capital", "diesel_om_kw",
    "diesel_om_kwh",  "fuel_cost",       "reopt_llc"};

// Generator output (kW); the forecasting target.
inline constexpr std::size_t kTargetColumn = 3;

// Generator output at or below this many kW counts as a zero state.
inline constexpr double kZeroStateThreshold = 1e-6;

struct Record {
  std::array<double, kFeatureCount> values{};
  std::string timestamp;  // empty when the source had no timestamp column

  double generator_kw() const { return values[kTargetColumn]; }
  bool operator==(const Record&) const = default;
};

enum class MissingPolicy { reject, forward_fill };

struct CsvTable {
  std::vector<Record> records;
  bool has_timestamp = false;
  std::vector<std::string> warnings;
};

// Reads a comma-separated file whose header names the 13 feature columns
// (matched case- and whitespace-insensitively, any order) plus an optional
// `timestamp` column. Rows with empty cells are dropped (reject) or filled
// from the previous row (forward_fill).
CsvTable load_csv(const std::string& path, MissingPolicy missing = MissingPolicy::reject);

// Writes records with shortest round-trip formatting; load_csv reads the
// values back bit-exactly.
void write_csv(const std::string& path, const std::vector<Record>& records, bool with_timestamp = false);

// ---------------------------------------------------------------- windows

/// Per-feature z-score scaler fitted on training rows, plus the target's.
struct Scaler {
  std::vector<double> feature_mean;
  std::vector<double> feature_std;
  double target_mean = 0.0;
  double target_std = 1.0;

  Tensor transform(const Tensor& window) const;
  double transform_target(double y) const { return (y - target_mean) / target_std; }
  double inverse_target(double z) const { return z * target_std + target_mean; }
};

struct SupervisedSet {
  std::vector<Tensor> inputs;         // [W x 13] each
  std::vector<double> targets;        // generator_kw of the following row, or a 0/1 label
  std::vector<std::size_t> positions; // first record index of each window

  std::size_t size() const { return inputs.size(); }
};

// Sample i covers records [i, i + window) and targets record i + window.
SupervisedSet make_windows(const std::vector<Record>& records, std::size_t window);

// 1 where generator output is at or below kZeroStateThreshold.
std::vector<double> label_zero_state(const std::vector<double>& targets_kw);

struct SplitOptions {
  double train_frac = 0.8;
  double val_frac_of_train = 0.1;
  bool scale_target = true;
  // Shuffle samples before splitting instead of splitting chronologically.
  bool shuffle = false;
  std::uint64_t seed = 0;
};

struct SplitSets {
  SupervisedSet train;
  SupervisedSet val;
  SupervisedSet test;
  Scaler scaler;
  std::vector<std::string> warnings;
};

// First train_frac of the samples form the training part, whose last
// val_frac_of_train becomes validation; the rest is test. Sizes use floor().
// The scaler is fitted on training inputs (and targets when scale_target)
// and applied to all three parts.
SplitSets split_and_scale(const SupervisedSet& set, const SplitOptions& options = {});

// Window flattened time-major, feature-minor.
std::vector<double> flatten(const Tensor& window);

// ---------------------------------------------------------------- synthetic

enum class Regime { standard, kenya };

std::string to_string(Regime regime);
Regime regime_from_string(const std::string& name);

struct FeatureMoments {
  std::string_view name;
  double mean;
  double variance;
};

// Target mean and variance of every column for a regime.
std::array<FeatureMoments, kFeatureCount> reference_moments(Regime regime);

// Fraction of rows the generator produces zero output.
inline constexpr double kSynthZeroFraction = 0.4;

/// Statistics-matched synthetic microgrid series.
///
/// A deterministic demand cycle c_t (24-row and 168-row harmonics, unit
/// variance over a full week) drives every column: each feature is its
/// reference mean plus its reference standard deviation times a mix of c_t
/// and independent Gaussian noise, so means and variances match the
/// reference table. Generator output is max(0, mu + sigma * (c_t + e_t))
/// with small Gaussian e_t; mu and sigma are solved so that 40% of rows are
/// zero and the mean matches the reference. Its variance does not match the
/// table (a zero-inflated column with that mean cannot).
std::vector<Record> synth_generate(std::size_t rows, std::uint64_t seed, Regime regime = Regime::standard);

}  // namespace gridcast
