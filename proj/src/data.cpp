// SPDX-License-Identifier: Apache-2.0
#include "gridcast/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <optional>

#include "gridcast/error.hpp"
#include "gridcast/rng.hpp"

namespace gridcast {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string normalize_name(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\r' || c == '"') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    std::string_view cell = trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
    if (cell.size() >= 2 && cell.front() == '"' && cell.back() == '"') cell = cell.substr(1, cell.size() - 2);
    cells.push_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

CsvTable load_csv(const std::string& path, MissingPolicy missing) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + " is empty (no header row)");
  if (line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);

  const auto header = split_commas(line);
  std::array<std::optional<std::size_t>, kFeatureCount> column_of;
  std::optional<std::size_t> timestamp_col;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name = normalize_name(header[c]);
    if (name == "timestamp") {
      timestamp_col = c;
      continue;
    }
    const auto it = std::find(kFeatureNames.begin(), kFeatureNames.end(), name);
    if (it == kFeatureNames.end()) {
      table.warnings.push_back("ignoring unknown column '" + std::string(header[c]) + "'");
      continue;
    }
    const auto f = static_cast<std::size_t>(it - kFeatureNames.begin());
    if (column_of[f]) throw SchemaError(path + ": duplicate column '" + std::string(kFeatureNames[f]) + "'");
    column_of[f] = c;
  }
  std::string absent;
  for (std::size_t f = 0; f < kFeatureCount; ++f)
    if (!column_of[f]) absent += (absent.empty() ? "'" : ", '") + std::string(kFeatureNames[f]) + "'";
  if (!absent.empty()) throw SchemaError(path + ": missing column(s) " + absent);
  table.has_timestamp = timestamp_col.has_value();

  std::size_t line_no = 1;
  std::size_t dropped = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size())
      throw DataError(path + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                      " cells, header has " + std::to_string(header.size()));
    Record rec;
    bool has_gap = false;
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      const std::string_view cell = cells[*column_of[f]];
      if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan") {
        has_gap = true;
        if (missing == MissingPolicy::forward_fill && !table.records.empty())
          rec.values[f] = table.records.back().values[f];
        else
          rec.values[f] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      const auto v = parse_double(cell);
      if (!v)
        throw DataError(path + ": line " + std::to_string(line_no) + ": cannot parse '" + std::string(cell) +
                        "' in column " + std::string(kFeatureNames[f]));
      rec.values[f] = *v;
    }
    if (has_gap && std::any_of(rec.values.begin(), rec.values.end(), [](double v) { return std::isnan(v); })) {
      ++dropped;
      continue;
    }
    if (rec.generator_kw() < 0.0)
      throw DataError(path + ": line " + std::to_string(line_no) + ": negative generator_kw");
    if (timestamp_col) rec.timestamp = std::string(cells[*timestamp_col]);
    table.records.push_back(std::move(rec));
  }
  if (dropped) table.warnings.push_back("dropped " + std::to_string(dropped) + " rows with missing values");
  if (table.records.empty()) table.warnings.push_back(path + " has a header but no data rows");
  return table;
}

void write_csv(const std::string& path, const std::vector<Record>& records, bool with_timestamp) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  if (with_timestamp) out << "timestamp,";
  for (std::size_t f = 0; f < kFeatureCount; ++f) out << (f ? "," : "") << kFeatureNames[f];
  out << '\n';
  for (const auto& r : records) {
    if (with_timestamp) out << r.timestamp << ',';
    for (std::size_t f = 0; f < kFeatureCount; ++f) out << (f ? "," : "") << format_double(r.values[f]);
    out << '\n';
  }
  if (!out) throw IoError("failed while writing " + path);
}

// ---------------------------------------------------------------- windows

Tensor Scaler::transform(const Tensor& window) const {
  if (window.cols() != feature_mean.size())
    throw DimensionError("scaler: window " + shape_string(window.shape()) + " vs " +
                         std::to_string(feature_mean.size()) + " fitted features");
  Tensor out = window;
  for (std::size_t t = 0; t < out.rows(); ++t) {
    auto row = out.row(t);
    for (std::size_t f = 0; f < row.size(); ++f) row[f] = (row[f] - feature_mean[f]) / feature_std[f];
  }
  return out;
}

SupervisedSet make_windows(const std::vector<Record>& records, std::size_t window) {
  if (window == 0) throw ParameterError("window must be >= 1");
  if (records.size() <= window)
    throw DataError("need more than " + std::to_string(window) + " rows to build windows, got " +
                    std::to_string(records.size()));
  SupervisedSet set;
  const std::size_t count = records.size() - window;
  set.inputs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Tensor x({window, kFeatureCount});
    for (std::size_t t = 0; t < window; ++t)
      std::copy(records[i + t].values.begin(), records[i + t].values.end(), x.row(t).begin());
    set.inputs.push_back(std::move(x));
    set.targets.push_back(records[i + window].generator_kw());
    set.positions.push_back(i);
  }
  return set;
}

std::vector<double> label_zero_state(const std::vector<double>& targets_kw) {
  std::vector<double> labels(targets_kw.size());
  std::transform(targets_kw.begin(), targets_kw.end(), labels.begin(),
                 [](double y) { return y <= kZeroStateThreshold ? 1.0 : 0.0; });
  return labels;
}

namespace {

// Two-pass mean: the correction term recovers most of the rounding error of
// the first pass, which matters for columns with means near 1e9.
double stable_mean(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double correction = 0.0;
  for (double x : v) correction += x - m;
  return m + correction / n;
}

double population_std(const std::vector<double>& v, double mean) {
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size()));
}

SupervisedSet take(const SupervisedSet& set, const std::vector<std::size_t>& order, std::size_t begin,
                   std::size_t end) {
  SupervisedSet out;
  for (std::size_t i = begin; i < end; ++i) {
    out.inputs.push_back(set.inputs[order[i]]);
    out.targets.push_back(set.targets[order[i]]);
    out.positions.push_back(set.positions[order[i]]);
  }
  return out;
}

}  // namespace

SplitSets split_and_scale(const SupervisedSet& set, const SplitOptions& options) {
  auto in_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!in_unit(options.train_frac) || !in_unit(options.val_frac_of_train))
    throw ParameterError("split fractions must lie in (0, 1)");
  const std::size_t n = set.size();
  const auto n_fit = static_cast<std::size_t>(std::floor(options.train_frac * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::floor(options.val_frac_of_train * static_cast<double>(n_fit)));
  const std::size_t n_train = n_fit - n_val;
  if (n_train == 0 || n_val == 0 || n_fit == n)
    throw DataError("split of " + std::to_string(n) + " samples leaves an empty part (train " +
                    std::to_string(n_train) + ", val " + std::to_string(n_val) + ", test " +
                    std::to_string(n - n_fit) + ")");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (options.shuffle) {
    Rng rng(options.seed);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  }

  SplitSets out;
  out.train = take(set, order, 0, n_train);
  out.val = take(set, order, n_train, n_fit);
  out.test = take(set, order, n_fit, n);

  const std::size_t width = set.inputs.front().cols();
  Scaler& sc = out.scaler;
  sc.feature_mean.resize(width);
  sc.feature_std.resize(width);
  std::vector<double> column;
  for (std::size_t f = 0; f < width; ++f) {
    column.clear();
    for (const auto& x : out.train.inputs)
      for (std::size_t t = 0; t < x.rows(); ++t) column.push_back(x(t, f));
    sc.feature_mean[f] = stable_mean(column);
    sc.feature_std[f] = population_std(column, sc.feature_mean[f]);
    if (!(sc.feature_std[f] > 0.0)) {
      const std::string name = width == kFeatureCount ? std::string(kFeatureNames[f]) : std::to_string(f);
      out.warnings.push_back("column " + name + " is constant on the training split; using std 1");
      sc.feature_std[f] = 1.0;
    }
  }
  if (options.scale_target) {
    sc.target_mean = stable_mean(out.train.targets);
    sc.target_std = population_std(out.train.targets, sc.target_mean);
    if (!(sc.target_std > 0.0)) {
      out.warnings.push_back("target is constant on the training split; using std 1");
      sc.target_std = 1.0;
    }
  }
  for (SupervisedSet* part : {&out.train, &out.val, &out.test}) {
    for (auto& x : part->inputs) x = sc.transform(x);
    if (options.scale_target)
      for (auto& y : part->targets) y = sc.transform_target(y);
  }
  return out;
}

std::vector<double> flatten(const Tensor& window) { return window.storage(); }

// ---------------------------------------------------------------- synthetic

std::string to_string(Regime regime) { return regime == Regime::standard ? "default" : "kenya"; }

Regime regime_from_string(const std::string& name) {
  if (name == "default" || name == "standard") return Regime::standard;
  if (name == "kenya") return Regime::kenya;
  throw ParameterError("unknown regime '" + name + "' (expected default or kenya)");
}

std::array<FeatureMoments, kFeatureCount> reference_moments(Regime regime) {
  std::array<FeatureMoments, kFeatureCount> m = {{
      {kFeatureNames[0], 70.84, 8.45},
      {kFeatureNames[1], 7.55, 1.99},
      {kFeatureNames[2], 382.21, 14.92},
      {kFeatureNames[3], 18.55, 5.46},
      {kFeatureNames[4], 237795130.20, 15034.17},
      {kFeatureNames[5], 6894229.04, 2559.88},
      {kFeatureNames[6], 284208250.30, 12202.27},
      {kFeatureNames[7], 17504910.43, 3115.69},
      {kFeatureNames[8], 6325958.59, 3040.68},
      {kFeatureNames[9], 853071.00, 1173.45},
      {kFeatureNames[10], 11055836.65, 1930.88},
      {kFeatureNames[11], 1038589968.04, 35854.60},
      {kFeatureNames[12], 442926489.30, 74736.26},
  }};
  if (regime == Regime::kenya) {
    // Stronger solar resource and pricier fuel: more PV, less diesel.
    m[0].mean *= 1.15;
    m[3].mean *= 0.85;
    m[11].mean *= 1.25;
  }
  return m;
}

namespace {

constexpr double kDailyPeriod = 24.0;
constexpr double kWeeklyPeriod = 168.0;
constexpr double kWeeklyAmplitude = 0.4;
constexpr double kGeneratorNoise = 0.06;

// How strongly each column follows the demand cycle; the rest of its
// variance is independent noise. The generator column is handled apart.
constexpr std::array<double, kFeatureCount> kCycleLoading = {
    -0.97, 0.6, -1.0, 0.0, 0.3, 0.0, -0.2, 0.5, 0.1, 0.4, -0.3, 0.2, 0.6};

double daily_amplitude() { return std::sqrt(2.0 * (1.0 - 0.5 * kWeeklyAmplitude * kWeeklyAmplitude)); }

// Unit-variance (over a full week) demand cycle.
double demand_cycle(std::size_t t) {
  const double tt = static_cast<double>(t);
  return daily_amplitude() * std::cos(2.0 * std::numbers::pi * tt / kDailyPeriod) +
         kWeeklyAmplitude * std::sin(2.0 * std::numbers::pi * tt / kWeeklyPeriod);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

// Offset mu/sigma and scale sigma of the latent generator drive such that a
// week of rows has the requested zero fraction and mean output.
std::pair<double, double> solve_generator_drive(double mean_kw) {
  const auto week = static_cast<std::size_t>(kWeeklyPeriod);
  auto zero_fraction = [&](double offset) {
    double p = 0.0;
    for (std::size_t t = 0; t < week; ++t) p += normal_cdf(-(offset + demand_cycle(t)) / kGeneratorNoise);
    return p / kWeeklyPeriod;
  };
  double lo = -10.0, hi = 10.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (zero_fraction(mid) > kSynthZeroFraction ? lo : hi) = mid;
  }
  const double offset = 0.5 * (lo + hi);
  double unit_mean = 0.0;
  for (std::size_t t = 0; t < week; ++t) {
    const double m = offset + demand_cycle(t);
    unit_mean += m * normal_cdf(m / kGeneratorNoise) + kGeneratorNoise * normal_pdf(m / kGeneratorNoise);
  }
  unit_mean /= kWeeklyPeriod;
  const double sigma = mean_kw / unit_mean;
  return {offset * sigma, sigma};
}

}  // namespace

std::vector<Record> synth_generate(std::size_t rows, std::uint64_t seed, Regime regime) {
  if (rows == 0) throw ParameterError("synth_generate: rows must be >= 1");
  const auto moments = reference_moments(regime);
  const auto [mu, sigma] = solve_generator_drive(moments[kTargetColumn].mean);
  Rng rng(seed);
  const std::size_t phase = rng.below(static_cast<std::size_t>(kWeeklyPeriod));

  std::vector<Record> out(rows);
  for (std::size_t t = 0; t < rows; ++t) {
    const double cycle = demand_cycle(t + phase);
    Record& r = out[t];
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      if (f == kTargetColumn) continue;
      const double load = kCycleLoading[f];
      const double noise = load * load < 1.0 ? std::sqrt(1.0 - load * load) * rng.normal() : 0.0;
      r.values[f] = moments[f].mean + std::sqrt(moments[f].variance) * (load * cycle + noise);
    }
    const double drive = mu + sigma * (cycle + kGeneratorNoise * rng.normal());
    r.values[kTargetColumn] = std::max(0.0, drive);
  }
  return out;
}

}  // namespace gridcast
