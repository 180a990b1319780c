// SPDX-License-Identifier: Apache-2.0
#include "gridcast/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include "gridcast/error.hpp"
#include "gridcast/rng.hpp"

namespace gridcast {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ParameterError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ParameterError("config key '" + key + "' expects an unsigned integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out))
    throw ParameterError("config key '" + key + "' expects a finite number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ParameterError("config key '" + key + "' expects true or false, got '" + v + "'");
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

MissingPolicy missing_from_string(const std::string& v) {
  if (v == "reject") return MissingPolicy::reject;
  if (v == "forward_fill") return MissingPolicy::forward_fill;
  throw ParameterError("missing policy must be reject or forward_fill, got '" + v + "'");
}

std::string to_string(MissingPolicy p) { return p == MissingPolicy::reject ? "reject" : "forward_fill"; }

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define GC_SIZE(member)                                                                              \
  Field {                                                                                            \
    [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_size(k, v); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }                                  \
  }
#define GC_DOUBLE(member)                                                                              \
  Field {                                                                                              \
    [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_double(k, v); }, \
        [](const RunConfig& c) { return fmt(c.member); }                                               \
  }
#define GC_BOOL(member)                                                                              \
  Field {                                                                                            \
    [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_bool(k, v); }, \
        [](const RunConfig& c) { return bool_str(c.member); }                                        \
  }

const std::vector<std::pair<std::string, Field>>& field_table() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"csv", {[](RunConfig& c, const std::string&, const std::string& v) { c.csv = v; },
               [](const RunConfig& c) { return c.csv; }}},
      {"synth_rows", GC_SIZE(synth_rows)},
      {"regime", {[](RunConfig& c, const std::string&, const std::string& v) { c.regime = regime_from_string(v); },
                  [](const RunConfig& c) { return to_string(c.regime); }}},
      {"missing", {[](RunConfig& c, const std::string&, const std::string& v) { c.missing = missing_from_string(v); },
                   [](const RunConfig& c) { return to_string(c.missing); }}},
      {"window", GC_SIZE(window)},
      {"train_frac", GC_DOUBLE(train_frac)},
      {"val_frac", GC_DOUBLE(val_frac)},
      {"shuffle_split", GC_BOOL(shuffle_split)},
      {"validate_on_test", GC_BOOL(validate_on_test)},
      {"task", {[](RunConfig& c, const std::string&, const std::string& v) { c.task = task_from_string(v); },
                [](const RunConfig& c) { return to_string(c.task); }}},
      {"seed", {[](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_u64(k, v); },
                [](const RunConfig& c) { return std::to_string(c.seed); }}},
      {"out_dir", {[](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; },
                   [](const RunConfig& c) { return c.out_dir; }}},
      {"model", {[](RunConfig& c, const std::string&, const std::string& v) { c.model = v; },
                 [](const RunConfig& c) { return c.model; }}},
      {"blocks", GC_SIZE(network.blocks)},
      {"conv_filters", GC_SIZE(network.conv_filters)},
      {"kernel", GC_SIZE(network.kernel)},
      {"gru_units", GC_SIZE(network.gru_units)},
      {"attn_dim", GC_SIZE(network.attn_dim)},
      {"mlp_hidden", GC_SIZE(network.mlp_hidden)},
      {"dropout", GC_DOUBLE(network.dropout_rate)},
      {"conv_activation",
       {[](RunConfig& c, const std::string&, const std::string& v) {
          c.network.conv_activation = activation_from_string(v);
        },
        [](const RunConfig& c) { return to_string(c.network.conv_activation); }}},
      {"max_epochs", GC_SIZE(train.max_epochs)},
      {"early_stop_patience", GC_SIZE(train.early_stop_patience)},
      {"lr", GC_DOUBLE(train.initial_lr)},
      {"lr_patience", GC_SIZE(train.lr_patience)},
      {"batch_size", GC_SIZE(train.batch_size)},
      {"knn_k", GC_SIZE(knn_k)},
      {"ridge_alpha", GC_DOUBLE(ridge_alpha)},
      {"ridge_lambda", GC_DOUBLE(ridge_lambda)},
      {"rf_trees", GC_SIZE(forest.n_trees)},
      {"rf_depth", GC_SIZE(forest.max_depth)},
      {"rf_min_leaf", GC_SIZE(forest.min_leaf)},
      {"rf_features", GC_SIZE(forest.feature_subsample)},
      {"rf_bootstrap", GC_BOOL(forest.bootstrap)},
      {"explain_samples", GC_SIZE(explain_samples)},
      {"shapley_perms", GC_SIZE(shapley_perms)},
      {"shapley_exact", GC_BOOL(shapley_exact)},
  };
  return table;
}

#undef GC_SIZE
#undef GC_DOUBLE
#undef GC_BOOL

const Field& field(const std::string& key) {
  for (const auto& [name, f] : field_table())
    if (name == key) return f;
  throw ParameterError("unknown config key '" + key + "'");
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
}

std::string out_path(const RunConfig& c, const std::string& name) {
  return (std::filesystem::path(c.out_dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json row_json(const TableRow& r) {
  return {{"model", r.model}, {"mae", opt_json(r.mae)}, {"rmse", opt_json(r.rmse)}, {"r2", opt_json(r.r2)},
          {"status", r.status}};
}

nlohmann::ordered_json score_json(std::span<const double> pred, std::span<const double> real, Task task) {
  if (task == Task::regression) {
    auto row = regression_row("", pred, real);
    return {{"n", pred.size()}, {"mae", opt_json(row.mae)}, {"rmse", opt_json(row.rmse)}, {"r2", opt_json(row.r2)}};
  }
  nlohmann::ordered_json j{{"n", pred.size()}};
  j.update(to_json(classification_metrics(pred, real)));
  return j;
}


Network train_network(const RunConfig& config, const PreparedData& data, TrainLog& log_out, std::ostream& log) {
  Rng init(derive_seed(config.seed, 1));
  Network net = Network::build(config.network_config(), init);
  TrainConfig tc = config.train_config();
  log << "training " << net.parameter_count() << " parameters on " << data.split.train.size() << " windows (val "
      << data.split.val.size() << ", test " << data.split.test.size() << ")\n";
  FitResult fitted = fit(std::move(net), data.split.train, data.split.val, tc);
  log << "stopped after " << fitted.log.epochs.size() << " epochs (" << to_string(fitted.log.stop)
      << "), best epoch " << fitted.log.best_epoch << ", val loss " << fmt(fitted.log.best_val_loss) << "\n";
  log_out = std::move(fitted.log);
  return std::move(fitted.network);
}

bool same_scaler(const Scaler& a, const Scaler& b) {
  return a.feature_mean == b.feature_mean && a.feature_std == b.feature_std && a.target_mean == b.target_mean &&
         a.target_std == b.target_std;
}

// Loads config.model or trains a fresh network (writing model.gcm and
// trainlog.csv next to the other outputs).
Network obtain_network(const RunConfig& config, const PreparedData& data, std::ostream& log) {
  if (!config.model.empty()) {
    ModelFile mf = load_model(config.model);
    if (model_task(mf) != config.task)
      throw ParameterError("model " + config.model + " was trained for task " + to_string(model_task(mf)) +
                           ", run requests " + to_string(config.task));
    const NetworkConfig& nc = mf.network.config();
    if (nc.window != config.window || nc.features != kFeatureCount)
      throw SchemaError("model expects windows of " + std::to_string(nc.window) + " x " + std::to_string(nc.features) +
                        ", data provides " + std::to_string(config.window) + " x " + std::to_string(kFeatureCount));
    if (!same_scaler(model_scaler(mf), data.split.scaler))
      throw DataError("model " + config.model +
                      " was fitted on a different training split; retrain with this data and config");
    log << "loaded model " << config.model << "\n";
    return std::move(mf.network);
  }
  TrainLog tl;
  Network net = train_network(config, data, tl, log);
  save_model(out_path(config, "model.gcm"), make_model_file(net, data.split.scaler, config.task));
  tl.write_csv(out_path(config, "trainlog.csv"));
  return net;
}

Tensor scaler_tensor(const std::vector<double>& v) { return Tensor({v.size()}, v); }

}  // namespace

std::string to_string(Task task) { return task == Task::regression ? "regression" : "classification"; }

Task task_from_string(const std::string& name) {
  if (name == "regression") return Task::regression;
  if (name == "classification") return Task::classification;
  throw ParameterError("task must be regression or classification, got '" + name + "'");
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, f] : field_table()) out.push_back(name);
    return out;
  }();
  return names;
}

void RunConfig::set(const std::string& key, const std::string& value) { field(key).set(*this, key, value); }

std::string RunConfig::get(const std::string& key) const { return field(key).get(*this); }

std::string RunConfig::dump() const {
  std::string out;
  for (const auto& [name, f] : field_table()) out += name + " = " + f.get(*this) + "\n";
  return out;
}

NetworkConfig RunConfig::network_config() const {
  NetworkConfig c = network;
  c.window = window;
  c.features = kFeatureCount;
  c.head = task == Task::regression ? Head::regression : Head::classification;
  return c;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig c = train;
  c.seed = derive_seed(seed, 2);
  return c;
}

std::vector<std::string> RunConfig::violations() const {
  std::vector<std::string> v;
  if (csv.empty() == (synth_rows == 0)) v.push_back("exactly one data source (csv or synth_rows) must be given");
  if (!(train_frac > 0.0 && train_frac < 1.0)) v.push_back("train_frac must be in (0, 1)");
  if (!(val_frac >= 0.0 && val_frac < 1.0)) v.push_back("val_frac must be in [0, 1)");
  if (!validate_on_test && val_frac == 0.0) v.push_back("val_frac must be > 0 unless validate_on_test is set");
  for (const auto& s : network_config().violations()) v.push_back(s);
  for (const auto& s : train_config().violations()) v.push_back(s);
  if (knn_k == 0) v.push_back("knn_k must be >= 1");
  if (!(ridge_alpha >= 0.0)) v.push_back("ridge_alpha must be >= 0");
  if (!(ridge_lambda > 0.0)) v.push_back("ridge_lambda must be > 0");
  if (forest.n_trees == 0) v.push_back("rf_trees must be >= 1");
  if (forest.max_depth == 0) v.push_back("rf_depth must be >= 1");
  if (forest.min_leaf == 0) v.push_back("rf_min_leaf must be >= 1");
  if (explain_samples == 0) v.push_back("explain_samples must be >= 1");
  if (shapley_perms == 0) v.push_back("shapley_perms must be >= 1");
  if (out_dir.empty()) v.push_back("out_dir must not be empty");
  return v;
}

void RunConfig::validate() const {
  auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid run configuration:";
  for (const auto& s : v) msg += "\n  - " + s;
  throw ParameterError(msg);
}

void apply_config_file(RunConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParameterError(path + " line " + std::to_string(number) + ": expected 'key = value'");
    try {
      config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ParameterError& e) {
      throw ParameterError(path + " line " + std::to_string(number) + ": " + e.what());
    }
  }
}

PreparedData prepare_data(const RunConfig& config, std::ostream& log) {
  PreparedData data;
  if (!config.csv.empty()) {
    CsvTable table = load_csv(config.csv, config.missing);
    for (const auto& w : table.warnings) log << "warning: " << w << "\n";
    data.records = std::move(table.records);
  } else {
    data.records = synth_generate(config.synth_rows, config.seed, config.regime);
  }
  SupervisedSet set = make_windows(data.records, config.window);
  if (config.task == Task::classification) set.targets = label_zero_state(set.targets);

  SplitOptions opts;
  opts.train_frac = config.train_frac;
  opts.val_frac_of_train = config.validate_on_test ? 0.0 : config.val_frac;
  opts.scale_target = config.task == Task::regression;
  opts.shuffle = config.shuffle_split;
  opts.seed = derive_seed(config.seed, 3);
  data.split = split_and_scale(set, opts);
  for (const auto& w : data.split.warnings) log << "warning: " << w << "\n";
  if (config.validate_on_test) data.split.val = data.split.test;
  if (data.split.train.size() == 0 || data.split.val.size() == 0 || data.split.test.size() == 0)
    throw DataError("split of " + std::to_string(set.size()) + " windows leaves an empty part (train " +
                    std::to_string(data.split.train.size()) + ", val " + std::to_string(data.split.val.size()) +
                    ", test " + std::to_string(data.split.test.size()) + "); provide more rows");
  return data;
}

std::vector<double> network_outputs(const Network& net, const SupervisedSet& set, const Scaler& scaler, Task task) {
  std::vector<double> out = predict_all(net, set.inputs);
  if (task == Task::regression)
    for (auto& v : out) v = scaler.inverse_target(v);
  return out;
}

std::vector<double> reporting_targets(const SupervisedSet& set, const PreparedData& data, std::size_t window,
                                      Task task) {
  if (task == Task::classification) return set.targets;
  std::vector<double> out;
  out.reserve(set.size());
  for (std::size_t p : set.positions) out.push_back(data.records.at(p + window).generator_kw());
  return out;
}

TableRow regression_row(const std::string& name, std::span<const double> pred, std::span<const double> real) {
  TableRow row;
  row.model = name;
  try {
    RegressionReport r = regression_metrics(pred, real);
    row.mae = r.mae;
    row.rmse = r.rmse;
    row.r2 = r.r2;
  } catch (const NumericError&) {
    // Constant targets: R^2 is undefined, the error magnitudes are not.
    double abs_sum = 0.0, sq_sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      abs_sum += std::abs(pred[i] - real[i]);
      sq_sum += (pred[i] - real[i]) * (pred[i] - real[i]);
    }
    row.mae = abs_sum / static_cast<double>(pred.size());
    row.rmse = std::sqrt(sq_sum / static_cast<double>(pred.size()));
    row.status = "ok (r2 undefined: constant targets)";
  }
  return row;
}

ModelFile make_model_file(const Network& net, const Scaler& scaler, Task task) {
  ModelFile mf;
  mf.network = net;
  mf.metadata["task"] = to_string(task);
  mf.extras["scaler.feature_mean"] = scaler_tensor(scaler.feature_mean);
  mf.extras["scaler.feature_std"] = scaler_tensor(scaler.feature_std);
  mf.extras["scaler.target"] = Tensor::vector({scaler.target_mean, scaler.target_std});
  return mf;
}

Scaler model_scaler(const ModelFile& model) {
  auto get = [&](const char* name) -> const Tensor& {
    auto it = model.extras.find(name);
    if (it == model.extras.end()) throw DataError(std::string("model file lacks ") + name);
    return it->second;
  };
  Scaler s;
  const Tensor& mean = get("scaler.feature_mean");
  const Tensor& sd = get("scaler.feature_std");
  const Tensor& target = get("scaler.target");
  if (mean.size() != kFeatureCount || sd.size() != kFeatureCount || target.size() != 2)
    throw SchemaError("model scaler does not cover the " + std::to_string(kFeatureCount) + " feature columns");
  s.feature_mean.assign(mean.values().begin(), mean.values().end());
  s.feature_std.assign(sd.values().begin(), sd.values().end());
  s.target_mean = target[0];
  s.target_std = target[1];
  return s;
}

Task model_task(const ModelFile& model) {
  auto it = model.metadata.find("task");
  if (it == model.metadata.end()) throw DataError("model file does not record its task");
  return task_from_string(it->second);
}

void cmd_synth(const SynthOptions& options, std::ostream& log) {
  if (options.rows == 0) throw ParameterError("synth needs --rows >= 1");
  if (options.out.empty()) throw ParameterError("synth needs an output path");
  if (auto parent = std::filesystem::path(options.out).parent_path(); !parent.empty()) ensure_dir(parent.string());
  const auto records = synth_generate(options.rows, options.seed, options.regime);
  write_csv(options.out, records);

  const auto reference = reference_moments(options.regime);
  const double n = static_cast<double>(records.size());
  nlohmann::ordered_json meta;
  meta["rows"] = records.size();
  meta["seed"] = options.seed;
  meta["regime"] = to_string(options.regime);
  nlohmann::ordered_json cols = nlohmann::ordered_json::array();
  log << "column            mean         target_mean  variance     target_variance\n";
  for (std::size_t j = 0; j < kFeatureCount; ++j) {
    double mean = 0.0;
    for (const auto& r : records) mean += r.values[j];
    mean /= n;
    double var = 0.0;
    for (const auto& r : records) var += (r.values[j] - mean) * (r.values[j] - mean);
    var /= n;
    cols.push_back({{"name", reference[j].name},
                    {"mean", mean},
                    {"target_mean", reference[j].mean},
                    {"variance", var},
                    {"target_variance", reference[j].variance}});
    char line[160];
    std::snprintf(line, sizeof line, "%-17s %-12.6g %-12.6g %-12.6g %-12.6g\n", std::string(reference[j].name).c_str(),
                  mean, reference[j].mean, var, reference[j].variance);
    log << line;
  }
  meta["columns"] = cols;
  write_text(options.out + ".meta.json", meta.dump(2) + "\n");
  log << "wrote " << records.size() << " rows to " << options.out << "\n";
}

TrainOutcome cmd_train(const RunConfig& config, std::ostream& log) {
  config.validate();
  ensure_dir(config.out_dir);
  write_text(out_path(config, "config.effective.txt"), config.dump());
  PreparedData data = prepare_data(config, log);

  TrainOutcome out;
  Network net = train_network(config, data, out.log, log);
  out.model = make_model_file(net, data.split.scaler, config.task);
  save_model(out_path(config, "model.gcm"), out.model);
  out.log.write_csv(out_path(config, "trainlog.csv"));

  const Scaler& sc = data.split.scaler;
  auto test_pred = network_outputs(net, data.split.test, sc, config.task);
  auto test_real = reporting_targets(data.split.test, data, config.window, config.task);
  auto train_pred = network_outputs(net, data.split.train, sc, config.task);
  auto train_real = reporting_targets(data.split.train, data, config.window, config.task);

  nlohmann::ordered_json& m = out.metrics;
  m["task"] = to_string(config.task);
  m["units"] = config.task == Task::regression ? "kW" : "probability";
  m["samples"] = {{"train", data.split.train.size()}, {"val", data.split.val.size()}, {"test", data.split.test.size()}};
  m["training"] = {{"epochs", out.log.epochs.size()},
                   {"stop_reason", to_string(out.log.stop)},
                   {"best_epoch", out.log.best_epoch},
                   {"best_val_loss", out.log.best_val_loss}};
  m["test"] = score_json(test_pred, test_real, config.task);
  m["train"] = score_json(train_pred, train_real, config.task);
  write_text(out_path(config, "metrics.json"), m.dump(2) + "\n");
  log << "test metrics: " << m["test"].dump().substr(0, 200) << "\n";
  return out;
}

CompareOutcome cmd_compare(const RunConfig& config, std::ostream& log) {
  config.validate();
  if (config.task != Task::regression)
    throw ParameterError("compare reports MAE/RMSE/R2 and needs task = regression");
  ensure_dir(config.out_dir);
  write_text(out_path(config, "config.effective.txt"), config.dump());
  PreparedData data = prepare_data(config, log);
  const Network net = obtain_network(config, data, log);

  const Scaler& sc = data.split.scaler;
  const auto real = reporting_targets(data.split.test, data, config.window, Task::regression);
  auto unscale = [&](std::vector<double> v) {
    for (auto& x : v) x = sc.inverse_target(x);
    return v;
  };

  CompareOutcome out;
  out.test_positions = data.split.test.positions;
  out.rows.push_back(regression_row("CNN-GRU-Attention", network_outputs(net, data.split.test, sc, Task::regression), real));

  const FlatSamples train = FlatSamples::from(data.split.train);
  const FlatSamples test = FlatSamples::from(data.split.test);
  log << "fitting baselines on " << train.size() << " flattened windows of " << train.dim << " values\n";
  out.rows.push_back(
      regression_row("KNN", unscale(knn_predict_all(train, test, config.knn_k, KnnMode::regression)), real));
  out.rows.push_back(regression_row(
      "Bayesian Ridge", unscale(bayes_ridge_fit(train, config.ridge_alpha, config.ridge_lambda).predict_all(test)), real));
  ForestConfig fc = config.forest;
  fc.seed = derive_seed(config.seed, 4);
  out.rows.push_back(regression_row("RF", unscale(RandomForest::fit(train, fc).predict_all(test)), real));
  for (const char* name : {"SVR", "XGB"}) {
    TableRow r;
    r.model = name;
    r.status = "not reproduced";
    out.rows.push_back(r);
  }

  std::string csv = "model,mae,rmse,r2,status\n";
  auto cell = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
  for (const auto& r : out.rows) csv += r.model + "," + cell(r.mae) + "," + cell(r.rmse) + "," + cell(r.r2) + "," + r.status + "\n";
  write_text(out_path(config, "compare.csv"), csv);

  nlohmann::ordered_json j;
  j["units"] = "kW";
  j["test_samples"] = out.test_positions.size();
  j["test_positions"] = out.test_positions;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : out.rows) rows.push_back(row_json(r));
  j["rows"] = rows;
  auto ref = nlohmann::ordered_json::array();
  const auto published = published_reference_rows();
  for (const auto& r : published) ref.push_back(row_json(r));
  j["published_reference"] = ref;
  j["published_rows_with_rmse_below_mae"] = inconsistent_rows(published);
  write_text(out_path(config, "compare.json"), j.dump(2) + "\n");

  for (const auto& r : out.rows)
    log << r.model << ": mae " << cell(r.mae) << " rmse " << cell(r.rmse) << " r2 " << cell(r.r2) << " [" << r.status
        << "]\n";
  return out;
}

PredictOutcome cmd_predict(const PredictOptions& options, std::ostream& log) {
  if (options.model.empty() || options.csv.empty() || options.out.empty())
    throw ParameterError("predict needs --model, --csv and an output path");
  ModelFile mf = load_model(options.model);
  const Scaler sc = model_scaler(mf);
  const Task task = model_task(mf);
  const std::size_t w = mf.network.config().window;
  if (mf.network.config().features != kFeatureCount)
    throw SchemaError("model expects " + std::to_string(mf.network.config().features) + " features, the CSV schema has " +
                      std::to_string(kFeatureCount));

  CsvTable table = load_csv(options.csv, options.missing);
  for (const auto& warn : table.warnings) log << "warning: " << warn << "\n";
  const auto& recs = table.records;
  if (recs.size() < w)
    throw DataError("predict needs at least " + std::to_string(w) + " rows (the model window), got " +
                    std::to_string(recs.size()));

  PredictOutcome out;
  std::vector<Tensor> inputs;
  const bool with_real = recs.size() > w;
  const std::size_t count = with_real ? recs.size() - w : 1;
  for (std::size_t i = 0; i < count; ++i) {
    Tensor x({w, kFeatureCount});
    for (std::size_t t = 0; t < w; ++t)
      for (std::size_t j = 0; j < kFeatureCount; ++j) x(t, j) = recs[i + t].values[j];
    inputs.push_back(sc.transform(x));
    out.index.push_back(i + w);
    if (with_real) {
      const double kw = recs[i + w].generator_kw();
      out.real.push_back(task == Task::regression ? kw : (kw <= kZeroStateThreshold ? 1.0 : 0.0));
    }
  }
  out.predicted = predict_all(mf.network, inputs);
  if (task == Task::regression)
    for (auto& v : out.predicted) v = sc.inverse_target(v);

  std::string csv;
  if (task == Task::regression) {
    csv = with_real ? "index,real,predicted\n" : "index,predicted\n";
    for (std::size_t i = 0; i < count; ++i)
      csv += std::to_string(out.index[i]) + (with_real ? "," + fmt(out.real[i]) : "") + "," + fmt(out.predicted[i]) + "\n";
  } else {
    csv = with_real ? "index,real,probability,label\n" : "index,probability,label\n";
    for (std::size_t i = 0; i < count; ++i)
      csv += std::to_string(out.index[i]) + (with_real ? "," + fmt(out.real[i]) : "") + "," + fmt(out.predicted[i]) + "," +
             (out.predicted[i] >= 0.5 ? "1" : "0") + "\n";
  }
  if (auto parent = std::filesystem::path(options.out).parent_path(); !parent.empty()) ensure_dir(parent.string());
  write_text(options.out, csv);

  if (with_real) {
    if (task == Task::regression) {
      out.r2 = regression_row("", out.predicted, out.real).r2;
      log << "r2 " << (out.r2 ? fmt(*out.r2) : std::string("undefined")) << "\n";
    } else {
      out.accuracy = classification_metrics(out.predicted, out.real).accuracy;
      log << "accuracy " << fmt(*out.accuracy) << "\n";
    }
  }
  log << "wrote " << count << " predictions to " << options.out << "\n";
  return out;
}

AttributionReport cmd_explain(const RunConfig& config, std::ostream& log) {
  config.validate();
  ensure_dir(config.out_dir);
  write_text(out_path(config, "config.effective.txt"), config.dump());
  PreparedData data = prepare_data(config, log);
  const Network net = obtain_network(config, data, log);
  const Scaler& sc = data.split.scaler;

  const SupervisedSet& test = data.split.test;
  const auto chosen = choose_samples(test.size(), config.explain_samples, derive_seed(config.seed, 5));
  std::vector<Tensor> windows;
  std::vector<std::size_t> ids;
  for (std::size_t i : chosen) {
    windows.push_back(test.inputs[i]);
    ids.push_back(test.positions[i]);
  }
  // Scaled features have zero training mean.
  const Tensor background({kFeatureCount}, 0.0);
  WindowModel model = [&](const Tensor& x) {
    const double y = net.predict(x);
    return config.task == Task::regression ? sc.inverse_target(y) : y;
  };
  ExplainOptions opts;
  opts.method = config.shapley_exact ? ShapleyMethod::exact : ShapleyMethod::automatic;
  opts.n_perms = config.shapley_perms;
  opts.seed = derive_seed(config.seed, 6);
  std::vector<std::string> names(kFeatureNames.begin(), kFeatureNames.end());
  AttributionReport report = explain(model, windows, ids, background, names, opts);

  for (std::size_t s = 0; s < report.values.size(); ++s) {
    double total = 0.0;
    for (double v : report.values[s]) total += v;
    const double target = report.predictions[s] - report.baseline;
    log << "efficiency window " << report.sample_ids[s] << ": sum(phi) " << fmt(total) << " f(x)-f(bg) " << fmt(target)
        << " gap " << fmt(std::abs(total - target)) << "\n";
  }
  write_shapley_csv(out_path(config, "shapley.csv"), report);
  write_text(out_path(config, "shapley.json"), attribution_json(report));
  log << "ranking:";
  for (std::size_t i : report.ranking()) log << " " << report.features[i];
  log << "\n";
  return report;
}

int exit_code_for(const std::exception& error) {
  if (dynamic_cast<const ParameterError*>(&error) || dynamic_cast<const SizeError*>(&error)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&error) || dynamic_cast<const DimensionError*>(&error)) return kExitData;
  if (dynamic_cast<const NumericError*>(&error)) return kExitNumeric;
  if (dynamic_cast<const IoError*>(&error)) return kExitIo;
  return kExitOther;
}

}  // namespace gridcast
