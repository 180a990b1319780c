// SPDX-License-Identifier: Apache-2.0
// gridcast command-line front end.

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gridcast/error.hpp"
#include "gridcast/pipeline.hpp"

using namespace gridcast;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> task;
  std::optional<std::string> csv;
  std::optional<std::size_t> synth_rows;
  std::optional<std::string> regime;
  std::optional<std::size_t> window;
  std::optional<std::size_t> max_epochs;
  std::optional<std::string> model;
  std::vector<std::string> overrides;  // key=value
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "flat key = value config file");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--out-dir", f.out_dir, "output directory");
  cmd->add_option("--task", f.task, "regression or classification");
  cmd->add_option("--csv", f.csv, "input CSV");
  cmd->add_option("--synth-rows", f.synth_rows, "generate this many synthetic rows instead of reading a CSV");
  cmd->add_option("--regime", f.regime, "synthetic regime: default or kenya");
  cmd->add_option("--window", f.window, "input window length in rows");
  cmd->add_option("--max-epochs", f.max_epochs, "epoch cap");
  cmd->add_option("--model", f.model, "existing model file");
  cmd->add_option("--set", f.overrides, "override any config key: --set key=value (repeatable)");
}

RunConfig build_config(const CommonFlags& f) {
  RunConfig c;
  if (!f.config.empty()) apply_config_file(c, f.config);
  if (f.seed) c.seed = *f.seed;
  if (f.out_dir) c.out_dir = *f.out_dir;
  if (f.task) c.set("task", *f.task);
  if (f.csv) {
    c.csv = *f.csv;
    if (!f.synth_rows) c.synth_rows = 0;
  }
  if (f.synth_rows) {
    c.synth_rows = *f.synth_rows;
    if (!f.csv) c.csv.clear();
  }
  if (f.regime) c.set("regime", *f.regime);
  if (f.window) c.window = *f.window;
  if (f.max_epochs) c.train.max_epochs = *f.max_epochs;
  if (f.model) c.model = *f.model;
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ParameterError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gridcast: microgrid generator forecasting with a CNN-GRU-attention network"};
  app.require_subcommand(1);

  SynthOptions synth;
  std::string synth_regime = "default";
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic microgrid CSV");
  synth_cmd->add_option("--rows", synth.rows, "number of rows")->required();
  synth_cmd->add_option("--seed", synth.seed, "seed");
  synth_cmd->add_option("--regime", synth_regime, "default or kenya");
  synth_cmd->add_option("--out", synth.out, "output CSV path")->required();

  CommonFlags train_flags, compare_flags, explain_flags;
  auto* train_cmd = app.add_subcommand("train", "train the network and report test metrics");
  add_common(train_cmd, train_flags);
  auto* compare_cmd = app.add_subcommand("compare", "compare the network with KNN, Bayesian ridge and RF");
  add_common(compare_cmd, compare_flags);
  auto* explain_cmd = app.add_subcommand("explain", "Shapley feature attribution on test windows");
  add_common(explain_cmd, explain_flags);
  bool exact = false;
  explain_cmd->add_flag("--exact", exact, "enumerate all coalitions (at most 12 features)");

  PredictOptions predict;
  std::string missing = "reject";
  std::string predict_out_dir = ".";
  std::string predict_out;
  auto* predict_cmd = app.add_subcommand("predict", "predict every window of a CSV with a trained model");
  predict_cmd->add_option("--model", predict.model, "model file")->required();
  predict_cmd->add_option("--csv", predict.csv, "input CSV")->required();
  predict_cmd->add_option("--out-dir", predict_out_dir, "output directory");
  predict_cmd->add_option("--out", predict_out, "output CSV path (default <out-dir>/predictions.csv)");
  predict_cmd->add_option("--missing", missing, "reject or forward_fill");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*synth_cmd) {
      synth.regime = regime_from_string(synth_regime);
      cmd_synth(synth, std::cout);
    } else if (*train_cmd) {
      cmd_train(build_config(train_flags), std::cout);
    } else if (*compare_cmd) {
      cmd_compare(build_config(compare_flags), std::cout);
    } else if (*explain_cmd) {
      RunConfig c = build_config(explain_flags);
      if (exact) c.shapley_exact = true;
      cmd_explain(c, std::cout);
    } else if (*predict_cmd) {
      RunConfig tmp;
      tmp.set("missing", missing);
      predict.missing = tmp.missing;
      predict.out = predict_out.empty() ? predict_out_dir + "/predictions.csv" : predict_out;
      cmd_predict(predict, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitOk;
}
