// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "gridcast/error.hpp"
#include "gridcast/pipeline.hpp"
#include "json.hpp"

using namespace gridcast;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "gridcast_pipeline_test";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// Runs the CLI, returns its exit status; stdout goes to `log`.
int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(GRIDCAST_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path fresh(const std::string& name) {
  fs::path p = kRoot / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path small_config() {
  fs::create_directories(kRoot);
  fs::path p = kRoot / "small.cfg";
  std::ofstream out(p);
  out << "# tiny network for fast tests\n"
         "window = 4\nblocks = 1\nconv_filters = 4\ngru_units = 4\nattn_dim = 4\nmlp_hidden = 8\n"
         "dropout = 0.1\nmax_epochs = 3\nbatch_size = 32\nlr = 0.003\n"
         "rf_trees = 5\nrf_depth = 5\nexplain_samples = 3\nshapley_perms = 8\n";
  return p;
}

RunConfig small_run(const std::string& out_dir) {
  RunConfig c;
  apply_config_file(c, small_config().string());
  c.synth_rows = 400;
  c.seed = 3;
  c.out_dir = out_dir;
  return c;
}

}  // namespace

TEST_CASE("run config: set, get, dump, file") {
  RunConfig c;
  c.set("window", "12");
  c.set("lr", "0.01");
  c.set("task", "classification");
  c.set("shuffle_split", "true");
  CHECK(c.window == 12);
  CHECK(c.train.initial_lr == 0.01);
  CHECK(c.get("task") == "classification");
  CHECK(c.get("shuffle_split") == "true");
  CHECK_THROWS_AS(c.set("no_such_key", "1"), ParameterError);
  CHECK_THROWS_AS(c.set("window", "-3"), ParameterError);
  CHECK_THROWS_AS(c.set("lr", "fast"), ParameterError);
  CHECK_THROWS_AS(c.set("task", "ranking"), ParameterError);

  // dump() parses back into an identical config.
  RunConfig d;
  fs::create_directories(kRoot);
  const fs::path p = kRoot / "dump.cfg";
  std::ofstream(p) << c.dump();
  apply_config_file(d, p.string());
  CHECK(d.dump() == c.dump());
  CHECK(lines(p).size() == RunConfig::keys().size());

  std::ofstream(kRoot / "bad.cfg") << "window = 8\nthis line is wrong\n";
  try {
    apply_config_file(d, (kRoot / "bad.cfg").string());
    FAIL("expected an error");
  } catch (const ParameterError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("run config: data source and invariants") {
  RunConfig c;
  CHECK_FALSE(c.violations().empty());  // no source
  c.synth_rows = 100;
  CHECK(c.violations().empty());
  c.csv = "x.csv";
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c.csv.clear();
  c.network.blocks = 0;
  c.train.lr_patience = 0;
  c.knn_k = 0;
  CHECK(c.violations().size() >= 3);
  CHECK(c.network_config().head == Head::regression);
  c.task = Task::classification;
  CHECK(c.network_config().head == Head::classification);
  CHECK(c.network_config().features == kFeatureCount);
}

TEST_CASE("model file carries scaler and task") {
  Rng rng(1);
  NetworkConfig nc;
  nc.window = 3;
  Network net = Network::build(nc, rng);
  Scaler sc;
  sc.feature_mean.assign(kFeatureCount, 0.5);
  sc.feature_std.assign(kFeatureCount, 2.0);
  sc.target_mean = 18.5;
  sc.target_std = 21.0;
  fs::create_directories(kRoot);
  const auto path = (kRoot / "m.gcm").string();
  save_model(path, make_model_file(net, sc, Task::classification));
  ModelFile mf = load_model(path);
  CHECK(model_task(mf) == Task::classification);
  Scaler back = model_scaler(mf);
  CHECK(back.feature_mean == sc.feature_mean);
  CHECK(back.target_std == 21.0);
}

TEST_CASE("regression_row tolerates constant targets") {
  std::vector<double> pred{1.0, 2.0}, real{0.0, 0.0};
  TableRow r = regression_row("m", pred, real);
  CHECK_FALSE(r.r2.has_value());
  CHECK(*r.mae == 1.5);
  CHECK(r.status.find("undefined") != std::string::npos);
}

TEST_CASE("cli synth") {
  const fs::path dir = fresh("synth");
  const fs::path csv = dir / "data.csv";
  REQUIRE(cli("synth --rows 500 --seed 7 --out " + csv.string(), dir / "log.txt") == 0);
  CHECK(lines(csv).size() == 501);
  const std::string first = slurp(csv);
  REQUIRE(cli("synth --rows 500 --seed 7 --out " + csv.string(), dir / "log.txt") == 0);
  CHECK(slurp(csv) == first);
  CHECK(slurp(dir / "log.txt").find("pv_kw") != std::string::npos);

  const fs::path kenya = dir / "kenya.csv";
  REQUIRE(cli("synth --rows 50 --seed 7 --regime kenya --out " + kenya.string(), dir / "log.txt") == 0);
  auto meta = nlohmann::json::parse(slurp(kenya.string() + ".meta.json"));
  CHECK(meta["regime"] == "kenya");
  CHECK(meta["rows"] == 50);
  CHECK(meta["columns"].size() == kFeatureCount);

  CHECK(cli("synth --rows 5 --seed 7 --regime mars --out " + csv.string(), dir / "log.txt") == kExitConfig);
  CHECK(cli("synth --seed 7", dir / "log.txt") == kExitConfig);
}

TEST_CASE("cli train writes every artifact") {
  const fs::path dir = fresh("train");
  const std::string base = "--config " + small_config().string() + " --synth-rows 400 --seed 3 ";
  REQUIRE(cli("train " + base + "--out-dir " + (dir / "reg").string(), dir / "log.txt") == 0);
  for (const char* f : {"model.gcm", "metrics.json", "trainlog.csv", "config.effective.txt"})
    CHECK(fs::exists(dir / "reg" / f));
  auto m = nlohmann::json::parse(slurp(dir / "reg" / "metrics.json"));
  for (const char* k : {"mae", "rmse", "r2"}) CHECK(m["test"].contains(k));
  CHECK(lines(dir / "reg" / "trainlog.csv").size() == 4);
  CHECK(lines(dir / "reg" / "trainlog.csv")[0] == "epoch,train_loss,val_loss,lr");

  REQUIRE(cli("train " + base + "--max-epochs 1 --out-dir " + (dir / "one").string(), dir / "log.txt") == 0);
  CHECK(lines(dir / "one" / "trainlog.csv").size() == 2);

  REQUIRE(cli("train " + base + "--task classification --out-dir " + (dir / "cls").string(), dir / "log.txt") == 0);
  auto c = nlohmann::json::parse(slurp(dir / "cls" / "metrics.json"));
  for (const char* k : {"accuracy", "precision", "auc", "confusion", "roc"}) CHECK(c["test"].contains(k));
  for (const char* k : {"tp", "tn", "fp", "fn"}) CHECK(c["test"]["confusion"].contains(k));

  // The effective config reproduces the run.
  REQUIRE(cli("train --config " + (dir / "reg" / "config.effective.txt").string() + " --out-dir " +
                  (dir / "again").string(),
              dir / "log.txt") == 0);
  CHECK(slurp(dir / "again" / "metrics.json") == slurp(dir / "reg" / "metrics.json"));
}

TEST_CASE("cli error exit codes") {
  const fs::path dir = fresh("errors");
  const std::string cfg = "--config " + small_config().string();
  CHECK(cli("train " + cfg + " --out-dir " + dir.string(), dir / "log.txt") == kExitConfig);  // no data source
  CHECK(slurp(dir / "log.txt").find("data source") != std::string::npos);
  CHECK(cli("train " + cfg + " --synth-rows 100 --set blocks=0 --out-dir " + dir.string(), dir / "log.txt") ==
        kExitConfig);
  CHECK(slurp(dir / "log.txt").find("blocks") != std::string::npos);
  CHECK(cli("train " + cfg + " --synth-rows 100 --set bogus=1 --out-dir " + dir.string(), dir / "log.txt") ==
        kExitConfig);

  std::ofstream(dir / "bad.csv") << "pv_kw,battery_kw\n1,2\n";
  CHECK(cli("train " + cfg + " --csv " + (dir / "bad.csv").string() + " --out-dir " + dir.string(), dir / "log.txt") ==
        kExitData);
  CHECK(slurp(dir / "log.txt").find("generator_kw") != std::string::npos);
  CHECK(cli("train " + cfg + " --csv " + (dir / "missing.csv").string() + " --out-dir " + dir.string(),
            dir / "log.txt") != kExitOk);
  CHECK(exit_code_for(NumericError("x")) == kExitNumeric);
  CHECK(exit_code_for(SchemaError("x")) == kExitData);
  CHECK(exit_code_for(IoError("x")) == kExitIo);
  CHECK(exit_code_for(std::runtime_error("x")) == kExitOther);
}

TEST_CASE("predict reproduces training metrics and handles both layouts") {
  const fs::path dir = fresh("predict");
  RunConfig c = small_run((dir / "run").string());
  std::stringstream log;
  TrainOutcome t = cmd_train(c, log);

  // Rows covering exactly the training windows.
  const auto records = synth_generate(c.synth_rows, c.seed, c.regime);
  const std::size_t n_train = t.metrics["samples"]["train"].get<std::size_t>();
  std::vector<Record> head(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(n_train + c.window));
  write_csv((dir / "train_rows.csv").string(), head);

  PredictOptions p;
  p.model = (dir / "run" / "model.gcm").string();
  p.csv = (dir / "train_rows.csv").string();
  p.out = (dir / "pred.csv").string();
  PredictOutcome out = cmd_predict(p, log);
  REQUIRE(out.r2.has_value());
  CHECK(std::abs(*out.r2 - t.metrics["train"]["r2"].get<double>()) < 1e-9);
  auto rows = lines(dir / "pred.csv");
  CHECK(rows[0] == "index,real,predicted");
  CHECK(rows.size() == n_train + 1);
  CHECK(rows[1].rfind(std::to_string(c.window) + ",", 0) == 0);

  std::vector<Record> one(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(c.window));
  write_csv((dir / "one.csv").string(), one);
  p.csv = (dir / "one.csv").string();
  out = cmd_predict(p, log);
  rows = lines(dir / "pred.csv");
  CHECK(rows[0] == "index,predicted");
  CHECK(rows.size() == 2);
  CHECK_FALSE(out.r2.has_value());

  std::vector<Record> few(records.begin(), records.begin() + 2);
  write_csv((dir / "few.csv").string(), few);
  p.csv = (dir / "few.csv").string();
  CHECK_THROWS_AS(cmd_predict(p, log), DataError);

  // CLI path and classification layout.
  REQUIRE(cli("predict --model " + (dir / "run" / "model.gcm").string() + " --csv " +
                  (dir / "train_rows.csv").string() + " --out-dir " + (dir / "cli").string(),
              dir / "log.txt") == 0);
  CHECK(fs::exists(dir / "cli" / "predictions.csv"));
  CHECK(slurp(dir / "log.txt").find("r2 ") != std::string::npos);

  c.task = Task::classification;
  c.out_dir = (dir / "cls").string();
  cmd_train(c, log);
  p.model = (dir / "cls" / "model.gcm").string();
  p.csv = (dir / "train_rows.csv").string();
  out = cmd_predict(p, log);
  CHECK(lines(dir / "pred.csv")[0] == "index,real,probability,label");
  CHECK(out.accuracy.has_value());
}

TEST_CASE("compare emits the table on shared test windows") {
  const fs::path dir = fresh("compare");
  RunConfig c = small_run((dir / "a").string());
  std::stringstream log;
  CompareOutcome out = cmd_compare(c, log);
  REQUIRE(out.rows.size() == 6);
  CHECK(out.rows[0].model == "CNN-GRU-Attention");
  CHECK(out.rows[1].model == "KNN");
  CHECK(out.rows[2].model == "Bayesian Ridge");
  CHECK(out.rows[3].model == "RF");
  for (int i = 0; i < 4; ++i) CHECK(out.rows[i].rmse.has_value());
  CHECK(out.rows[4].status == "not reproduced");
  CHECK(out.rows[5].status == "not reproduced");
  CHECK(lines(dir / "a" / "compare.csv").size() == 7);
  CHECK(lines(dir / "a" / "compare.csv")[0] == "model,mae,rmse,r2,status");

  auto j = nlohmann::json::parse(slurp(dir / "a" / "compare.json"));
  CHECK(j["test_positions"].size() == out.test_positions.size());
  CHECK(j["published_rows_with_rmse_below_mae"].size() > 0);

  // Reusing the trained model gives the same table.
  RunConfig again = c;
  again.model = (dir / "a" / "model.gcm").string();
  again.out_dir = (dir / "b").string();
  cmd_compare(again, log);
  CHECK(slurp(dir / "b" / "compare.csv") == slurp(dir / "a" / "compare.csv"));

  // A model fitted on other data is refused.
  RunConfig other = again;
  other.synth_rows = 500;
  CHECK_THROWS_AS(cmd_compare(other, log), DataError);

  c.task = Task::classification;
  CHECK_THROWS_AS(cmd_compare(c, log), ParameterError);
}

TEST_CASE("compare accepts a CSV source") {
  const fs::path dir = fresh("compare_csv");
  write_csv((dir / "data.csv").string(), synth_generate(300, 9, Regime::kenya), true);
  REQUIRE(cli("compare --config " + small_config().string() + " --csv " + (dir / "data.csv").string() +
                  " --out-dir " + (dir / "out").string(),
              dir / "log.txt") == 0);
  auto rows = lines(dir / "out" / "compare.csv");
  REQUIRE(rows.size() == 7);
  CHECK(rows[5] == "SVR,,,,not reproduced");
  CHECK(rows[6] == "XGB,,,,not reproduced");
}

TEST_CASE("explain writes one row per feature and checks efficiency") {
  const fs::path dir = fresh("explain");
  const std::string base = "explain --config " + small_config().string() + " --synth-rows 400 --seed 3 ";
  REQUIRE(cli(base + "--out-dir " + (dir / "a").string(), dir / "log.txt") == 0);
  auto rows = lines(dir / "a" / "shapley.csv");
  CHECK(rows.size() == kFeatureCount + 1);
  CHECK(rows[0] == "feature,mean_abs_shapley");
  const std::string log = slurp(dir / "log.txt");
  std::size_t eff = 0;
  for (std::size_t pos = 0; (pos = log.find("efficiency window", pos)) != std::string::npos; ++pos) ++eff;
  CHECK(eff == 3);
  auto j = nlohmann::json::parse(slurp(dir / "a" / "shapley.json"));
  CHECK(j["method"] == "permutation_sampling");
  CHECK(j["max_efficiency_gap"].get<double>() < 1e-9);

  CHECK(cli(base + "--exact --out-dir " + (dir / "b").string(), dir / "log.txt") == kExitConfig);
  CHECK(slurp(dir / "log.txt").find("sampling") != std::string::npos);
}
