#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dgbench/errors.hpp"
#include "dgbench/harness.hpp"

using namespace dgbench;
namespace fs = std::filesystem;

namespace {

json minimal_config() {
  return json{
      {"suite",
       {{"synthetic",
         {{"examples_per_env", 150}, {"static_cont_channels", 4},
          {"invariant_dim", 2}}}}},
      {"algorithms", {"ERM"}},
      {"model", {{"hidden", {4}}, {"activation", "tanh"}}},
      {"train",
       {{"steps", 20}, {"batch_size", 32}, {"checkpoint_every", 10},
        {"n_iters", 2}, {"repeats", 2}}},
      {"seeds", {{"data", 5}, {"model", 6}, {"search", 7}}},
  };
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("dgbench_h_" + std::to_string(::getpid()) +
                                        "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static inline int counter = 0;
};

}  // namespace

TEST_CASE("config parsing fills defaults and validates") {
  auto cfg = parse_config_json(minimal_config());
  CHECK(cfg.snapshot.at("train").at("splits") == json({0.7, 0.1, 0.2}));
  CHECK(cfg.snapshot.at("selection").at("kind") == "training_domains");
  CHECK(cfg.search.repeats == 2);
  CHECK(cfg.standardize);

  auto bad_algo = minimal_config();
  bad_algo["algorithms"] = {"IRMX"};
  try {
    parse_config_json(bad_algo);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("IRMX") != std::string::npos);
    CHECK(msg.find("VREx") != std::string::npos);  // lists valid ids
  }

  auto bad_mu = minimal_config();
  bad_mu["shift"] = {{"kind", "BiasSampObs"}, {"mu", {{"env1", {1.0, 0.2}}}}};
  CHECK_THROWS_AS(parse_config_json(bad_mu), RangeError);

  auto no_suite = minimal_config();
  no_suite.erase("suite");
  CHECK_THROWS_AS(parse_config_json(no_suite), ConfigError);

  auto two_sources = minimal_config();
  two_sources["suite"]["dir"] = "/tmp/nope";
  CHECK_THROWS_AS(parse_config_json(two_sources), ConfigError);
}

TEST_CASE("config hash is stable and content-sensitive") {
  auto a = parse_config_json(minimal_config());
  auto b = parse_config_json(minimal_config());
  CHECK(config_hash(a.snapshot) == config_hash(b.snapshot));
  auto c_json = minimal_config();
  c_json["seeds"]["data"] = 99;
  auto c = parse_config_json(c_json);
  CHECK(config_hash(a.snapshot) != config_hash(c.snapshot));
}

TEST_CASE("record json round trip") {
  RunRecord rec;
  rec.algorithm = "VREx";
  rec.hparams = {3e-4, 12.5, 1e-2, 1e-2, 40};
  rec.seeds = {1, 2, 3};
  rec.repeat = 4;
  rec.iter = 7;
  rec.selection = "validation_domain";
  rec.checkpoints = {{10, 0.6}, {20, 0.7}};
  rec.best_selection_score = 0.7;
  rec.test.auroc = 0.81;
  rec.test.accuracy = 0.74;
  rec.test.threshold = 0.42;
  FairnessReport fr;
  fr.tpr_gap = -0.1;
  fr.tnr_gap = 0.05;
  fr.mcc_pred_attr = 0.2;
  fr.threshold = 0.42;
  fr.counts[0] = {5, 2, 7, 1};
  fr.counts[1] = {4, 3, 6, 2};
  rec.test.fairness = fr;
  rec.status = "best";
  rec.wall_seconds = 1.5;

  RunRecord back = record_from_json(record_to_json(rec));
  CHECK(back.algorithm == rec.algorithm);
  CHECK(back.hparams.lambda == rec.hparams.lambda);
  CHECK(back.hparams.anneal_step == rec.hparams.anneal_step);
  CHECK(back.checkpoints == rec.checkpoints);
  CHECK(back.test.auroc == rec.test.auroc);
  REQUIRE(back.test.fairness.has_value());
  CHECK(back.test.fairness->tpr_gap == fr.tpr_gap);
  CHECK(back.test.fairness->counts[1].fn == 2);
  CHECK(back.status == "best");
}

TEST_CASE("run store appends, reloads, and tolerates a truncated tail") {
  TempDir tmp;
  auto path = (tmp.path / "records.jsonl").string();
  {
    RunStore store(path);
    store.append({{"key", "k1"}, {"kind", "run"}, {"v", 1}});
    store.append({{"key", "k1"}, {"kind", "summary"}});
    store.append({{"key", "k2"}, {"kind", "run"}, {"v", 2}});
  }
  {
    std::ofstream out(path, std::ios::app);
    out << "{\"key\": \"k3\", \"kin";  // simulated crash mid-append
  }
  RunStore store(path);
  CHECK(store.entries().size() == 3);
  CHECK(store.by_key("k1").size() == 2);
  CHECK(store.cell_complete("k1"));
  CHECK(!store.cell_complete("k2"));
}

TEST_CASE("run_experiment persists, reruns identically, and resumes") {
  TempDir tmp;
  auto cfg = parse_config_json(minimal_config());
  auto path = (tmp.path / "records.jsonl").string();

  RunStore store(path);
  auto results = run_experiment(cfg, store);
  REQUIRE(results.size() == 1);
  CHECK(!results[0].resumed);
  CHECK(results[0].summary.best_per_repeat.size() == 2);
  // 2 repeats x 2 iters runs + 1 summary entry
  CHECK(store.by_key(run_key(cfg, "ERM")).size() == 5);

  // resume: completed cell is loaded, not re-run
  RunStore store2(path);
  auto resumed = run_experiment(cfg, store2);
  CHECK(resumed[0].resumed);
  CHECK(resumed[0].summary.auroc.mean ==
        doctest::Approx(results[0].summary.auroc.mean).epsilon(1e-15));
  CHECK(store2.by_key(run_key(cfg, "ERM")).size() == 5);  // nothing appended

  // determinism: a fresh store reproduces the summary exactly
  TempDir tmp2;
  RunStore store3((tmp2.path / "records.jsonl").string());
  auto fresh = run_experiment(cfg, store3);
  CHECK(fresh[0].summary.auroc.mean ==
        doctest::Approx(results[0].summary.auroc.mean).epsilon(1e-15));
  CHECK(fresh[0].summary.best_per_repeat[0].hparams.lr ==
        results[0].summary.best_per_repeat[0].hparams.lr);
}

TEST_CASE("lambda sweep pins lambda per cell") {
  TempDir tmp;
  auto j = minimal_config();
  j["algorithms"] = {"ERM", "VREx"};
  auto cfg = parse_config_json(j);
  RunStore store((tmp.path / "records.jsonl").string());
  auto cells = sweep_lambda(cfg, {100.0, 0.1}, store);
  REQUIRE(cells.size() == 2);  // only the penalized method sweeps
  CHECK(cells[0].cell == "VREx@lambda=0.1");
  CHECK(cells[1].cell == "VREx@lambda=100");
  for (const auto& c : cells)
    for (const auto& rec : c.summary.best_per_repeat)
      CHECK((rec.hparams.lambda == 0.1 || rec.hparams.lambda == 100.0));
}

TEST_CASE("table emitter layout") {
  TableRow row;
  row.setting = "Base";
  row.cells["OracleID"] = {0.95, 0.01, 5};
  row.cells["ERM"] = {0.80, 0.02, 5};
  row.cells["IRM"] = {0.85, 0.03, 5};
  std::string table = emit_table({row}, false);

  std::istringstream is(table);
  std::string header, line;
  std::getline(is, header);
  std::getline(is, line);
  CHECK(header ==
        "setting\tOracleID\tOracleMerged\tERM\tGroupDRO\tIRM\tVREx\tRVP\tIGA\t"
        "CORAL\tMLDG");
  CHECK(line.find("0.850±0.030*") != std::string::npos);  // best non-oracle
  CHECK(line.find("0.950±0.010*") == std::string::npos);  // oracle never starred
  CHECK(line.find("\t-") != std::string::npos);           // missing cells

  std::string unaug = emit_table({}, true);
  CHECK(unaug == std::string("setting\tOracleID\tOracleMerged\tERM Unaug\tERM\t"
                             "GroupDRO\tIRM\tVREx\tRVP\tIGA\tCORAL\tMLDG\n"));
}

TEST_CASE("plot data is columnar and sorted by x") {
  std::map<double, std::map<std::string, Aggregate>> series;
  series[10.0]["IRM"] = {0.7, 0.01, 5};
  series[0.1]["IRM"] = {0.8, 0.02, 5};
  series[0.1]["VREx"] = {0.75, 0.0, 5};
  std::string out = emit_plot_data(series);
  std::istringstream is(out);
  std::string header, l1, l2;
  std::getline(is, header);
  std::getline(is, l1);
  std::getline(is, l2);
  CHECK(header == "x\tIRM_mean\tIRM_std\tVREx_mean\tVREx_std");
  CHECK(l1.substr(0, 3) == "0.1");
  CHECK(l2.substr(0, 2) == "10");
  CHECK(l2.find("nan") != std::string::npos);  // VREx missing at x=10
}

TEST_CASE("biassamp config trains end to end with fairness metrics") {
  TempDir tmp;
  auto j = minimal_config();
  j["shift"] = {{"kind", "BiasSampUnobs"},
                {"mu",
                 {{"env1", {0.7, 0.3}}, {"env2", {0.6, 0.4}},
                  {"env3", {0.5, 0.5}}, {"val", {0.5, 0.5}},
                  {"test", {0.3, 0.7}}}}};
  j["suite"]["synthetic"]["examples_per_env"] = 400;
  auto cfg = parse_config_json(j);
  RunStore store((tmp.path / "r.jsonl").string());
  auto results = run_experiment(cfg, store);
  REQUIRE(results.size() == 1);
  const auto& best = results[0].summary.best_per_repeat[0];
  REQUIRE(best.test.fairness.has_value());
  CHECK(best.test.fairness->tpr_gap >= -1.0);
  CHECK(best.test.fairness->tpr_gap <= 1.0);
  CHECK(std::abs(best.test.fairness->mcc_pred_attr) <= 1.0);
}
