// Command-line front end: generate suites, apply shifts, train, search,
// sweep, and report. Exit codes: 0 success, 1 validation error, 2 failed
// runs present.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "dgbench/errors.hpp"
#include "dgbench/harness.hpp"

using namespace dgbench;
namespace fs = std::filesystem;

namespace {

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return j;
}

// --set a.b.c=value overrides, value parsed as JSON when possible
void apply_overrides(json& j, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + s + "'");
    std::string key = s.substr(0, eq), value = s.substr(eq + 1);
    std::string pointer = "/";
    for (char c : key) pointer += c == '.' ? '/' : c;
    json v;
    try {
      v = json::parse(value);
    } catch (const json::parse_error&) {
      v = value;
    }
    j[json::json_pointer(pointer)] = v;
  }
}

ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& sets,
                             const std::string& outdir_flag) {
  json j = load_json(path);
  apply_overrides(j, sets);
  if (!outdir_flag.empty()) j["output_dir"] = outdir_flag;
  ExperimentConfig cfg = parse_config_json(j);
  if (const char* root = std::getenv("DGBENCH_OUTPUT_ROOT")) {
    cfg.output_dir = (fs::path(root) / cfg.output_dir).string();
    cfg.snapshot["output_dir"] = cfg.output_dir;
  }
  fs::create_directories(cfg.output_dir);
  return cfg;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

void print_summary(const std::string& cell, const TrialSummary& s) {
  std::cout << cell << ": auroc " << format_mean_std(s.auroc) << "  accuracy "
            << format_mean_std(s.accuracy);
  if (!s.warning.empty()) std::cout << "  [" << s.warning << "]";
  if (!s.best_per_repeat.empty() && s.best_per_repeat[0].unrealistic_selection)
    std::cout << "  [unrealistic selection]";
  std::cout << "\n";
}

bool any_failures(const std::vector<CellResult>& cells) {
  for (const auto& c : cells)
    if (!c.summary.failed_repeats.empty()) return true;
  return false;
}

std::vector<double> parse_grid(const std::string& csv) {
  std::vector<double> grid;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) grid.push_back(std::stod(tok));
  if (grid.empty()) throw ConfigError("empty grid");
  return grid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"domain-generalization benchmark harness"};
  app.require_subcommand(1);

  std::string config_path, outdir_flag, suite_out, records_path;
  std::vector<std::string> sets;
  app.add_option("--config,-c", config_path, "experiment config (JSON)");
  app.add_option("--set", sets, "override config keys, e.g. --set train.steps=100");
  app.add_option("--output-dir,-o", outdir_flag, "override output directory");

  auto* gen = app.add_subcommand("generate", "build a suite and save it");
  gen->add_option("--suite-out", suite_out, "directory for the saved suite");

  auto* shift = app.add_subcommand("shift", "apply the configured shift and save");
  shift->add_option("--suite-out", suite_out, "directory for the saved suite");

  auto* train = app.add_subcommand("train", "single training run, no search");
  double train_lr = 1e-3, train_lambda = 1.0;
  train->add_option("--lr", train_lr, "learning rate");
  train->add_option("--lambda", train_lambda, "penalty weight");

  auto* search = app.add_subcommand("search", "full random-search protocol");

  auto* sweep = app.add_subcommand("sweep", "lambda or generation-parameter sweep");
  std::string sweep_type = "lambda", sweep_param = "eta", grid_csv;
  std::string strategies_csv = "training_domains,test_domain";
  sweep->add_option("--type", sweep_type, "lambda | cmnist");
  sweep->add_option("--param", sweep_param, "eta | beta | delta (cmnist sweeps)");
  sweep->add_option("--grid", grid_csv, "comma-separated values")->required();
  sweep->add_option("--strategies", strategies_csv,
                    "comma-separated selection strategies (cmnist sweeps)");

  auto* report = app.add_subcommand("report", "emit table and plot data");
  std::string report_metric = "auroc", report_setting;
  report->add_option("--records", records_path, "records.jsonl path")->required();
  report->add_option("--metric", report_metric, "auroc | accuracy");
  report->add_option("--setting", report_setting, "row label override");
  report->add_option("--output-dir", outdir_flag, "where to write table/plot");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    if (report->parsed()) {
      RunStore store(records_path);
      TableRow row;
      row.setting = report_setting;
      std::map<double, std::map<std::string, Aggregate>> series;
      for (const auto& e : store.entries()) {
        if (e.value("kind", "") != "summary") continue;
        TrialSummary s;
        const json& sj = e.at("summary");
        Aggregate agg = report_metric == "accuracy"
                            ? Aggregate{sj.at("accuracy").at("mean").get<double>(),
                                        sj.at("accuracy").at("std").get<double>(),
                                        sj.at("accuracy").at("n").get<int>()}
                            : Aggregate{sj.at("auroc").at("mean").get<double>(),
                                        sj.at("auroc").at("std").get<double>(),
                                        sj.at("auroc").at("n").get<int>()};
        std::string cell = e.value("cell", "");
        if (row.setting.empty() && e.contains("config"))
          row.setting = e.at("config").at("shift").at("kind").get<std::string>();
        auto at = cell.find("@lambda=");
        if (at != std::string::npos) {
          double lam = std::stod(cell.substr(at + 8));
          series[lam][cell.substr(0, at)] = agg;
        } else {
          row.cells[cell] = agg;
        }
      }
      bool unaug = row.cells.count("ERM Unaug") > 0;
      std::string table = emit_table({row}, unaug);
      std::cout << table;
      std::string out = outdir_flag.empty() ? "." : outdir_flag;
      fs::create_directories(out);
      write_file(fs::path(out) / "table.tsv", table);
      if (!series.empty()) {
        std::string plot = emit_plot_data(series);
        write_file(fs::path(out) / "lambda_sweep.tsv", plot);
        std::cout << plot;
      }
      return 0;
    }

    if (config_path.empty()) throw ConfigError("--config is required");
    ExperimentConfig cfg = load_config(config_path, sets, outdir_flag);

    if (gen->parsed() || shift->parsed()) {
      if (shift->parsed() && cfg.shift == ShiftKind::Base)
        throw ConfigError("shift: config has no shift kind set");
      std::string dir = suite_out.empty()
                            ? (fs::path(cfg.output_dir) / "suite").string()
                            : suite_out;
      if (shift->parsed()) {
        // report the shift statistics alongside the saved suite
        ExperimentConfig base_cfg = cfg;
        base_cfg.shift = ShiftKind::Base;
        EnvironmentSuite base = build_suite(base_cfg, cfg.search.seeds);
        ShiftPlan plan = make_shift_plan(cfg, base);
        std::mt19937_64 rng(cfg.search.seeds.data_seed ^ 0x54175417ull);
        auto [shifted, rep] = apply_shift(base, plan, rng);
        for (const auto& st : rep.per_env)
          std::cout << st.env << ": flip_rate " << st.flip_rate
                    << "  noise(+) " << st.noise_mean_pos << "  noise(-) "
                    << st.noise_mean_neg << "  prev(g1) " << st.prevalence_g1
                    << "  prev(g0) " << st.prevalence_g0 << "  kept "
                    << st.retained_count << "/" << st.original_count << "\n";
        save_suite(shifted, dir);
      } else {
        save_suite(build_suite(cfg, cfg.search.seeds), dir);
      }
      std::cout << "suite written to " << dir << "\n";
      return 0;
    }

    if (train->parsed()) {
      EnvironmentSuite suite = build_suite(cfg, cfg.search.seeds);
      SearchConfig sc = cfg.search;
      sc.algo = cfg.algorithms.at(0);
      HParams hp;
      hp.lr = train_lr;
      hp.lambda = train_lambda;
      PredictorModel model;
      RunRecord rec = run_trial(suite, sc, hp, 0, 0, &model);
      if (rec.diverged) {
        std::cerr << "run diverged\n";
        return 2;
      }
      rec.test = final_evaluation(model, suite, sc.strategy);
      save_model(model, cfg.search.seeds,
                 (fs::path(cfg.output_dir) / "model.bin").string());
      std::cout << algorithm_name(sc.algo) << ": test auroc " << rec.test.auroc
                << "  accuracy " << rec.test.accuracy << "\n";
      std::ofstream(fs::path(cfg.output_dir) / "run.json")
          << record_to_json(rec).dump(2) << "\n";
      return 0;
    }

    RunStore store((fs::path(cfg.output_dir) / "records.jsonl").string());

    if (search->parsed()) {
      auto cells = run_experiment(cfg, store);
      TableRow row;
      row.setting = shift_kind_name(cfg.shift);
      json summary_json;
      for (const auto& c : cells) {
        print_summary(c.cell, c.summary);
        row.cells[c.cell] = c.summary.auroc;
        summary_json[c.cell] = {{"auroc", format_mean_std(c.summary.auroc)},
                                {"accuracy", format_mean_std(c.summary.accuracy)},
                                {"warning", c.summary.warning}};
      }
      write_file(fs::path(cfg.output_dir) / "table.tsv", emit_table({row}, false));
      std::ofstream(fs::path(cfg.output_dir) / "summary.json")
          << summary_json.dump(2) << "\n";
      return any_failures(cells) ? 2 : 0;
    }

    if (sweep->parsed()) {
      auto grid = parse_grid(grid_csv);
      if (sweep_type == "lambda") {
        auto cells = sweep_lambda(cfg, grid, store);
        std::map<double, std::map<std::string, Aggregate>> series;
        for (const auto& c : cells) {
          auto at = c.cell.find("@lambda=");
          series[std::stod(c.cell.substr(at + 8))][c.cell.substr(0, at)] =
              c.summary.auroc;
          print_summary(c.cell, c.summary);
        }
        write_file(fs::path(cfg.output_dir) / "lambda_sweep.tsv",
                   emit_plot_data(series));
        return any_failures(cells) ? 2 : 0;
      }
      if (sweep_type == "cmnist") {
        std::vector<SelectionKind> strategies;
        std::stringstream ss(strategies_csv);
        std::string tok;
        while (std::getline(ss, tok, ','))
          strategies.push_back(selection_kind_from_name(tok));
        auto points = sweep_cmnist(cfg, cmnist_param_from_name(sweep_param),
                                   grid, strategies, store);
        bool failed = false;
        std::map<double, std::map<std::string, Aggregate>> series;
        for (const auto& p : points) {
          std::string col =
              p.algorithm + "/" + selection_kind_name(p.selection);
          series[p.value][col] = p.summary.accuracy;
          print_summary(sweep_param + "=" + std::to_string(p.value) + " " + col,
                        p.summary);
          failed |= !p.summary.failed_repeats.empty();
        }
        write_file(fs::path(cfg.output_dir) / (sweep_param + "_sweep.tsv"),
                   emit_plot_data(series));
        return failed ? 2 : 0;
      }
      throw ConfigError("sweep --type must be lambda or cmnist");
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const RangeError& e) {
    std::cerr << "range error: " << e.what() << "\n";
    return 1;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
