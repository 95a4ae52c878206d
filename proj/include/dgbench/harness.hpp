#pragma once

// Experiment orchestration: config parsing, run execution with resumable
// append-only record storage, lambda and colored-digit parameter sweeps, and
// table/plot-data emission.

#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "dgbench/selection.hpp"
#include "dgbench/shifts.hpp"

namespace dgbench {

using json = nlohmann::ordered_json;

struct CmnistParams {
  double eta = 0.25, beta = 0.15, delta = 0.1;
  int n_train = 2000, n_test = 1000;
  int side = 14;
  int pool = 0;  // 0: sized automatically from n_train/n_test
  double p_test = 0.9;
};

struct ExperimentConfig {
  // exactly one suite source
  std::optional<SyntheticSpec> synthetic;
  std::string suite_dir;
  std::optional<CmnistParams> cmnist;

  ShiftKind shift = ShiftKind::Base;
  double shift_beta = 0.15, shift_delta = 0.1;
  double shift_sigma = 0.5;
  int shift_feature_id = 0;
  std::map<std::string, std::pair<double, double>> shift_mu;  // env -> (mu1, mu0)
  bool standardize = true;

  std::vector<Algorithm> algorithms = {Algorithm::ERM};
  SearchConfig search;
  std::string output_dir = "out";

  json snapshot;  // normalized config with defaults filled in
};

ExperimentConfig parse_config_json(const json& j);
ExperimentConfig parse_config(const std::string& path);

// stable 64-bit content hash of the canonical config snapshot
std::uint64_t config_hash(const json& snapshot);
std::string run_key(const ExperimentConfig& cfg, const std::string& cell);

json record_to_json(const RunRecord& rec);
RunRecord record_from_json(const json& j);

// Append-only line-delimited record store. Appends flush per record; loading
// tolerates a truncated trailing line (crash during append).
class RunStore {
 public:
  explicit RunStore(const std::string& path);
  void append(const json& entry);
  // entries with "key" == key, in append order
  std::vector<json> by_key(const std::string& key) const;
  bool cell_complete(const std::string& key) const;  // has a summary entry
  const std::vector<json>& entries() const { return entries_; }

 private:
  std::string path_;
  std::vector<json> entries_;
};

// suite construction honoring the config's source and shift
ShiftPlan make_shift_plan(const ExperimentConfig& cfg,
                          const EnvironmentSuite& suite);
EnvironmentSuite build_suite(const ExperimentConfig& cfg, const SeedBundle& seeds);
SuiteFactory make_suite_factory(const ExperimentConfig& cfg);

struct CellResult {
  std::string cell;  // e.g. algorithm name or "IRM@lambda=10"
  TrialSummary summary;
  bool resumed = false;
};

// one random_search per algorithm; completed cells are loaded from the store
// instead of re-run
std::vector<CellResult> run_experiment(const ExperimentConfig& cfg,
                                       RunStore& store);

// penalized methods at each pinned lambda, search over the rest
std::vector<CellResult> sweep_lambda(const ExperimentConfig& cfg,
                                     const std::vector<double>& grid,
                                     RunStore& store);

enum class CmnistParam { Eta, Beta, Delta };
CmnistParam cmnist_param_from_name(const std::string& s);

struct CmnistPoint {
  double value = 0.0;
  SelectionKind selection = SelectionKind::TrainingDomains;
  std::string algorithm;
  TrialSummary summary;
};

// varies one generation parameter over the grid with the others at baseline,
// under each given selection strategy
std::vector<CmnistPoint> sweep_cmnist(const ExperimentConfig& cfg,
                                      CmnistParam param,
                                      const std::vector<double>& grid,
                                      const std::vector<SelectionKind>& strategies,
                                      RunStore& store);

struct TableRow {
  std::string setting;
  std::map<std::string, Aggregate> cells;  // method -> aggregate
};

// columns in published order; the best non-oracle mean per row is starred
std::string emit_table(const std::vector<TableRow>& rows, bool with_unaug);
// columnar series: x, then mean/std per method, sorted by x
std::string emit_plot_data(
    const std::map<double, std::map<std::string, Aggregate>>& series);

}  // namespace dgbench
