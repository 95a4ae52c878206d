#pragma once

// Model selection: scoring strategies (pooled training-domain validation,
// validation environment, watermarked test-domain), oracle baselines, and the
// random-search protocol with per-repeat resplitting.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dgbench/metrics.hpp"
#include "dgbench/objectives.hpp"

namespace dgbench {

enum class SelectionKind { TrainingDomains, ValidationDomain, TestDomain };
enum class SelectionMetric { Auroc, MeanAuroc, Accuracy };

std::string selection_kind_name(SelectionKind k);
SelectionKind selection_kind_from_name(const std::string& s);
std::string selection_metric_name(SelectionMetric m);
SelectionMetric selection_metric_from_name(const std::string& s);

struct SelectionStrategy {
  SelectionKind kind = SelectionKind::TrainingDomains;
  SelectionMetric metric = SelectionMetric::Auroc;
};

// model scores over the strategy's selection data
ScoredSet selection_set(const PredictorModel& model,
                        const EnvironmentSuite& suite,
                        const SelectionStrategy& strategy);
double selection_score(const PredictorModel& model,
                       const EnvironmentSuite& suite,
                       const SelectionStrategy& strategy);

struct HParams {
  double lr = 1e-3;
  double lambda = 1.0;
  double dro_eta = 1e-2;
  double mldg_alpha = 1e-2;
  long anneal_step = 0;
};

// documented search ranges: lr log-uniform [1e-5, 1e-2]; lambda log-uniform
// [1e-1, 1e4]; dro_eta and mldg_alpha log-uniform [1e-3, 1e-1]; anneal step
// uniform over [0, 0.75 * steps]
HParams sample_hparams(Algorithm algo, long steps, std::mt19937_64& rng);

struct TestMetrics {
  double auroc = 0.0;
  double accuracy = 0.0;
  double threshold = 0.5;  // max-F1 threshold from the selection split
  std::optional<FairnessReport> fairness;
};

struct RunRecord {
  std::string algorithm;
  HParams hparams;
  SeedBundle seeds;
  int repeat = 0;
  int iter = 0;
  std::string selection;  // strategy kind name
  bool unrealistic_selection = false;
  std::vector<std::pair<long, double>> checkpoints;
  double best_selection_score = 0.0;
  TestMetrics test;
  bool diverged = false;
  std::string status = "ok";
  double wall_seconds = 0.0;
};

struct TrialSummary {
  std::vector<RunRecord> best_per_repeat;
  std::vector<int> failed_repeats;
  Aggregate auroc, accuracy;
  std::string warning;
};

struct SearchConfig {
  Algorithm algo = Algorithm::ERM;
  ModelSpec model;
  SelectionStrategy strategy;
  SeedBundle seeds;
  long steps = 300;
  int batch_size = 64;
  long checkpoint_every = 50;
  int n_iters = 10;
  int repeats = 5;
  double mldg_gamma = 1.0;
  bool mldg_first_order = true;
  std::optional<double> fixed_lambda;  // pin lambda, search the rest
};

// Finalizes the suite audit, evaluates on the test environment's test split.
// The F1 threshold comes from the selection split unless threshold_on_test.
TestMetrics final_evaluation(const PredictorModel& model,
                             const EnvironmentSuite& suite,
                             const SelectionStrategy& strategy,
                             bool threshold_on_test = false);

// single ERM run on oracle data, evaluated like any other run
RunRecord train_oracle(Algorithm kind, const EnvironmentSuite& suite,
                       const SearchConfig& cfg);

// one sampled-config run inside a repeat; exposed for the harness
RunRecord run_trial(const EnvironmentSuite& suite, const SearchConfig& cfg,
                    const HParams& hp, int repeat, int iter,
                    PredictorModel* model_out = nullptr);

using SuiteFactory = std::function<EnvironmentSuite(const SeedBundle&)>;
using RecordSink = std::function<void(const RunRecord&)>;

// fresh suite (data splits) and model seeds per repeat; best of n_iters by
// selection score; summary aggregates the per-repeat bests
TrialSummary random_search(const SuiteFactory& factory, const SearchConfig& cfg,
                           const RecordSink& sink = nullptr);

SeedBundle derive_repeat_seeds(const SeedBundle& base, int repeat);

}  // namespace dgbench
