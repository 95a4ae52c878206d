#include "dgbench/selection.hpp"

#include <chrono>
#include <cmath>

#include "dgbench/errors.hpp"

namespace dgbench {

std::string selection_kind_name(SelectionKind k) {
  switch (k) {
    case SelectionKind::TrainingDomains: return "training_domains";
    case SelectionKind::ValidationDomain: return "validation_domain";
    case SelectionKind::TestDomain: return "test_domain";
  }
  return "?";
}

SelectionKind selection_kind_from_name(const std::string& s) {
  for (SelectionKind k : {SelectionKind::TrainingDomains,
                          SelectionKind::ValidationDomain,
                          SelectionKind::TestDomain})
    if (selection_kind_name(k) == s) return k;
  throw ConfigError("unknown selection strategy '" + s +
                    "'; valid: training_domains validation_domain test_domain");
}

std::string selection_metric_name(SelectionMetric m) {
  switch (m) {
    case SelectionMetric::Auroc: return "auroc";
    case SelectionMetric::MeanAuroc: return "mean_auroc";
    case SelectionMetric::Accuracy: return "accuracy";
  }
  return "?";
}

SelectionMetric selection_metric_from_name(const std::string& s) {
  for (SelectionMetric m : {SelectionMetric::Auroc, SelectionMetric::MeanAuroc,
                            SelectionMetric::Accuracy})
    if (selection_metric_name(m) == s) return m;
  throw ConfigError("unknown selection metric '" + s +
                    "'; valid: auroc mean_auroc accuracy");
}

namespace {

std::vector<Batch> selection_batches(const EnvironmentSuite& suite,
                                     const SelectionStrategy& strategy) {
  std::vector<Batch> batches;
  switch (strategy.kind) {
    case SelectionKind::TrainingDomains: {
      for (const auto& name : suite.names_by_role(Role::Train)) {
        Batch b = full_split_batch(suite, name, SplitKind::Val);
        if (b.labels.rows() > 0) batches.push_back(std::move(b));
      }
      if (batches.empty())
        throw ConfigError("training_domains selection: no validation splits");
      break;
    }
    case SelectionKind::ValidationDomain: {
      auto names = suite.names_by_role(Role::Validation);
      if (names.empty())
        throw ConfigError(
            "validation_domain selection requires a validation environment");
      for (SplitKind k : {SplitKind::Train, SplitKind::Val, SplitKind::Test}) {
        Batch b = full_split_batch(suite, names[0], k);
        if (b.labels.rows() > 0) batches.push_back(std::move(b));
      }
      break;
    }
    case SelectionKind::TestDomain: {
      Batch b = full_split_batch(suite, suite.test_env().name, SplitKind::Val);
      if (b.labels.rows() == 0)
        throw ConfigError("test_domain selection: test env has no val split");
      batches.push_back(std::move(b));
      break;
    }
  }
  return batches;
}

ScoredSet pooled_set(const PredictorModel& model,
                     const std::vector<Batch>& batches, int label) {
  long n = 0;
  for (const auto& b : batches) n += b.labels.rows();
  ScoredSet s;
  s.scores.resize(n);
  s.labels.resize(n);
  s.group.resize(n);
  long at = 0;
  for (const auto& b : batches) {
    Eigen::MatrixXd p = predict_proba(model, b);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      s.scores[at] = p(i, label);
      s.labels[at] = b.labels(i, label) >= 0.5 ? 1 : 0;
      s.group[at] = b.group.size() > i ? b.group[i] : 0;
      ++at;
    }
  }
  return s;
}

}  // namespace

ScoredSet selection_set(const PredictorModel& model,
                        const EnvironmentSuite& suite,
                        const SelectionStrategy& strategy) {
  return pooled_set(model, selection_batches(suite, strategy), 0);
}

double selection_score(const PredictorModel& model,
                       const EnvironmentSuite& suite,
                       const SelectionStrategy& strategy) {
  auto batches = selection_batches(suite, strategy);
  switch (strategy.metric) {
    case SelectionMetric::Auroc:
      return auroc(pooled_set(model, batches, 0));
    case SelectionMetric::MeanAuroc: {
      std::vector<ScoredSet> per_label;
      for (int l = 0; l < suite.schema.n_labels; ++l)
        per_label.push_back(pooled_set(model, batches, l));
      return mean_auroc_multilabel(per_label);
    }
    case SelectionMetric::Accuracy:
      return accuracy(pooled_set(model, batches, 0));
  }
  throw ConfigError("bad selection metric");
}

HParams sample_hparams(Algorithm algo, long steps, std::mt19937_64& rng) {
  auto log_uniform = [&](double lo, double hi) {
    std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
    return std::exp(u(rng));
  };
  HParams hp;
  hp.lr = log_uniform(1e-5, 1e-2);
  switch (algo) {
    case Algorithm::IRM:
    case Algorithm::VREx:
    case Algorithm::RVP:
    case Algorithm::IGA:
    case Algorithm::CORAL: {
      hp.lambda = log_uniform(1e-1, 1e4);
      std::uniform_int_distribution<long> a(0, std::max(0L, 3 * steps / 4));
      hp.anneal_step = a(rng);
      break;
    }
    case Algorithm::GroupDRO:
      hp.dro_eta = log_uniform(1e-3, 1e-1);
      break;
    case Algorithm::MLDG:
      hp.mldg_alpha = log_uniform(1e-3, 1e-1);
      break;
    default:
      break;
  }
  return hp;
}

TestMetrics final_evaluation(const PredictorModel& model,
                             const EnvironmentSuite& suite,
                             const SelectionStrategy& strategy,
                             bool threshold_on_test) {
  TestMetrics out;
  if (!threshold_on_test) {
    try {
      out.threshold = max_f1_threshold(selection_set(model, suite, strategy));
    } catch (const MetricError&) {
      out.threshold = 0.5;
    }
  }

  if (suite.audit) suite.audit->finalized = true;
  Batch test = full_split_batch(suite, suite.test_env().name, SplitKind::Test);
  ScoredSet s = pooled_set(model, {test}, 0);
  if (threshold_on_test) out.threshold = max_f1_threshold(s);
  out.auroc = auroc(s);
  out.accuracy = accuracy(s);
  if (s.group.size() > 0 && s.group.minCoeff() != s.group.maxCoeff())
    out.fairness = fairness_report(s, out.threshold);
  return out;
}

RunRecord run_trial(const EnvironmentSuite& suite, const SearchConfig& cfg,
                    const HParams& hp, int repeat, int iter,
                    PredictorModel* model_out) {
  auto t0 = std::chrono::steady_clock::now();

  TrainConfig tc;
  tc.objective.algo = cfg.algo;
  tc.objective.lambda = hp.lambda;
  tc.objective.anneal_step = hp.anneal_step;
  tc.objective.dro_eta = hp.dro_eta;
  tc.objective.mldg_alpha = hp.mldg_alpha;
  tc.objective.mldg_gamma = cfg.mldg_gamma;
  tc.objective.mldg_first_order = cfg.mldg_first_order;
  tc.adam.lr = hp.lr;
  tc.steps = cfg.steps;
  tc.batch_size = cfg.batch_size;
  tc.checkpoint_every = cfg.checkpoint_every;

  std::vector<TrainSource> sources;
  if (cfg.algo == Algorithm::OracleID) {
    const auto& test = suite.test_env();
    if (test.train_idx.empty())
      throw ConfigError("oracle training: test environment has no train split");
    sources.push_back({test.name, SplitKind::Train});
  } else if (cfg.algo == Algorithm::OracleMerged) {
    for (const auto& env : suite.environments)
      if (!env.train_idx.empty()) sources.push_back({env.name, SplitKind::Train});
  } else {
    sources = default_train_sources(suite);
  }

  std::uint64_t trial_seed =
      cfg.seeds.model_seed + 7919ull * std::uint64_t(repeat) +
      131ull * std::uint64_t(iter);
  auto model = build_model(cfg.model, suite.schema, trial_seed);
  std::mt19937_64 rng(trial_seed ^ 0xabcd1234ull);

  CheckpointScore score = [&](const PredictorModel& m) {
    return selection_score(m, suite, cfg.strategy);
  };
  auto trace = train_model(model, suite, sources, tc, rng, score);

  RunRecord rec;
  rec.algorithm = algorithm_name(cfg.algo);
  rec.hparams = hp;
  rec.seeds = cfg.seeds;
  rec.repeat = repeat;
  rec.iter = iter;
  rec.selection = selection_kind_name(cfg.strategy.kind);
  rec.unrealistic_selection = cfg.strategy.kind == SelectionKind::TestDomain;
  rec.checkpoints = trace.checkpoints;
  rec.best_selection_score = trace.best_step >= 0 ? trace.best_score : 0.0;
  rec.diverged = trace.diverged;
  rec.status = trace.diverged ? "diverged" : "ok";
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  if (model_out) *model_out = std::move(model);
  return rec;
}

RunRecord train_oracle(Algorithm kind, const EnvironmentSuite& suite,
                       const SearchConfig& cfg) {
  if (!is_oracle(kind)) throw ConfigError("train_oracle: not an oracle id");
  SearchConfig oc = cfg;
  oc.algo = kind;
  PredictorModel model;
  HParams hp;
  hp.lr = 1e-3;
  RunRecord rec = run_trial(suite, oc, hp, 0, 0, &model);
  if (!rec.diverged) rec.test = final_evaluation(model, suite, oc.strategy);
  return rec;
}

SeedBundle derive_repeat_seeds(const SeedBundle& base, int repeat) {
  const std::uint64_t k = 0x9e3779b97f4a7c15ull * std::uint64_t(repeat + 1);
  return {base.data_seed + k, base.model_seed + 3 * k, base.search_seed + 7 * k};
}

TrialSummary random_search(const SuiteFactory& factory, const SearchConfig& cfg,
                           const RecordSink& sink) {
  TrialSummary summary;
  std::vector<double> aurocs, accs;

  for (int r = 0; r < cfg.repeats; ++r) {
    SeedBundle seeds_r = derive_repeat_seeds(cfg.seeds, r);
    EnvironmentSuite suite = factory(seeds_r);
    std::mt19937_64 srng(seeds_r.search_seed);

    std::vector<RunRecord> records;
    int best = -1;
    PredictorModel best_model;
    for (int i = 0; i < cfg.n_iters; ++i) {
      HParams hp = sample_hparams(cfg.algo, cfg.steps, srng);
      if (cfg.fixed_lambda) hp.lambda = *cfg.fixed_lambda;
      SearchConfig rc = cfg;
      rc.seeds = seeds_r;
      PredictorModel model;
      RunRecord rec = run_trial(suite, rc, hp, r, i, &model);
      if (!rec.diverged &&
          (best < 0 || rec.best_selection_score >
                           records[size_t(best)].best_selection_score)) {
        best = int(records.size());
        best_model = std::move(model);
      }
      records.push_back(std::move(rec));
    }

    if (best < 0) {
      summary.failed_repeats.push_back(r);
      for (auto& rec : records) {
        rec.status = "diverged";
        if (sink) sink(rec);
      }
      continue;
    }

    records[size_t(best)].test =
        final_evaluation(best_model, suite, cfg.strategy);
    records[size_t(best)].status = "best";
    for (const auto& rec : records)
      if (sink) sink(rec);
    aurocs.push_back(records[size_t(best)].test.auroc);
    accs.push_back(records[size_t(best)].test.accuracy);
    summary.best_per_repeat.push_back(records[size_t(best)]);
  }

  if (!summary.failed_repeats.empty())
    summary.warning = std::to_string(summary.failed_repeats.size()) +
                      " repeat(s) had no surviving run";
  if (summary.best_per_repeat.empty())
    throw DataError("random_search: every repeat failed");
  summary.auroc = aggregate_runs(aurocs);
  summary.accuracy = aggregate_runs(accs);
  return summary;
}

}  // namespace dgbench
