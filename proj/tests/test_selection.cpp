#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dgbench/errors.hpp"
#include "dgbench/selection.hpp"

using namespace dgbench;

namespace {

EnvironmentSuite small_suite(const SeedBundle& seeds, bool with_val = true,
                             int n = 240) {
  SyntheticSpec spec;
  spec.examples_per_env = n;
  spec.with_validation_env = with_val;
  spec.static_cont_channels = 4;
  spec.invariant_dim = 2;
  return generate_synthetic_suite(spec, seeds);
}

SearchConfig quick_config(Algorithm algo = Algorithm::ERM) {
  SearchConfig cfg;
  cfg.algo = algo;
  cfg.model.hidden_sizes = {4};
  cfg.model.activation = Activation::Tanh;
  cfg.steps = 30;
  cfg.batch_size = 32;
  cfg.checkpoint_every = 10;
  cfg.n_iters = 3;
  cfg.repeats = 2;
  cfg.seeds = {101, 102, 103};
  return cfg;
}

}  // namespace

TEST_CASE("strategy and metric names round trip") {
  for (auto k : {SelectionKind::TrainingDomains, SelectionKind::ValidationDomain,
                 SelectionKind::TestDomain})
    CHECK(selection_kind_from_name(selection_kind_name(k)) == k);
  CHECK_THROWS_AS(selection_kind_from_name("oracle"), ConfigError);
  for (auto m : {SelectionMetric::Auroc, SelectionMetric::MeanAuroc,
                 SelectionMetric::Accuracy})
    CHECK(selection_metric_from_name(selection_metric_name(m)) == m);
}

TEST_CASE("selection score pools the right data") {
  auto suite = small_suite({1, 2, 3});
  ModelSpec ms;
  ms.hidden_sizes = {4};
  auto model = build_model(ms, suite.schema, 5);

  SelectionStrategy td;
  double s = selection_score(model, suite, td);
  // oracle: pool the train-env val splits by hand
  std::vector<Batch> batches;
  for (const auto& name : suite.names_by_role(Role::Train))
    batches.push_back(full_split_batch(suite, name, SplitKind::Val));
  long n = 0;
  for (const auto& b : batches) n += b.labels.rows();
  ScoredSet manual;
  manual.scores.resize(n);
  manual.labels.resize(n);
  long at = 0;
  for (const auto& b : batches) {
    Eigen::MatrixXd p = predict_proba(model, b);
    for (Eigen::Index i = 0; i < p.rows(); ++i, ++at) {
      manual.scores[at] = p(i, 0);
      manual.labels[at] = b.labels(i, 0) >= 0.5 ? 1 : 0;
    }
  }
  CHECK(s == doctest::Approx(auroc(manual)).epsilon(1e-14));

  // validation strategy needs a validation environment
  auto no_val = small_suite({1, 2, 3}, false);
  SelectionStrategy vd{SelectionKind::ValidationDomain, SelectionMetric::Auroc};
  CHECK_THROWS_AS(selection_score(model, no_val, vd), ConfigError);
  CHECK_NOTHROW(selection_score(model, suite, vd));
}

TEST_CASE("hyperparameter sampling is deterministic and in range") {
  std::mt19937_64 a(42), b(42);
  for (Algorithm algo : {Algorithm::ERM, Algorithm::IRM, Algorithm::GroupDRO,
                         Algorithm::MLDG}) {
    HParams ha = sample_hparams(algo, 200, a);
    HParams hb = sample_hparams(algo, 200, b);
    CHECK(ha.lr == hb.lr);
    CHECK(ha.lambda == hb.lambda);
    CHECK(ha.anneal_step == hb.anneal_step);
    CHECK(ha.lr >= 1e-5);
    CHECK(ha.lr <= 1e-2);
  }
  std::mt19937_64 c(1);
  for (int i = 0; i < 50; ++i) {
    HParams hp = sample_hparams(Algorithm::VREx, 200, c);
    CHECK(hp.lambda >= 1e-1);
    CHECK(hp.lambda <= 1e4);
    CHECK(hp.anneal_step >= 0);
    CHECK(hp.anneal_step <= 150);
  }
}

TEST_CASE("random search selects the best run and aggregates repeats") {
  auto factory = [](const SeedBundle& s) { return small_suite(s); };
  auto cfg = quick_config();

  std::vector<RunRecord> records;
  auto summary = random_search(factory, cfg,
                               [&](const RunRecord& r) { records.push_back(r); });

  REQUIRE(summary.best_per_repeat.size() == 2);
  CHECK(summary.failed_repeats.empty());
  CHECK(records.size() == 6);
  CHECK(summary.auroc.n == 2);

  for (int r = 0; r < 2; ++r) {
    double best = -1;
    int n_best = 0;
    for (const auto& rec : records) {
      if (rec.repeat != r) continue;
      best = std::max(best, rec.best_selection_score);
      n_best += rec.status == "best";
    }
    CHECK(n_best == 1);
    CHECK(summary.best_per_repeat[size_t(r)].best_selection_score ==
          doctest::Approx(best));
    // only the winning run carries final test metrics
    for (const auto& rec : records)
      if (rec.repeat == r && rec.status != "best") CHECK(rec.test.auroc == 0.0);
  }

  // determinism: identical invocation gives identical summary
  auto summary2 = random_search(factory, cfg);
  CHECK(summary2.auroc.mean == doctest::Approx(summary.auroc.mean));
  CHECK(summary2.best_per_repeat[0].hparams.lr ==
        summary.best_per_repeat[0].hparams.lr);

  // n_iters = repeats = 1 degenerates to a single run
  auto cfg1 = quick_config();
  cfg1.n_iters = 1;
  cfg1.repeats = 1;
  std::vector<RunRecord> one;
  auto s1 = random_search(factory, cfg1,
                          [&](const RunRecord& r) { one.push_back(r); });
  REQUIRE(one.size() == 1);
  CHECK(s1.best_per_repeat[0].best_selection_score ==
        doctest::Approx(one[0].best_selection_score));
  CHECK(s1.auroc.stdev == 0.0);
}

TEST_CASE("no test-environment reads before final evaluation") {
  auto suite = small_suite({7, 8, 9});
  auto cfg = quick_config();
  cfg.seeds = {7, 8, 9};
  PredictorModel model;
  HParams hp;
  hp.lr = 5e-3;
  auto rec = run_trial(suite, cfg, hp, 0, 0, &model);
  CHECK(!rec.diverged);
  const std::string test_name = suite.test_env().name;
  CHECK(suite.audit->reads_before_final(test_name) == 0);

  auto metrics = final_evaluation(model, suite, cfg.strategy);
  CHECK(suite.audit->finalized);
  CHECK(suite.audit->reads_before_final(test_name) == 0);
  CHECK(metrics.auroc > 0.0);
  CHECK(metrics.auroc <= 1.0);
  bool post_final_test_read = false;
  for (const auto& ev : suite.audit->events)
    post_final_test_read |= (ev.env == test_name && ev.after_finalize);
  CHECK(post_final_test_read);
}

TEST_CASE("oracle runs and isolation") {
  auto suite = small_suite({31, 32, 33});
  auto cfg = quick_config();
  auto rec = train_oracle(Algorithm::OracleID, suite, cfg);
  CHECK(rec.algorithm == "OracleID");
  CHECK(!rec.diverged);
  CHECK(rec.test.auroc > 0.0);

  // gradient updates read only the test env's train split; train-env reads
  // are selection-only (val splits)
  for (const auto& ev : suite.audit->events) {
    if (ev.split != SplitKind::Train) continue;
    CHECK(ev.env == suite.test_env().name);
  }

  auto suite2 = small_suite({31, 32, 33});
  auto rec2 = train_oracle(Algorithm::OracleMerged, suite2, cfg);
  CHECK(rec2.test.auroc > 0.0);
  CHECK_THROWS_AS(train_oracle(Algorithm::ERM, suite2, cfg), ConfigError);
}

TEST_CASE("test-domain selection is watermarked") {
  auto factory = [](const SeedBundle& s) { return small_suite(s); };
  auto cfg = quick_config();
  cfg.strategy.kind = SelectionKind::TestDomain;
  cfg.n_iters = 1;
  cfg.repeats = 1;
  auto summary = random_search(factory, cfg);
  CHECK(summary.best_per_repeat[0].unrealistic_selection);
  CHECK(summary.best_per_repeat[0].selection == "test_domain");
}
