#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "dgbench/errors.hpp"
#include "dgbench/metrics.hpp"

using namespace dgbench;

namespace {

// O(n^2) oracle: fraction of (positive, negative) pairs ranked correctly,
// ties counted 1/2
double auroc_pairs(const ScoredSet& s) {
  double wins = 0;
  long pairs = 0;
  for (Eigen::Index i = 0; i < s.scores.size(); ++i) {
    if (!s.labels[i]) continue;
    for (Eigen::Index j = 0; j < s.scores.size(); ++j) {
      if (s.labels[j]) continue;
      ++pairs;
      if (s.scores[i] > s.scores[j]) wins += 1.0;
      else if (s.scores[i] == s.scores[j]) wins += 0.5;
    }
  }
  return wins / double(pairs);
}

double pearson_binary(const Eigen::VectorXi& a, const Eigen::VectorXi& b) {
  const double n = double(a.size());
  double ma = a.cast<double>().mean(), mb = b.cast<double>().mean();
  double num = 0, va = 0, vb = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  (void)n;
  return num / std::sqrt(va * vb);
}

ScoredSet make_set(std::initializer_list<double> sc, std::initializer_list<int> lb) {
  ScoredSet s;
  s.scores = Eigen::Map<const Eigen::VectorXd>(std::data(sc), long(sc.size()));
  s.labels = Eigen::Map<const Eigen::VectorXi>(std::data(lb), long(lb.size()));
  return s;
}

}  // namespace

TEST_CASE("auroc matches pair counting on random sets") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> nd(2, 200);
  std::uniform_real_distribution<double> sd(0.0, 1.0);
  std::bernoulli_distribution ld(0.4);
  std::uniform_int_distribution<int> quant(1, 12);  // force score ties sometimes
  int done = 0;
  while (done < 300) {
    int n = nd(rng);
    ScoredSet s;
    s.scores.resize(n);
    s.labels.resize(n);
    int levels = quant(rng);
    for (int i = 0; i < n; ++i) {
      s.scores[i] = std::floor(sd(rng) * levels) / levels;
      s.labels[i] = ld(rng) ? 1 : 0;
    }
    if (s.labels.maxCoeff() == 0 || s.labels.minCoeff() == 1) continue;
    CHECK(auroc(s) == doctest::Approx(auroc_pairs(s)).epsilon(1e-14));
    ++done;
  }
}

TEST_CASE("auroc known values and invariances") {
  CHECK(auroc(make_set({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1})) ==
        doctest::Approx(0.75).epsilon(1e-15));
  CHECK(auroc(make_set({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1})) == 1.0);
  CHECK(auroc(make_set({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1})) == 0.5);
  CHECK_THROWS_AS(auroc(make_set({0.1, 0.2}, {1, 1})), MetricError);

  // strictly monotone transform leaves the ranking unchanged
  ScoredSet s = make_set({0.13, 0.7, 0.7, 0.2, 0.9, 0.05}, {0, 1, 0, 1, 1, 0});
  ScoredSet t = s;
  for (Eigen::Index i = 0; i < t.scores.size(); ++i)
    t.scores[i] = 1.0 / (1.0 + std::exp(-5.0 * t.scores[i]));
  CHECK(auroc(s) == doctest::Approx(auroc(t)).epsilon(1e-14));
}

TEST_CASE("multilabel mean skips single-class labels") {
  ScoredSet a = make_set({0.1, 0.9}, {0, 1});           // AUROC 1
  ScoredSet b = make_set({0.5, 0.5, 0.5}, {0, 1, 0});   // AUROC 0.5
  ScoredSet deg = make_set({0.3, 0.6}, {1, 1});
  CHECK(mean_auroc_multilabel({a, a}) == 1.0);
  CHECK(mean_auroc_multilabel({a, b}) == doctest::Approx(0.75));
  std::vector<int> skipped;
  CHECK(mean_auroc_multilabel({a, deg, b}, &skipped) == doctest::Approx(0.75));
  REQUIRE(skipped.size() == 1);
  CHECK(skipped[0] == 1);
}

TEST_CASE("max-F1 threshold against an exhaustive scan") {
  auto f1_at = [](const ScoredSet& s, double thr) {
    ConfusionCounts c = confusion(s.scores, s.labels, thr);
    double d = 2.0 * c.tp + c.fp + c.fn;
    return d == 0 ? 0.0 : 2.0 * c.tp / d;
  };

  ScoredSet simple = make_set({0.2, 0.9}, {0, 1});
  double thr = max_f1_threshold(simple);
  CHECK(thr == doctest::Approx(0.55));
  CHECK(f1_at(simple, thr) == 1.0);

  CHECK_THROWS_AS(max_f1_threshold(make_set({0.2, 0.3}, {0, 0})), MetricError);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> sd(0.0, 1.0);
  std::bernoulli_distribution ld(0.5);
  for (int rep = 0; rep < 100; ++rep) {
    int n = 3 + int(rng() % 40);
    ScoredSet s;
    s.scores.resize(n);
    s.labels.resize(n);
    for (int i = 0; i < n; ++i) {
      s.scores[i] = std::floor(sd(rng) * 8) / 8.0;
      s.labels[i] = ld(rng) ? 1 : 0;
    }
    if (s.labels.maxCoeff() == 0) continue;
    double best = max_f1_threshold(s);
    double best_f1 = f1_at(s, best);
    // no achievable split does better, and ties go to the lowest threshold
    for (double cand = -0.1; cand <= 1.1; cand += 0.01) {
      CHECK(f1_at(s, cand) <= best_f1 + 1e-12);
      if (std::abs(f1_at(s, cand) - best_f1) < 1e-12 && cand < best)
        CHECK(confusion(s.scores, s.labels, cand).tp ==
              confusion(s.scores, s.labels, best).tp);
    }
  }
}

TEST_CASE("group confusion partitions and gap sign") {
  ScoredSet s;
  s.scores = Eigen::VectorXd(6);
  s.scores << 0.9, 0.8, 0.2, 0.9, 0.1, 0.3;
  s.labels = Eigen::VectorXi(6);
  s.labels << 1, 1, 0, 1, 1, 0;
  s.group = Eigen::VectorXi(6);
  s.group << 0, 0, 0, 1, 1, 1;

  auto c = group_confusion(s, 0.5);
  CHECK(c[0].total() == 3);
  CHECK(c[1].total() == 3);
  // group 1 misses one positive, group 0 misses none: negative TPR gap
  FairnessReport r = fairness_report(s, 0.5);
  CHECK(r.tpr_gap == doctest::Approx(0.5 - 1.0));
  CHECK(r.tnr_gap == doctest::Approx(0.0));
  CHECK(r.tpr_gap >= -1.0);
  CHECK(r.tpr_gap <= 1.0);

  // perfect group-blind classifier has zero gaps
  ScoredSet perf = s;
  perf.scores << 0.9, 0.8, 0.2, 0.9, 0.8, 0.3;
  FairnessReport rp = fairness_report(perf, 0.5);
  CHECK(rp.tpr_gap == 0.0);
  CHECK(rp.tnr_gap == 0.0);
}

TEST_CASE("mcc equals pearson correlation of the binary vectors") {
  Eigen::VectorXi pred(10), attr(10);
  // table TP=4 FP=1 FN=2 TN=3
  pred << 1, 1, 1, 1, 1, 0, 0, 0, 0, 0;
  attr << 1, 1, 1, 1, 0, 1, 1, 0, 0, 0;
  // (4*3 - 1*2) / sqrt(5*6*4*5)
  CHECK(mcc(pred, attr) == doctest::Approx(10.0 / std::sqrt(600.0)).epsilon(1e-15));
  CHECK(std::abs(mcc(pred, attr) - pearson_binary(pred, attr)) < 1e-12);
  CHECK(mcc(pred, pred) == 1.0);

  // simultaneous label swap
  Eigen::VectorXi np = Eigen::VectorXi::Ones(10) - pred;
  Eigen::VectorXi na = Eigen::VectorXi::Ones(10) - attr;
  CHECK(mcc(np, na) == doctest::Approx(mcc(pred, attr)).epsilon(1e-15));

  // degenerate marginal
  CHECK(mcc(Eigen::VectorXi::Ones(5), attr.head(5)) == 0.0);

  std::mt19937_64 rng(31);
  std::bernoulli_distribution bd(0.5);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::VectorXi a(40), b(40);
    for (int i = 0; i < 40; ++i) {
      a[i] = bd(rng);
      b[i] = bd(rng);
    }
    if (a.minCoeff() == a.maxCoeff() || b.minCoeff() == b.maxCoeff()) continue;
    CHECK(std::abs(mcc(a, b) - pearson_binary(a, b)) < 1e-12);
  }

  // independent balanced vectors: near zero over large n
  Eigen::VectorXi big_a(20000), big_b(20000);
  for (int i = 0; i < 20000; ++i) {
    big_a[i] = bd(rng);
    big_b[i] = bd(rng);
  }
  CHECK(std::abs(mcc(big_a, big_b)) < 0.03);
}

TEST_CASE("aggregation and formatting") {
  Aggregate a = aggregate_runs({0.3, 0.5});
  CHECK(a.mean == doctest::Approx(0.4));
  CHECK(a.stdev == doctest::Approx(std::sqrt(0.02)));
  CHECK(format_mean_std(a) == "0.400±0.141");
  CHECK(format_mean_std(aggregate_runs({0.4, 0.4, 0.4})) == "0.400±0.000");
  Aggregate one = aggregate_runs({0.7});
  CHECK(one.stdev == 0.0);
  CHECK_THROWS_AS(aggregate_runs({}), MetricError);
}

TEST_CASE("accuracy") {
  ScoredSet s = make_set({0.9, 0.2, 0.6, 0.4}, {1, 0, 0, 1});
  CHECK(accuracy(s) == doctest::Approx(0.5));
  CHECK(accuracy(s, 0.95) == doctest::Approx(0.5));  // all predicted negative
}
