#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "dgbench/errors.hpp"
#include "dgbench/shifts.hpp"

using namespace dgbench;

namespace {

EnvironmentSuite small_suite(int n = 300, std::uint64_t seed = 77) {
  SyntheticSpec spec;
  spec.examples_per_env = n;
  return generate_synthetic_suite(spec, {seed, seed + 1, seed + 2});
}

}  // namespace

TEST_CASE("beta-delta expansion") {
  auto v = expand_beta_delta(0.15, 0.1, 3);
  REQUIRE(v.size() == 3);
  CHECK(v[0] == doctest::Approx(0.05));
  CHECK(v[1] == doctest::Approx(0.15));
  CHECK(v[2] == doctest::Approx(0.25));
  CHECK(expand_beta_delta(0.5, 0.0, 1)[0] == 0.5);
  CHECK_THROWS_AS(expand_beta_delta(0.15, 0.1, 2), ConfigError);
}

TEST_CASE("corrlabel plan defaults and flip rates") {
  auto suite = small_suite();
  auto plan = make_corrlabel_plan(suite, 0.15, 0.1);
  CHECK(plan.per_env.at("val").p == 0.5);
  CHECK(plan.per_env.at("test").p == 0.9);
  CHECK(plan.per_env.at("env1").p == doctest::Approx(0.05));
  CHECK(plan.per_env.at("env3").p == doctest::Approx(0.25));

  // empirical flip rate within 3-sigma binomial bounds at n = 25k
  std::mt19937_64 rng(11);
  Environment big;
  big.name = "big";
  const int n = 25000;
  big.static_cont = Eigen::MatrixXd::Zero(n, 1);
  big.labels = Eigen::MatrixXd::Zero(n, 1);
  for (int i = 0; i < n; ++i) big.labels(i, 0) = (i % 2 == 0) ? 1.0 : 0.0;
  big.group = Eigen::VectorXi::Zero(n);
  for (double p : {0.05, 0.25, 0.5, 0.9}) {
    EnvShiftStats st;
    Environment shifted = corrupt_label_feature(big, p, rng, &st);
    CHECK(shifted.static_cont.cols() == 2);
    double sigma = std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(st.flip_rate - p) <= 3 * std::max(sigma, 1e-9));
    // appended feature is binary
    for (int i = 0; i < 50; ++i) {
      double v = shifted.static_cont(i, 1);
      CHECK((v == 0.0 || v == 1.0));
    }
  }
  EnvShiftStats st;
  CHECK_THROWS_AS(corrupt_label_feature(big, 1.5, rng, &st), RangeError);
}

TEST_CASE("correlated noise class-conditional means") {
  std::mt19937_64 rng(13);
  const int n = 25000;
  Environment big;
  big.name = "big";
  big.static_cont = Eigen::MatrixXd::Zero(n, 2);
  big.labels = Eigen::MatrixXd::Zero(n, 1);
  for (int i = 0; i < n; ++i) big.labels(i, 0) = (i % 2 == 0) ? 1.0 : 0.0;
  big.group = Eigen::VectorXi::Zero(n);
  FeatureSchema schema;
  schema.static_cont = 2;

  const double sigma = 0.5;
  for (double lambda : {-1.0, 0.0, 0.25}) {
    EnvShiftStats st;
    correlated_noise(big, 0, lambda, sigma, schema, rng, &st);
    double tol = 3 * sigma / std::sqrt(n / 2.0);
    CHECK(std::abs(st.noise_mean_pos - lambda) <= tol);
    CHECK(std::abs(st.noise_mean_neg + lambda) <= tol);
  }
  EnvShiftStats st;
  CHECK_THROWS_AS(correlated_noise(big, 5, 0.1, sigma, schema, rng, &st),
                  SchemaError);
}

TEST_CASE("subsample probability formula and boundaries") {
  // moving prevalence down (tau > mu) drops positives
  CHECK(subsample_probability(1, 0.3, 0.5) ==
        doctest::Approx(1.0 - (0.5 / 0.5) * (0.3 / 0.7)));
  CHECK(subsample_probability(0, 0.3, 0.5) == 0.0);
  // moving prevalence up (tau < mu) drops negatives
  CHECK(subsample_probability(0, 0.7, 0.5) ==
        doctest::Approx(1.0 - (0.5 / 0.5) * (0.3 / 0.7)));
  CHECK(subsample_probability(1, 0.7, 0.5) == 0.0);
  CHECK(subsample_probability(1, 0.5, 0.5) == 0.0);
  CHECK_THROWS_AS(subsample_probability(1, 1.0, 0.5), RangeError);
  CHECK_THROWS_AS(subsample_probability(1, 0.5, 0.0), RangeError);
}

TEST_CASE("subsampling reaches the target prevalence") {
  std::mt19937_64 rng(19);
  std::bernoulli_distribution bd;
  for (double tau : {0.2, 0.5, 0.8}) {
    for (double mu : {0.1, 0.45, 0.9}) {
      const int n = 40000;
      long kept = 0, kept_pos = 0;
      for (int i = 0; i < n; ++i) {
        int y = std::bernoulli_distribution(tau)(rng) ? 1 : 0;
        double drop = subsample_probability(y, mu, tau);
        if (drop > 0 && std::bernoulli_distribution(drop)(rng)) continue;
        ++kept;
        kept_pos += y;
      }
      double prev = double(kept_pos) / double(kept);
      CHECK(std::abs(prev - mu) < 0.015);
    }
  }
}

TEST_CASE("biased subsample per-group targets and empty-cell error") {
  std::mt19937_64 rng(23);
  const int n = 30000;
  Environment e;
  e.name = "e";
  e.static_cont = Eigen::MatrixXd::Zero(n, 1);
  e.labels = Eigen::MatrixXd::Zero(n, 1);
  e.group = Eigen::VectorXi::Zero(n);
  std::bernoulli_distribution gb(0.5), yb(0.5);
  for (int i = 0; i < n; ++i) {
    e.group[i] = gb(rng) ? 1 : 0;
    e.labels(i, 0) = yb(rng) ? 1.0 : 0.0;
  }
  EnvShiftStats st;
  Environment out = biased_subsample(e, 0.8, 0.2, rng, &st);
  CHECK(std::abs(st.prevalence_g1 - 0.8) < 0.02);
  CHECK(std::abs(st.prevalence_g0 - 0.2) < 0.02);
  CHECK(st.retained_count == out.size());
  CHECK(out.size() < n);

  Environment empty_cell = e;
  for (int i = 0; i < n; ++i)
    if (empty_cell.group[i] == 1) empty_cell.labels(i, 0) = 1.0;
  CHECK_THROWS_AS(biased_subsample(empty_cell, 0.5, 0.5, rng, &st), DataError);
}

TEST_CASE("colored digits generation") {
  auto imgs = make_synthetic_digits(3000, 14, 1234);
  REQUIRE(imgs.images.size() == 3000);
  CHECK(imgs.side == 14);
  for (int i = 0; i < 20; ++i) {
    CHECK(imgs.images[i].minCoeff() >= 0.0);
    CHECK(imgs.images[i].maxCoeff() <= 1.0);
    CHECK(imgs.digits[i] >= 0);
    CHECK(imgs.digits[i] <= 9);
  }

  auto suite = generate_colored_mnist(0.25, 0.15, 0.1, imgs, {51, 52, 53},
                                      1000, 800);
  CHECK(suite.names_by_role(Role::Train).size() == 2);
  CHECK(suite.env("env1").size() == 1000);
  CHECK(suite.test_env().size() == 800);
  CHECK(suite.schema.static_cont == 2 * 14 * 14);

  // two-channel encoding: exactly one channel is live per pixel pair
  const auto& x = suite.env("env1").static_cont;
  const int d = 14 * 14;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < d; ++j)
      CHECK(x(i, j) * x(i, j + d) == 0.0);

  // deterministic in seeds
  auto again = generate_colored_mnist(0.25, 0.15, 0.1, imgs, {51, 52, 53},
                                      1000, 800);
  CHECK(again.env("env1").labels == suite.env("env1").labels);
  CHECK(again.env("env1").static_cont == suite.env("env1").static_cont);

  CHECK_THROWS_AS(generate_colored_mnist(0.25, 0.15, 0.1, imgs, {1, 2, 3},
                                         5000, 800),
                  DataError);
  CHECK_THROWS_AS(generate_colored_mnist(1.2, 0.15, 0.1, imgs, {1, 2, 3},
                                         100, 100),
                  RangeError);
}

TEST_CASE("colored digits carry the stated color-label correlation") {
  auto imgs = make_synthetic_digits(60000, 14, 99);
  auto suite = generate_colored_mnist(0.0, 0.15, 0.1, imgs, {61, 62, 63},
                                      20000, 10000);
  // with eta = 0 the label equals the digit class indicator, so the color
  // channel flip rate is directly observable: p1 = beta + delta/2
  const int d = 14 * 14;
  auto flip_rate = [&](const Environment& e) {
    long flips = 0, n = 0;
    for (Eigen::Index i = 0; i < e.size(); ++i) {
      // live channel: 0 if first half has mass, else 1
      double mass0 = e.static_cont.row(i).head(d).cwiseAbs().sum();
      int color = mass0 > 0 ? 0 : 1;
      int y = int(e.labels(i, 0));
      // convention: color channel index equals y when not flipped
      flips += (color != y);
      ++n;
    }
    return double(flips) / double(n);
  };
  double f1 = flip_rate(suite.env("env1"));
  double f2 = flip_rate(suite.env("env2"));
  double ft = flip_rate(suite.test_env());
  double tol = 3 * 0.5 / std::sqrt(20000.0);
  CHECK(std::abs(f1 - 0.2) <= tol);   // beta + delta/2
  CHECK(std::abs(f2 - 0.1) <= tol);   // beta - delta/2
  CHECK(std::abs(ft - 0.9) <= 3 * 0.5 / std::sqrt(10000.0));
}

TEST_CASE("apply_shift wiring") {
  auto suite = small_suite();
  std::mt19937_64 rng(3);

  auto [base, rep] = apply_shift(suite, ShiftPlan{}, rng);
  CHECK(rep.kind == ShiftKind::Base);
  CHECK(base.env("env1").static_cont == suite.env("env1").static_cont);

  auto [cl, rep2] = apply_shift(suite, make_corrlabel_plan(suite, 0.15, 0.1), rng);
  CHECK(cl.schema.static_cont == suite.schema.static_cont + 1);
  CHECK(rep2.per_env.size() == suite.environments.size());

  std::map<std::string, std::pair<double, double>> mu;
  for (const auto& e : suite.environments) mu[e.name] = {0.6, 0.4};
  auto [obs, rep3] = apply_shift(suite, make_biassamp_plan(suite, true, mu), rng);
  CHECK(obs.schema.group_visible);
  auto [unobs, rep4] = apply_shift(suite, make_biassamp_plan(suite, false, mu), rng);
  CHECK(!unobs.schema.group_visible);

  ShiftPlan missing;
  missing.kind = ShiftKind::CorrLabel;
  missing.per_env["env1"] = {};  // other envs absent
  CHECK_THROWS_AS(apply_shift(suite, missing, rng), ConfigError);

  ShiftPlan cm;
  cm.kind = ShiftKind::ColoredMNIST;
  CHECK_THROWS_AS(apply_shift(suite, cm, rng), ConfigError);
}
