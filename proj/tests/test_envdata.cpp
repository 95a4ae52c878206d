#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>
#include <set>

#include "dgbench/envdata.hpp"
#include "dgbench/errors.hpp"

using namespace dgbench;

namespace {

Environment flat_env(const std::string& name, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::bernoulli_distribution bd(0.5);
  Environment e;
  e.name = name;
  e.static_cont = Eigen::MatrixXd::NullaryExpr(n, 3, [&](Eigen::Index, Eigen::Index) {
    return nd(rng);
  });
  e.labels = Eigen::MatrixXd::NullaryExpr(n, 1, [&](Eigen::Index, Eigen::Index) {
    return bd(rng) ? 1.0 : 0.0;
  });
  e.group = Eigen::VectorXi::NullaryExpr(n, [&](Eigen::Index) {
    return bd(rng) ? 1 : 0;
  });
  return e;
}

FeatureSchema flat_schema() {
  FeatureSchema s;
  s.static_cont = 3;
  return s;
}

}  // namespace

TEST_CASE("split is a partition with rounded sizes") {
  std::mt19937_64 rng(2);
  Environment e = split_environment(flat_env("e", 101, 1), {}, rng);
  std::set<int> all;
  for (const auto* v : {&e.train_idx, &e.val_idx, &e.test_idx})
    for (int i : *v) {
      CHECK(i >= 0);
      CHECK(i < 101);
      CHECK(all.insert(i).second);  // disjoint
    }
  CHECK(all.size() == 101);
  CHECK(e.train_idx.size() == 71);  // round(0.7 * 101)
  CHECK(e.val_idx.size() == 10);

  SplitFractions bad{0.5, 0.2, 0.2};
  CHECK_THROWS_AS(split_environment(flat_env("e", 50, 1), bad, rng), ConfigError);
  CHECK_THROWS_AS(split_environment(flat_env("e", 2, 1), {}, rng), DataError);
}

TEST_CASE("suite construction validates roles") {
  auto mk = [](std::vector<std::pair<std::string, Role>> roles) {
    std::vector<Environment> envs;
    std::map<std::string, Role> rm;
    std::mt19937_64 rng(3);
    for (auto& [n, r] : roles) {
      envs.push_back(split_environment(flat_env(n, 40, 7), {}, rng));
      rm[n] = r;
    }
    return build_environment_suite(std::move(envs), std::move(rm), flat_schema());
  };
  CHECK_NOTHROW(mk({{"a", Role::Train}, {"b", Role::Train}, {"t", Role::Test}}));
  CHECK_THROWS_AS(mk({{"a", Role::Train}, {"t", Role::Test}}), ConfigError);
  CHECK_THROWS_AS(mk({{"a", Role::Train}, {"b", Role::Train}}), ConfigError);
  CHECK_THROWS_AS(mk({{"a", Role::Train}, {"b", Role::Train},
                      {"t", Role::Test}, {"t2", Role::Test}}),
                  ConfigError);
}

TEST_CASE("standardizer fits on training data only") {
  SyntheticSpec spec;
  spec.examples_per_env = 400;
  spec.nuisance_strength = 3.0;  // big env offsets so leakage would show
  auto suite = generate_synthetic_suite(spec, {21, 22, 23});
  auto std_suite = standardize_suite(suite);

  // pooled train-env train splits should be ~N(0,1) per channel
  std::vector<double> vals;
  for (const auto* env : std_suite.by_role(Role::Train))
    for (int i : env->train_idx) vals.push_back(env->static_cont(i, 0));
  double mean = 0, var = 0;
  for (double v : vals) mean += v;
  mean /= double(vals.size());
  for (double v : vals) var += (v - mean) * (v - mean);
  var /= double(vals.size());
  CHECK(std::abs(mean) < 1e-9);
  CHECK(var == doctest::Approx(1.0).epsilon(1e-6));

  // test env was shifted by the train statistics, not its own
  const auto& test = std_suite.test_env();
  CHECK(test.static_cont.rows() == suite.test_env().static_cont.rows());

  // zero-variance channel warns and uses unit scale
  auto s2 = suite;
  for (auto& env : s2.environments) env.static_cont.col(2).setConstant(4.2);
  Standardizer st = fit_standardizer(s2);
  CHECK(!st.warnings.empty());
  CHECK(st.static_scale[2] == 1.0);
}

TEST_CASE("synthetic suite structure and determinism") {
  SyntheticSpec spec;
  spec.examples_per_env = 300;
  spec.seq_len = 4;
  spec.seq_cont_channels = 2;
  auto a = generate_synthetic_suite(spec, {5, 6, 7});
  auto b = generate_synthetic_suite(spec, {5, 6, 7});
  auto c = generate_synthetic_suite(spec, {8, 6, 7});

  CHECK(a.names_by_role(Role::Train).size() == 3);
  CHECK(a.names_by_role(Role::Validation).size() == 1);
  CHECK(a.test_env().name == "test");
  CHECK(a.schema.seq_len == 4);

  CHECK(a.env("env1").static_cont == b.env("env1").static_cont);
  CHECK(a.env("env1").labels == b.env("env1").labels);
  CHECK(a.env("env1").train_idx == b.env("env1").train_idx);
  CHECK(a.env("env1").static_cont != c.env("env1").static_cont);

  // the labeling mechanism is invariant: per-env correlation between the
  // first invariant channel and the label has the same sign and similar size
  auto corr = [](const Environment& e) {
    Eigen::VectorXd x = e.static_cont.col(0);
    Eigen::VectorXd y = e.labels.col(0);
    double mx = x.mean(), my = y.mean();
    double num = ((x.array() - mx) * (y.array() - my)).sum();
    return num / std::sqrt((x.array() - mx).square().sum() *
                           (y.array() - my).square().sum());
  };
  double c1 = corr(a.env("env1"));
  double ct = corr(a.test_env());
  CHECK(c1 > 0.1);
  CHECK(ct > 0.1);
  CHECK(std::abs(c1 - ct) < 0.2);
}

TEST_CASE("subset renumbers splits") {
  std::mt19937_64 rng(9);
  Environment e = split_environment(flat_env("e", 30, 4), {}, rng);
  std::vector<int> keep = {0, 2, 4, 6, 8, 10, 12, 14, 16, 18};
  Environment s = e.subset(keep);
  CHECK(s.size() == 10);
  for (const auto* v : {&s.train_idx, &s.val_idx, &s.test_idx})
    for (int i : *v) {
      CHECK(i >= 0);
      CHECK(i < 10);
    }
  // kept rows preserve their content
  CHECK(s.static_cont.row(1) == e.static_cont.row(2));
  CHECK(s.labels(3, 0) == e.labels(6, 0));
}

TEST_CASE("suite round-trips through disk") {
  SyntheticSpec spec;
  spec.examples_per_env = 120;
  spec.seq_len = 3;
  spec.seq_cont_channels = 2;
  auto suite = generate_synthetic_suite(spec, {41, 42, 43});
  auto dir = std::filesystem::temp_directory_path() / "dgbench_suite_rt";
  std::filesystem::remove_all(dir);
  save_suite(suite, dir.string());
  auto back = load_suite(dir.string());

  CHECK(back.schema == suite.schema);
  CHECK(back.seeds == suite.seeds);
  CHECK(back.roles == suite.roles);
  for (const auto& env : suite.environments) {
    const auto& b = back.env(env.name);
    CHECK(b.static_cont == env.static_cont);
    CHECK(b.labels == env.labels);
    CHECK(b.group == env.group);
    CHECK(b.train_idx == env.train_idx);
    REQUIRE(b.seq_cont.size() == env.seq_cont.size());
    for (size_t t = 0; t < env.seq_cont.size(); ++t)
      CHECK(b.seq_cont[t] == env.seq_cont[t]);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("access audit records reads and finalization") {
  SyntheticSpec spec;
  spec.examples_per_env = 60;
  auto suite = generate_synthetic_suite(spec, {1, 2, 3});
  suite.record_access("env1", SplitKind::Train);
  suite.record_access("test", SplitKind::Val);
  CHECK(suite.audit->reads_before_final("test") == 1);
  suite.audit->finalized = true;
  suite.record_access("test", SplitKind::Test);
  CHECK(suite.audit->reads_before_final("test") == 1);
  CHECK(suite.audit->events.size() == 3);
}
