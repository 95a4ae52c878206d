#include "dgbench/shifts.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dgbench/errors.hpp"

namespace dgbench {

std::string shift_kind_name(ShiftKind k) {
  switch (k) {
    case ShiftKind::Base: return "Base";
    case ShiftKind::CorrLabel: return "CorrLabel";
    case ShiftKind::CorrNoise: return "CorrNoise";
    case ShiftKind::BiasSampUnobs: return "BiasSampUnobs";
    case ShiftKind::BiasSampObs: return "BiasSampObs";
    case ShiftKind::ColoredMNIST: return "ColoredMNIST";
  }
  return "?";
}

ShiftKind shift_kind_from_name(const std::string& s) {
  for (ShiftKind k : {ShiftKind::Base, ShiftKind::CorrLabel, ShiftKind::CorrNoise,
                      ShiftKind::BiasSampUnobs, ShiftKind::BiasSampObs,
                      ShiftKind::ColoredMNIST})
    if (shift_kind_name(k) == s) return k;
  throw ConfigError("unknown shift kind: " + s);
}

std::vector<double> expand_beta_delta(double beta, double delta, int n) {
  if (n < 1 || n % 2 == 0)
    throw ConfigError("beta/delta expansion needs an odd number of training "
                      "environments, got " + std::to_string(n));
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i)
    out[i] = beta + delta * (double(i) - (double(n) - 1.0) / 2.0);
  return out;
}

ShiftPlan make_corrlabel_plan(const EnvironmentSuite& suite, double beta,
                              double delta, double p_val, double p_test) {
  ShiftPlan plan;
  plan.kind = ShiftKind::CorrLabel;
  auto trains = suite.names_by_role(Role::Train);
  auto ps = expand_beta_delta(beta, delta, static_cast<int>(trains.size()));
  for (size_t i = 0; i < trains.size(); ++i) {
    if (ps[i] < 0.0 || ps[i] > 1.0)
      throw RangeError("flip probability out of [0,1] for environment " + trains[i]);
    plan.per_env[trains[i]].p = ps[i];
  }
  for (const auto& name : suite.names_by_role(Role::Validation))
    plan.per_env[name].p = p_val;
  for (const auto& name : suite.names_by_role(Role::Test))
    plan.per_env[name].p = p_test;
  return plan;
}

ShiftPlan make_corrnoise_plan(const EnvironmentSuite& suite, double beta,
                              double delta, double lambda_val,
                              double lambda_test, double sigma, int feature_id) {
  if (sigma <= 0.0) throw RangeError("sigma must be positive");
  ShiftPlan plan;
  plan.kind = ShiftKind::CorrNoise;
  plan.sigma = sigma;
  plan.feature_id = feature_id;
  auto trains = suite.names_by_role(Role::Train);
  auto ls = expand_beta_delta(beta, delta, static_cast<int>(trains.size()));
  for (size_t i = 0; i < trains.size(); ++i) plan.per_env[trains[i]].lambda = ls[i];
  for (const auto& name : suite.names_by_role(Role::Validation))
    plan.per_env[name].lambda = lambda_val;
  for (const auto& name : suite.names_by_role(Role::Test))
    plan.per_env[name].lambda = lambda_test;
  return plan;
}

ShiftPlan make_biassamp_plan(
    const EnvironmentSuite& suite, bool observed,
    const std::map<std::string, std::pair<double, double>>& mu_by_env) {
  ShiftPlan plan;
  plan.kind = observed ? ShiftKind::BiasSampObs : ShiftKind::BiasSampUnobs;
  for (const auto& e : suite.environments) {
    auto it = mu_by_env.find(e.name);
    if (it == mu_by_env.end())
      throw ConfigError("no subsampling parameters for environment " + e.name);
    auto [mu1, mu0] = it->second;
    if (mu1 <= 0.0 || mu1 >= 1.0 || mu0 <= 0.0 || mu0 >= 1.0)
      throw RangeError("mu must lie strictly inside (0,1)");
    plan.per_env[e.name].mu1 = mu1;
    plan.per_env[e.name].mu0 = mu0;
  }
  return plan;
}

Environment corrupt_label_feature(Environment env, double p,
                                  std::mt19937_64& rng, EnvShiftStats* stats) {
  if (env.labels.cols() != 1)
    throw ConfigError("corrupt_label_feature requires binary label mode");
  if (p < 0.0 || p > 1.0) throw RangeError("flip probability out of [0,1]");

  const Eigen::Index n = env.size();
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  Eigen::MatrixXd wider(n, env.static_cont.cols() + 1);
  wider.leftCols(env.static_cont.cols()) = env.static_cont;
  long flips = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    int flip = ud(rng) < p ? 1 : 0;
    flips += flip;
    wider(i, env.static_cont.cols()) =
        flip ? 1.0 - env.labels(i, 0) : env.labels(i, 0);
  }
  env.static_cont = std::move(wider);
  if (stats) {
    stats->env = env.name;
    stats->flip_rate = n > 0 ? double(flips) / double(n) : 0.0;
    stats->original_count = stats->retained_count = n;
  }
  return env;
}

Environment correlated_noise(Environment env, int feature_id, double lambda,
                             double sigma, const FeatureSchema& schema,
                             std::mt19937_64& rng, EnvShiftStats* stats) {
  if (sigma <= 0.0) throw RangeError("sigma must be positive");
  if (feature_id < 0 || feature_id >= schema.static_cont)
    throw SchemaError("correlated_noise target must be a continuous static "
                      "feature; channel " + std::to_string(feature_id) +
                      " is out of range");
  if (env.labels.cols() != 1)
    throw ConfigError("correlated_noise requires binary label mode");

  std::normal_distribution<double> nd(0.0, 1.0);
  double sum_pos = 0, sum_neg = 0;
  long n_pos = 0, n_neg = 0;
  for (Eigen::Index i = 0; i < env.size(); ++i) {
    double y = env.labels(i, 0) > 0.5 ? 1.0 : -1.0;
    double eps = lambda * y + sigma * nd(rng);
    env.static_cont(i, feature_id) += eps;
    if (y > 0) { sum_pos += eps; ++n_pos; } else { sum_neg += eps; ++n_neg; }
  }
  if (stats) {
    stats->env = env.name;
    stats->noise_mean_pos = n_pos ? sum_pos / double(n_pos) : 0.0;
    stats->noise_mean_neg = n_neg ? sum_neg / double(n_neg) : 0.0;
    stats->original_count = stats->retained_count = env.size();
  }
  return env;
}

double subsample_probability(int y, double mu, double tau) {
  if (mu <= 0.0 || mu >= 1.0) throw RangeError("mu must lie strictly inside (0,1)");
  if (tau <= 0.0 || tau >= 1.0) throw RangeError("tau must lie strictly inside (0,1)");
  if (y == 1 && tau > mu) return 1.0 - (1.0 - tau) / tau * mu / (1.0 - mu);
  if (y == 0 && tau < mu) return 1.0 - tau / (1.0 - tau) * (1.0 - mu) / mu;
  return 0.0;
}

Environment biased_subsample(const Environment& env, double mu1, double mu0,
                             std::mt19937_64& rng, EnvShiftStats* stats) {
  if (env.labels.cols() != 1)
    throw ConfigError("biased_subsample requires binary label mode");

  long cell[2][2] = {{0, 0}, {0, 0}};  // [group][label]
  for (Eigen::Index i = 0; i < env.size(); ++i)
    ++cell[env.group(i)][env.labels(i, 0) > 0.5 ? 1 : 0];
  for (int g = 0; g < 2; ++g)
    for (int y = 0; y < 2; ++y)
      if (cell[g][y] == 0)
        throw DataError("environment " + env.name + ": empty (group=" +
                        std::to_string(g) + ", label=" + std::to_string(y) +
                        ") cell makes the subsampling target unreachable");

  double tau[2];
  for (int g = 0; g < 2; ++g)
    tau[g] = double(cell[g][1]) / double(cell[g][0] + cell[g][1]);
  const double mu[2] = {mu0, mu1};

  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::vector<int> keep;
  long kept_cell[2][2] = {{0, 0}, {0, 0}};
  for (Eigen::Index i = 0; i < env.size(); ++i) {
    int g = env.group(i);
    int y = env.labels(i, 0) > 0.5 ? 1 : 0;
    double drop = subsample_probability(y, mu[g], tau[g]);
    if (ud(rng) >= drop) {
      keep.push_back(static_cast<int>(i));
      ++kept_cell[g][y];
    }
  }

  Environment out = env.subset(keep);
  if (stats) {
    stats->env = env.name;
    stats->original_count = env.size();
    stats->retained_count = static_cast<long>(keep.size());
    auto prev = [&](int g) {
      long tot = kept_cell[g][0] + kept_cell[g][1];
      return tot ? double(kept_cell[g][1]) / double(tot) : 0.0;
    };
    stats->prevalence_g0 = prev(0);
    stats->prevalence_g1 = prev(1);
  }
  return out;
}

DigitImages make_synthetic_digits(int n, int side, std::uint64_t seed) {
  DigitImages out;
  out.side = side;
  out.images.reserve(n);
  out.digits.reserve(n);

  // fixed prototype glyph per digit class
  std::vector<Eigen::MatrixXd> proto(10);
  std::mt19937_64 prng(0xd161u);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  for (int d = 0; d < 10; ++d) {
    proto[d].resize(side, side);
    for (int i = 0; i < side; ++i)
      for (int j = 0; j < side; ++j)
        proto[d](i, j) = ud(prng) < 0.45 ? 1.0 : 0.0;
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> digit_dist(0, 9);
  std::uniform_real_distribution<double> intensity(0.6, 1.0);
  for (int k = 0; k < n; ++k) {
    int d = digit_dist(rng);
    Eigen::MatrixXd img = proto[d];
    for (int i = 0; i < side; ++i)
      for (int j = 0; j < side; ++j) {
        if (ud(rng) < 0.08) img(i, j) = 1.0 - img(i, j);  // pixel noise
        img(i, j) *= intensity(rng);
      }
    out.images.push_back(std::move(img));
    out.digits.push_back(d);
  }
  return out;
}

EnvironmentSuite generate_colored_mnist(double eta, double beta, double delta,
                                        const DigitImages& base,
                                        const SeedBundle& seeds,
                                        int n_train_per_env, int n_test,
                                        double p_test) {
  const double p1 = beta + delta / 2.0, p2 = beta - delta / 2.0;
  for (double p : {eta, p1, p2, p_test})
    if (p < 0.0 || p > 1.0)
      throw RangeError("colored MNIST probabilities must lie in [0,1]");
  const long need = 2L * n_train_per_env + n_test;
  if (static_cast<long>(base.images.size()) < need)
    throw DataError("insufficient base images: need " + std::to_string(need) +
                    ", have " + std::to_string(base.images.size()));

  const int side = base.side;
  const int pixels = side * side;
  FeatureSchema schema;
  schema.static_cont = 2 * pixels;  // two color channels, flattened
  schema.n_labels = 1;

  std::mt19937_64 rng(seeds.data_seed ^ 0xc0104edull);
  std::uniform_real_distribution<double> ud(0.0, 1.0);

  // random assignment of base images to the three environments
  std::vector<int> order(base.images.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  struct EnvDef { std::string name; int n; double p; Role role; };
  std::vector<EnvDef> defs = {
      {"env1", n_train_per_env, p1, Role::Train},
      {"env2", n_train_per_env, p2, Role::Train},
      {"test", n_test, p_test, Role::Test},
  };

  std::vector<Environment> envs;
  std::map<std::string, Role> roles;
  size_t cursor = 0;
  for (const auto& def : defs) {
    Environment env;
    env.name = def.name;
    roles[def.name] = def.role;
    env.static_cont.resize(def.n, 2 * pixels);
    env.labels.resize(def.n, 1);
    env.static_cat.resize(def.n, 0);
    env.group.setZero(def.n);
    for (int i = 0; i < def.n; ++i) {
      int bi = order[cursor++];
      const Eigen::MatrixXd& fig = base.images[bi];
      int y_hat = base.digits[bi] >= 5 ? 1 : 0;
      int y = ud(rng) < eta ? 1 - y_hat : y_hat;
      int x_ch = ud(rng) < def.p ? 1 - y : y;
      for (int px = 0; px < pixels; ++px) {
        double v = fig(px / side, px % side);
        env.static_cont(i, px) = x_ch == 0 ? v : 0.0;
        env.static_cont(i, pixels + px) = x_ch == 1 ? v : 0.0;
      }
      env.labels(i, 0) = y;
    }
    std::mt19937_64 srng(seeds.data_seed + 0x5157ull * (cursor + 1));
    env = split_environment(std::move(env), SplitFractions{}, srng);
    envs.push_back(std::move(env));
  }

  EnvironmentSuite suite =
      build_environment_suite(std::move(envs), std::move(roles), schema);
  suite.seeds = seeds;
  return suite;
}

std::pair<EnvironmentSuite, ShiftReport> apply_shift(const EnvironmentSuite& suite,
                                                     const ShiftPlan& plan,
                                                     std::mt19937_64& rng) {
  ShiftReport report;
  report.kind = plan.kind;
  if (plan.kind == ShiftKind::Base) return {suite, report};
  if (plan.kind == ShiftKind::ColoredMNIST)
    throw ConfigError("ColoredMNIST is generated, not applied to an existing suite");

  for (const auto& e : suite.environments)
    if (!plan.per_env.count(e.name))
      throw ConfigError("shift plan has no parameters for environment " + e.name);

  EnvironmentSuite out = suite;
  out.audit = std::make_shared<AccessAudit>();
  for (auto& env : out.environments) {
    const ShiftParams& par = plan.per_env.at(env.name);
    std::mt19937_64 erng(rng());  // per-environment derived stream
    EnvShiftStats stats;
    switch (plan.kind) {
      case ShiftKind::CorrLabel:
        env = corrupt_label_feature(std::move(env), par.p, erng, &stats);
        break;
      case ShiftKind::CorrNoise:
        env = correlated_noise(std::move(env), plan.feature_id, par.lambda,
                               plan.sigma, suite.schema, erng, &stats);
        break;
      case ShiftKind::BiasSampUnobs:
      case ShiftKind::BiasSampObs:
        env = biased_subsample(env, par.mu1, par.mu0, erng, &stats);
        break;
      default:
        break;
    }
    report.per_env.push_back(stats);
  }
  if (plan.kind == ShiftKind::CorrLabel) out.schema.static_cont += 1;
  out.schema.group_visible = plan.kind == ShiftKind::BiasSampObs;
  return {out, report};
}

}  // namespace dgbench
