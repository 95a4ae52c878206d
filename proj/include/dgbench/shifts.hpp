#pragma once

// Synthetic distribution-shift injectors: corrupted-label feature,
// label-correlated noise, biased subsampling, and the Colored MNIST
// generator, with per-environment parameterization.

#include <map>
#include <random>
#include <string>
#include <vector>

#include "dgbench/envdata.hpp"

namespace dgbench {

enum class ShiftKind {
  Base,
  CorrLabel,
  CorrNoise,
  BiasSampUnobs,
  BiasSampObs,
  ColoredMNIST
};

std::string shift_kind_name(ShiftKind k);
ShiftKind shift_kind_from_name(const std::string& s);

struct ShiftParams {
  double p = 0.0;       // CorrLabel flip probability
  double lambda = 0.0;  // CorrNoise noise mean scale
  double mu1 = 0.5;     // BiasSamp target P(Y=1 | group=1)
  double mu0 = 0.5;     // BiasSamp target P(Y=1 | group=0)
};

struct ShiftPlan {
  ShiftKind kind = ShiftKind::Base;
  std::map<std::string, ShiftParams> per_env;
  double sigma = 0.5;  // CorrNoise
  int feature_id = 0;  // CorrNoise target static continuous channel
  double eta = 0.25, beta = 0.15, delta = 0.1;  // ColoredMNIST
};

struct EnvShiftStats {
  std::string env;
  double flip_rate = 0.0;            // CorrLabel: empirical P(X' != Y)
  double noise_mean_pos = 0.0;       // CorrNoise: mean added noise, y=1
  double noise_mean_neg = 0.0;       //            mean added noise, y=0
  double prevalence_g1 = 0.0;        // BiasSamp: achieved P(Y=1 | group)
  double prevalence_g0 = 0.0;
  long original_count = 0;
  long retained_count = 0;
};

struct ShiftReport {
  ShiftKind kind = ShiftKind::Base;
  std::vector<EnvShiftStats> per_env;
};

// Expands (β, δ) to one value per training environment: β + δ·(i − (n−1)/2),
// so three environments get (β−δ, β, β+δ). n must be odd.
std::vector<double> expand_beta_delta(double beta, double delta, int n_train_envs);

// Convenience plan builders following the published parameter scheme
// (train envs in suite order get the expanded values).
ShiftPlan make_corrlabel_plan(const EnvironmentSuite& suite, double beta,
                              double delta, double p_val = 0.5,
                              double p_test = 0.9);
ShiftPlan make_corrnoise_plan(const EnvironmentSuite& suite, double beta,
                              double delta, double lambda_val = 0.0,
                              double lambda_test = -1.0, double sigma = 0.5,
                              int feature_id = 0);
ShiftPlan make_biassamp_plan(const EnvironmentSuite& suite, bool observed,
                             const std::map<std::string, std::pair<double, double>>&
                                 mu_by_env /* name -> (mu1, mu0) */);

// Appends a binary static feature X' = Y xor Bernoulli(p) (binary labels only).
Environment corrupt_label_feature(Environment env, double p,
                                  std::mt19937_64& rng, EnvShiftStats* stats);

// Replaces static channel feature_id with X' = X + eps, eps ~ N(lambda*y, sigma^2),
// y mapped {0,1} -> {-1,+1}.
Environment correlated_noise(Environment env, int feature_id, double lambda,
                             double sigma, const FeatureSchema& schema,
                             std::mt19937_64& rng, EnvShiftStats* stats);

// Probability of dropping a (group-membership, label) sample so the group's
// positive-label prevalence moves from tau to mu.
double subsample_probability(int y, double mu, double tau);

// Independent Bernoulli drops per example to reach the target per-group
// prevalences. The group attribute stays in metadata either way; whether it
// is model-visible is controlled at the suite schema level.
Environment biased_subsample(const Environment& env, double mu1, double mu0,
                             std::mt19937_64& rng, EnvShiftStats* stats);

struct DigitImages {
  std::vector<Eigen::MatrixXd> images;  // side x side grayscale in [0,1]
  std::vector<int> digits;              // 0..9
  int side = 14;
};

// Procedural stand-in for the MNIST corpus: per-digit prototype glyphs with
// pixel noise. The digit class is recoverable from the image by a small
// classifier, which is all the colored construction needs.
DigitImages make_synthetic_digits(int n, int side, std::uint64_t seed);

EnvironmentSuite generate_colored_mnist(double eta, double beta, double delta,
                                        const DigitImages& base,
                                        const SeedBundle& seeds,
                                        int n_train_per_env = 25000,
                                        int n_test = 10000,
                                        double p_test = 0.9);

std::pair<EnvironmentSuite, ShiftReport> apply_shift(const EnvironmentSuite& suite,
                                                     const ShiftPlan& plan,
                                                     std::mt19937_64& rng);

}  // namespace dgbench
