#pragma once

// Multi-environment data model: columnar environments, splits,
// standardization, the synthetic suite generator, and suite (de)serialization.

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace dgbench {

struct SeedBundle {
  std::uint64_t data_seed = 0;
  std::uint64_t model_seed = 0;
  std::uint64_t search_seed = 0;
  bool operator==(const SeedBundle&) const = default;
};

enum class Role { Train, Validation, Test };

std::string role_name(Role r);
Role role_from_name(const std::string& s);

struct FeatureSchema {
  int seq_len = 0;  // T; 0 means no time-series channels
  int seq_cont = 0;
  std::vector<int> seq_cat_card;  // cardinality per sequence categorical channel
  int static_cont = 0;
  std::vector<int> static_cat_card;
  int n_labels = 1;  // >1 means multi-label
  bool group_visible = false;  // group attribute appended as a static feature
  bool operator==(const FeatureSchema&) const = default;

  bool multilabel() const { return n_labels > 1; }
  int model_static_cont() const { return static_cont + (group_visible ? 1 : 0); }
};

enum class SplitKind { Train, Val, Test };

// Per-example view used at API boundaries; storage is columnar.
struct Example {
  Eigen::MatrixXd sequence_features;      // T x seq_cont
  Eigen::MatrixXi sequence_categoricals;  // T x |seq_cat_card|
  Eigen::VectorXd static_continuous;
  Eigen::VectorXi static_categoricals;
  Eigen::VectorXd label;  // length n_labels, entries in {0,1}
  int group_attribute = 0;
};

struct Environment {
  std::string name;
  // time-major columnar storage: seq_cont[t] is n x channels
  std::vector<Eigen::MatrixXd> seq_cont;
  std::vector<Eigen::MatrixXi> seq_cat;
  Eigen::MatrixXd static_cont;  // n x static_cont
  Eigen::MatrixXi static_cat;   // n x |static_cat_card|
  Eigen::MatrixXd labels;       // n x n_labels
  Eigen::VectorXi group;        // n, values in {0,1}

  std::vector<int> train_idx, val_idx, test_idx;

  Eigen::Index size() const { return labels.rows(); }
  Example example(Eigen::Index i) const;
  const std::vector<int>& split(SplitKind k) const;

  // keeps only the given examples (renumbers splits)
  Environment subset(const std::vector<int>& keep) const;
};

// Records reads of environment data so leakage-free protocols can be audited.
struct AccessAudit {
  struct Event {
    std::string env;
    SplitKind split;
    bool after_finalize;
  };
  std::vector<Event> events;
  bool finalized = false;

  void record(const std::string& env, SplitKind split) {
    events.push_back({env, split, finalized});
  }
  // reads of the named env before finalize() was called
  int reads_before_final(const std::string& env) const;
};

struct EnvironmentSuite {
  std::vector<Environment> environments;
  std::map<std::string, Role> roles;
  FeatureSchema schema;
  SeedBundle seeds;
  std::shared_ptr<AccessAudit> audit = std::make_shared<AccessAudit>();

  const Environment& env(const std::string& name) const;
  Environment& env(const std::string& name);
  const Environment& test_env() const;
  std::vector<const Environment*> by_role(Role r) const;
  std::vector<std::string> names_by_role(Role r) const;

  // all data reads during training/selection should go through this
  void record_access(const std::string& env, SplitKind split) const {
    if (audit) audit->record(env, split);
  }
};

EnvironmentSuite build_environment_suite(std::vector<Environment> envs,
                                         std::map<std::string, Role> roles,
                                         const FeatureSchema& schema);

struct SplitFractions {
  double train = 0.7, val = 0.1, test = 0.2;
};

Environment split_environment(Environment env, const SplitFractions& fractions,
                              std::mt19937_64& rng);

struct Standardizer {
  Eigen::VectorXd static_mean, static_scale;  // per continuous channel
  Eigen::VectorXd seq_mean, seq_scale;
  std::vector<std::string> warnings;  // zero-variance channels
};

Standardizer fit_standardizer(const EnvironmentSuite& suite);
Environment apply_standardizer(const Standardizer& s, Environment env);
// applies to every environment in place
EnvironmentSuite standardize_suite(EnvironmentSuite suite);

struct SyntheticSpec {
  int n_train_envs = 3;
  bool with_validation_env = true;
  int examples_per_env = 2000;
  int seq_len = 0;
  int seq_cont_channels = 0;
  int static_cont_channels = 6;
  int invariant_dim = 3;          // leading static channels drive the label
  double logit_scale = 2.0;
  double nuisance_strength = 1.0; // env-specific mean offset on nuisance channels
  double group_base_rate = 0.5;
};

// Generates a suite with a known invariant labeling mechanism: the leading
// invariant_dim static channels determine P(Y=1) identically in every
// environment; the remaining channels carry environment-specific offsets.
EnvironmentSuite generate_synthetic_suite(const SyntheticSpec& spec,
                                          const SeedBundle& seeds);

void save_suite(const EnvironmentSuite& suite, const std::string& dir);
EnvironmentSuite load_suite(const std::string& dir);

}  // namespace dgbench
