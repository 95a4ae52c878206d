#pragma once

// Predictor models with a featurizer/classifier decomposition: dense MLP and
// GRU sequence model. Forward passes are functional over a parameter list so
// objectives can differentiate through parameter updates.

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dgbench/autodiff.hpp"
#include "dgbench/envdata.hpp"

namespace dgbench {

enum class ModelFamily { Mlp, Gru };
enum class Activation { Relu, Tanh };

struct ModelSpec {
  ModelFamily family = ModelFamily::Mlp;
  std::vector<int> hidden_sizes = {64};  // MLP
  int gru_hidden = 32;
  double dropout = 0.0;
  int embed_dim = 4;  // per categorical channel
  Activation activation = Activation::Relu;
};

struct Batch {
  std::string env;
  std::vector<Eigen::MatrixXd> seq_cont;  // time-major, each B x channels
  std::vector<Eigen::MatrixXi> seq_cat;
  Eigen::MatrixXd static_cont;  // B x channels, group column appended if visible
  Eigen::MatrixXi static_cat;
  Eigen::MatrixXd labels;  // B x n_labels
  Eigen::VectorXi group;
};

// Assembles the model-visible inputs for the given rows; records the access
// in the suite's audit.
Batch make_batch(const EnvironmentSuite& suite, const std::string& env,
                 const std::vector<int>& rows);
Batch sample_batch(const EnvironmentSuite& suite, const std::string& env,
                   SplitKind split, int batch_size, std::mt19937_64& rng);
Batch full_split_batch(const EnvironmentSuite& suite, const std::string& env,
                       SplitKind split);

struct PredictorModel {
  ModelSpec spec;
  FeatureSchema schema;
  std::vector<Eigen::MatrixXd> params;
  std::vector<std::string> param_names;
  int feature_dim = 0;  // featurizer output width d

  Eigen::Index n_scalar_params() const;
  Eigen::VectorXd flat_params() const;
  void set_flat_params(const Eigen::VectorXd& theta);
};

PredictorModel build_model(const ModelSpec& spec, const FeatureSchema& schema,
                           std::uint64_t seed);

// leaf variables over the model's current parameter values
std::vector<ad::Var> make_param_vars(const PredictorModel& model);

struct ForwardResult {
  ad::Var features;  // B x d featurizer output
  ad::Var logits;    // B x n_labels
};

// training=true enables dropout (masks drawn from rng, which then must be
// non-null); evaluation is deterministic.
ForwardResult forward(const PredictorModel& model,
                      const std::vector<ad::Var>& pvars, const Batch& batch,
                      bool training = false, std::mt19937_64* rng = nullptr);

Eigen::MatrixXd predict_logits(const PredictorModel& model, const Batch& batch);
Eigen::MatrixXd predict_proba(const PredictorModel& model, const Batch& batch);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct AdamState {
  std::vector<Eigen::MatrixXd> m, v;
  long t = 0;
};

void adam_step(PredictorModel& model, const std::vector<Eigen::MatrixXd>& grads,
               const AdamConfig& cfg, AdamState& state);

void save_model(const PredictorModel& model, const SeedBundle& seeds,
                const std::string& path);
PredictorModel load_model(const std::string& path, SeedBundle* seeds = nullptr);

}  // namespace dgbench
