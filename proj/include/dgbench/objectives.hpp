#pragma once

// Training objectives: ERM plus the eight invariance-seeking methods, each a
// strategy mapping per-environment minibatches and a model to a scalar loss.
// All losses are built on the autodiff graph, so their parameter gradients
// (including the second-order terms in the gradient-alignment and
// meta-learning penalties) are exact.

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dgbench/models.hpp"

namespace dgbench {

enum class Algorithm {
  ERM,
  GroupDRO,
  IRM,
  VREx,
  RVP,
  IGA,
  CORAL,
  MLDG,
  OracleID,
  OracleMerged
};

std::string algorithm_name(Algorithm a);
Algorithm algorithm_from_name(const std::string& s);
std::vector<Algorithm> all_algorithms();
bool is_oracle(Algorithm a);

struct ObjectiveConfig {
  Algorithm algo = Algorithm::ERM;
  double lambda = 1.0;  // penalty target weight
  long anneal_step = 0;
  double dro_eta = 1e-2;      // GroupDRO weight temperature
  double mldg_alpha = 1e-2;   // inner step size
  double mldg_gamma = 1.0;    // meta-test weight
  bool mldg_first_order = false;
};

struct ObjectiveState {
  Eigen::VectorXd q;  // GroupDRO environment weights, on the simplex
  long step = 0;
};

struct LossDiagnostics {
  std::vector<double> env_risks;
  double penalty = 0.0;
  double effective_lambda = 0.0;
  double total = 0.0;
  Eigen::VectorXd q;
};

// Empirical batch risks, one per batch (mean binary cross-entropy; mean over
// labels in multi-label mode).
std::vector<ad::Var> env_risks(const PredictorModel& model,
                               const std::vector<ad::Var>& pvars,
                               const std::vector<Batch>& batches,
                               bool training = false,
                               std::mt19937_64* rng = nullptr);

ad::Var erm_loss(const std::vector<ad::Var>& risks);
// Updates q by exponentiated weights, then returns the reweighted loss.
ad::Var group_dro_loss(const std::vector<ad::Var>& risks, double eta_q,
                       ObjectiveState& state);
// Squared gradient of the batch risk with respect to a scalar logit
// multiplier, evaluated at 1.
ad::Var irm_penalty(const PredictorModel& model, const std::vector<ad::Var>& pvars,
                    const Batch& batch);
ad::Var vrex_loss(const std::vector<ad::Var>& risks, double lambda);
ad::Var rvp_loss(const std::vector<ad::Var>& risks, double lambda);
ad::Var iga_loss(const PredictorModel& model, const std::vector<ad::Var>& pvars,
                 const std::vector<Batch>& batches, double lambda);
ad::Var coral_loss(const PredictorModel& model, const std::vector<ad::Var>& pvars,
                   const std::vector<Batch>& batches, double lambda);
// Rotating-holdout meta objective; holdout selects the meta-test environment.
ad::Var mldg_step(const PredictorModel& model, const std::vector<ad::Var>& pvars,
                  const std::vector<Batch>& batches, double alpha, double gamma,
                  bool first_order, long holdout);

// 1 before anneal_step, lambda after.
double anneal_lambda(const ObjectiveConfig& cfg, long step);

// Full per-step objective with annealing and the post-anneal 1/lambda
// rescaling for lambda > 1.
ad::Var objective_loss(const PredictorModel& model,
                       const std::vector<ad::Var>& pvars,
                       const std::vector<Batch>& batches,
                       const ObjectiveConfig& cfg, ObjectiveState& state,
                       bool training = false, std::mt19937_64* rng = nullptr,
                       LossDiagnostics* diag = nullptr);

// ---------------------------------------------------------------------------
// training loop

struct TrainSource {
  std::string env;
  SplitKind split = SplitKind::Train;
};

struct TrainConfig {
  ObjectiveConfig objective;
  AdamConfig adam;
  int batch_size = 64;
  long steps = 500;
  long checkpoint_every = 100;
};

struct StepDiag {
  long step;
  double total;
  std::vector<double> env_risks;
  double penalty;
  double effective_lambda;
};

struct TrainTrace {
  std::vector<StepDiag> steps;
  std::vector<std::pair<long, double>> checkpoints;  // (step, score)
  bool diverged = false;
  double best_score = 0.0;
  long best_step = -1;
};

using CheckpointScore = std::function<double(const PredictorModel&)>;

// One equal-size batch per source per step. When score is provided, the
// checkpoint maximizing it is restored into the returned model.
TrainTrace train_model(PredictorModel& model, const EnvironmentSuite& suite,
                       const std::vector<TrainSource>& sources,
                       const TrainConfig& cfg, std::mt19937_64& rng,
                       const CheckpointScore& score = nullptr);

std::vector<TrainSource> default_train_sources(const EnvironmentSuite& suite);

}  // namespace dgbench
