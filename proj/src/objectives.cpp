#include "dgbench/objectives.hpp"

#include <cmath>

#include "dgbench/errors.hpp"

namespace dgbench {

using ad::Var;

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::ERM: return "ERM";
    case Algorithm::GroupDRO: return "GroupDRO";
    case Algorithm::IRM: return "IRM";
    case Algorithm::VREx: return "VREx";
    case Algorithm::RVP: return "RVP";
    case Algorithm::IGA: return "IGA";
    case Algorithm::CORAL: return "CORAL";
    case Algorithm::MLDG: return "MLDG";
    case Algorithm::OracleID: return "OracleID";
    case Algorithm::OracleMerged: return "OracleMerged";
  }
  return "?";
}

std::vector<Algorithm> all_algorithms() {
  return {Algorithm::ERM,  Algorithm::GroupDRO, Algorithm::IRM,
          Algorithm::VREx, Algorithm::RVP,      Algorithm::IGA,
          Algorithm::CORAL, Algorithm::MLDG,    Algorithm::OracleID,
          Algorithm::OracleMerged};
}

Algorithm algorithm_from_name(const std::string& s) {
  for (Algorithm a : all_algorithms())
    if (algorithm_name(a) == s) return a;
  std::string valid;
  for (Algorithm a : all_algorithms()) valid += " " + algorithm_name(a);
  throw ConfigError("unknown algorithm '" + s + "'; valid ids:" + valid);
}

bool is_oracle(Algorithm a) {
  return a == Algorithm::OracleID || a == Algorithm::OracleMerged;
}

std::vector<Var> env_risks(const PredictorModel& model,
                           const std::vector<Var>& pvars,
                           const std::vector<Batch>& batches, bool training,
                           std::mt19937_64* rng) {
  if (batches.empty()) throw ConfigError("env_risks: no batches");
  std::vector<Var> risks;
  risks.reserve(batches.size());
  for (const auto& b : batches) {
    auto fwd = forward(model, pvars, b, training, rng);
    if (!fwd.logits.val().allFinite())
      throw NumericError("non-finite model output on environment " + b.env);
    risks.push_back(ad::bce_with_logits(fwd.logits, b.labels));
  }
  return risks;
}

namespace {

Var risk_mean(const std::vector<Var>& risks) {
  Var s = risks[0];
  for (size_t i = 1; i < risks.size(); ++i) s = ad::add(s, risks[i]);
  return ad::smul(s, 1.0 / double(risks.size()));
}

// population variance (divide by the number of environments)
Var risk_variance(const std::vector<Var>& risks) {
  Var m = risk_mean(risks);
  Var acc;
  for (const auto& r : risks) {
    Var d = ad::sub(r, m);
    Var sq = ad::mul(d, d);
    acc = acc.defined() ? ad::add(acc, sq) : sq;
  }
  return ad::smul(acc, 1.0 / double(risks.size()));
}

}  // namespace

Var erm_loss(const std::vector<Var>& risks) { return risk_mean(risks); }

Var group_dro_loss(const std::vector<Var>& risks, double eta_q,
                   ObjectiveState& state) {
  if (eta_q <= 0.0) throw ConfigError("GroupDRO eta must be positive");
  const auto n = static_cast<Eigen::Index>(risks.size());
  if (state.q.size() != n)
    state.q = Eigen::VectorXd::Constant(n, 1.0 / double(n));
  for (Eigen::Index i = 0; i < n; ++i)
    state.q[i] *= std::exp(eta_q * risks[i].scalar());
  state.q /= state.q.sum();

  Var loss;
  for (Eigen::Index i = 0; i < n; ++i) {
    Var term = ad::smul(risks[i], state.q[i]);
    loss = loss.defined() ? ad::add(loss, term) : term;
  }
  return loss;
}

Var irm_penalty(const PredictorModel& model, const std::vector<Var>& pvars,
                const Batch& batch) {
  auto fwd = forward(model, pvars, batch);
  Var w = Var::leaf(Eigen::MatrixXd::Ones(1, 1));
  Var risk = ad::bce_with_logits(ad::vscale(fwd.logits, w), batch.labels);
  auto g = ad::grad(risk, {w});
  return ad::sqnorm(g[0]);
}

Var vrex_loss(const std::vector<Var>& risks, double lambda) {
  return ad::add(risk_mean(risks), ad::smul(risk_variance(risks), lambda));
}

Var rvp_loss(const std::vector<Var>& risks, double lambda) {
  return ad::add(risk_mean(risks),
                 ad::smul(ad::sqrt_(risk_variance(risks)), lambda));
}

Var iga_loss(const PredictorModel& model, const std::vector<Var>& pvars,
             const std::vector<Batch>& batches, double lambda) {
  auto risks = env_risks(model, pvars, batches);
  const size_t n = risks.size();
  std::vector<std::vector<Var>> grads;
  grads.reserve(n);
  for (const auto& r : risks) grads.push_back(ad::grad(r, pvars));

  std::vector<Var> mean_grad(pvars.size());
  for (size_t p = 0; p < pvars.size(); ++p) {
    Var s = grads[0][p];
    for (size_t e = 1; e < n; ++e) s = ad::add(s, grads[e][p]);
    mean_grad[p] = ad::smul(s, 1.0 / double(n));
  }

  Var penalty;
  for (size_t e = 0; e < n; ++e)
    for (size_t p = 0; p < pvars.size(); ++p) {
      Var term = ad::sqnorm(ad::sub(grads[e][p], mean_grad[p]));
      penalty = penalty.defined() ? ad::add(penalty, term) : term;
    }
  return ad::add(risk_mean(risks), ad::smul(penalty, lambda));
}

Var coral_loss(const PredictorModel& model, const std::vector<Var>& pvars,
               const std::vector<Batch>& batches, double lambda) {
  std::vector<Var> risks, means, covs;
  for (const auto& b : batches) {
    auto fwd = forward(model, pvars, b);
    if (!fwd.logits.val().allFinite())
      throw NumericError("non-finite model output on environment " + b.env);
    risks.push_back(ad::bce_with_logits(fwd.logits, b.labels));
    const auto B = fwd.features.val().rows();
    Var mu = ad::smul(ad::colsum(fwd.features), 1.0 / double(B));
    Var centered = ad::sub(fwd.features, ad::broadcast_rows(mu, B));
    Var cov = ad::smul(ad::matmul(ad::transpose(centered), centered),
                       B > 1 ? 1.0 / double(B - 1) : 1.0);
    means.push_back(mu);
    covs.push_back(cov);
  }

  Var penalty;
  int pairs = 0;
  for (size_t i = 0; i < risks.size(); ++i)
    for (size_t j = i + 1; j < risks.size(); ++j) {
      Var dm = ad::sub(means[i], means[j]);
      Var dc = ad::sub(covs[i], covs[j]);
      Var term = ad::add(ad::mean(ad::mul(dm, dm)), ad::mean(ad::mul(dc, dc)));
      penalty = penalty.defined() ? ad::add(penalty, term) : term;
      ++pairs;
    }
  Var task = risk_mean(risks);
  if (!penalty.defined()) return task;
  return ad::add(task, ad::smul(penalty, lambda / double(pairs)));
}

Var mldg_step(const PredictorModel& model, const std::vector<Var>& pvars,
              const std::vector<Batch>& batches, double alpha, double gamma,
              bool first_order, long holdout) {
  if (batches.size() < 2)
    throw ConfigError("MLDG needs at least 2 training environments");
  const size_t test_i = static_cast<size_t>(holdout % long(batches.size()));
  std::vector<Batch> meta_train;
  for (size_t i = 0; i < batches.size(); ++i)
    if (i != test_i) meta_train.push_back(batches[i]);

  Var l_mt = risk_mean(env_risks(model, pvars, meta_train));
  auto g = ad::grad(l_mt, pvars);
  std::vector<Var> adapted(pvars.size());
  for (size_t p = 0; p < pvars.size(); ++p) {
    Var gp = first_order ? Var::constant(g[p].val()) : g[p];
    adapted[p] = ad::sub(pvars[p], ad::smul(gp, alpha));
  }
  auto fwd = forward(model, adapted, batches[test_i]);
  Var l_test = ad::bce_with_logits(fwd.logits, batches[test_i].labels);
  return ad::add(l_mt, ad::smul(l_test, gamma));
}

double anneal_lambda(const ObjectiveConfig& cfg, long step) {
  return step < cfg.anneal_step ? 1.0 : cfg.lambda;
}

namespace {

Var rescale_post_anneal(Var total, const ObjectiveConfig& cfg, long step) {
  // keeps the gradient scale stable once a large penalty weight kicks in
  if (cfg.lambda > 1.0 && step >= cfg.anneal_step)
    return ad::smul(total, 1.0 / cfg.lambda);
  return total;
}

}  // namespace

Var objective_loss(const PredictorModel& model, const std::vector<Var>& pvars,
                   const std::vector<Batch>& batches, const ObjectiveConfig& cfg,
                   ObjectiveState& state, bool training, std::mt19937_64* rng,
                   LossDiagnostics* diag) {
  const double lam = anneal_lambda(cfg, state.step);
  Var total;
  double penalty_val = 0.0;
  std::vector<double> risk_vals;

  auto record_risks = [&](const std::vector<Var>& risks) {
    for (const auto& r : risks) risk_vals.push_back(r.scalar());
  };

  switch (cfg.algo) {
    case Algorithm::ERM:
    case Algorithm::OracleID:
    case Algorithm::OracleMerged: {
      auto risks = env_risks(model, pvars, batches, training, rng);
      record_risks(risks);
      total = erm_loss(risks);
      break;
    }
    case Algorithm::GroupDRO: {
      auto risks = env_risks(model, pvars, batches, training, rng);
      record_risks(risks);
      total = group_dro_loss(risks, cfg.dro_eta, state);
      break;
    }
    case Algorithm::IRM: {
      std::vector<Var> risks, pens;
      for (const auto& b : batches) {
        auto fwd = forward(model, pvars, b, training, rng);
        if (!fwd.logits.val().allFinite())
          throw NumericError("non-finite model output on environment " + b.env);
        Var w = Var::leaf(Eigen::MatrixXd::Ones(1, 1));
        Var risk = ad::bce_with_logits(ad::vscale(fwd.logits, w), b.labels);
        risks.push_back(risk);
        pens.push_back(ad::sqnorm(ad::grad(risk, {w})[0]));
      }
      record_risks(risks);
      Var pen = risk_mean(pens);
      penalty_val = pen.scalar();
      total = rescale_post_anneal(ad::add(risk_mean(risks), ad::smul(pen, lam)),
                                  cfg, state.step);
      break;
    }
    case Algorithm::VREx: {
      auto risks = env_risks(model, pvars, batches, training, rng);
      record_risks(risks);
      total = rescale_post_anneal(vrex_loss(risks, lam), cfg, state.step);
      penalty_val = risk_variance(risks).scalar();
      break;
    }
    case Algorithm::RVP: {
      auto risks = env_risks(model, pvars, batches, training, rng);
      record_risks(risks);
      total = rescale_post_anneal(rvp_loss(risks, lam), cfg, state.step);
      penalty_val = std::sqrt(risk_variance(risks).scalar());
      break;
    }
    case Algorithm::IGA: {
      total = rescale_post_anneal(iga_loss(model, pvars, batches, lam), cfg,
                                  state.step);
      break;
    }
    case Algorithm::CORAL: {
      total = rescale_post_anneal(coral_loss(model, pvars, batches, lam), cfg,
                                  state.step);
      break;
    }
    case Algorithm::MLDG: {
      total = mldg_step(model, pvars, batches, cfg.mldg_alpha, cfg.mldg_gamma,
                        cfg.mldg_first_order, state.step);
      break;
    }
  }

  if (diag) {
    diag->env_risks = risk_vals;
    diag->penalty = penalty_val;
    diag->effective_lambda = lam;
    diag->total = total.scalar();
    diag->q = state.q;
  }
  return total;
}

std::vector<TrainSource> default_train_sources(const EnvironmentSuite& suite) {
  std::vector<TrainSource> out;
  for (const auto& name : suite.names_by_role(Role::Train))
    out.push_back({name, SplitKind::Train});
  return out;
}

TrainTrace train_model(PredictorModel& model, const EnvironmentSuite& suite,
                       const std::vector<TrainSource>& sources,
                       const TrainConfig& cfg, std::mt19937_64& rng,
                       const CheckpointScore& score) {
  if (sources.empty()) throw ConfigError("train_model: no training sources");
  TrainTrace trace;
  ObjectiveState state;
  AdamState adam;
  std::vector<Eigen::MatrixXd> best_params;

  // the untrained model is a restorable checkpoint: early stopping may
  // conclude that zero steps is best when the labels carry no signal
  if (score) {
    double s = score(model);
    trace.checkpoints.emplace_back(0, s);
    trace.best_score = s;
    trace.best_step = 0;
    best_params = model.params;
  }

  for (long step = 0; step < cfg.steps; ++step) {
    state.step = step;
    std::vector<Batch> batches;
    batches.reserve(sources.size());
    for (const auto& src : sources)
      batches.push_back(
          sample_batch(suite, src.env, src.split, cfg.batch_size, rng));

    auto pvars = make_param_vars(model);
    LossDiagnostics diag;
    Var loss;
    try {
      loss = objective_loss(model, pvars, batches, cfg.objective, state, true,
                            &rng, &diag);
    } catch (const NumericError&) {
      trace.diverged = true;
      break;
    }
    if (!std::isfinite(loss.scalar())) {
      trace.diverged = true;
      break;
    }

    auto gvars = ad::grad(loss, pvars);
    std::vector<Eigen::MatrixXd> grads;
    grads.reserve(gvars.size());
    bool finite = true;
    for (const auto& g : gvars) {
      finite = finite && g.val().allFinite();
      grads.push_back(g.val());
    }
    if (!finite) {
      trace.diverged = true;
      break;
    }
    adam_step(model, grads, cfg.adam, adam);

    trace.steps.push_back({step, diag.total, diag.env_risks, diag.penalty,
                           diag.effective_lambda});

    if (score && ((step + 1) % cfg.checkpoint_every == 0 || step + 1 == cfg.steps)) {
      double s = score(model);
      trace.checkpoints.emplace_back(step + 1, s);
      if (trace.best_step < 0 || s > trace.best_score) {
        trace.best_score = s;
        trace.best_step = step + 1;
        best_params = model.params;
      }
    }
  }

  if (score && trace.best_step >= 0) model.params = best_params;
  return trace;
}

}  // namespace dgbench
