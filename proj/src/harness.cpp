#include "dgbench/harness.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "dgbench/errors.hpp"

namespace dgbench {

namespace {

ConfigError bad_key(const std::string& path, const std::string& msg) {
  return ConfigError(path + ": " + msg);
}

double get_num(const json& j, const std::string& path, const std::string& key,
               double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw bad_key(path + "." + key, "expected a number");
  return j.at(key).get<double>();
}

long get_int(const json& j, const std::string& path, const std::string& key,
             long fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer())
    throw bad_key(path + "." + key, "expected an integer");
  return j.at(key).get<long>();
}

std::string get_str(const json& j, const std::string& path,
                    const std::string& key, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_string()) throw bad_key(path + "." + key, "expected a string");
  return j.at(key).get<std::string>();
}

}  // namespace

ExperimentConfig parse_config_json(const json& j) {
  ExperimentConfig cfg;

  if (!j.contains("suite") || !j.at("suite").is_object())
    throw bad_key("suite", "missing suite source");
  const json& suite = j.at("suite");
  int sources = suite.contains("synthetic") + suite.contains("dir") +
                suite.contains("cmnist");
  if (sources != 1)
    throw bad_key("suite", "exactly one of synthetic/dir/cmnist required");

  if (suite.contains("synthetic")) {
    const json& s = suite.at("synthetic");
    SyntheticSpec spec;
    spec.n_train_envs = int(get_int(s, "suite.synthetic", "n_train_envs", 3));
    spec.with_validation_env =
        s.value("with_validation_env", spec.with_validation_env);
    spec.examples_per_env =
        int(get_int(s, "suite.synthetic", "examples_per_env", 2000));
    spec.seq_len = int(get_int(s, "suite.synthetic", "seq_len", 0));
    spec.seq_cont_channels =
        int(get_int(s, "suite.synthetic", "seq_cont_channels", 0));
    spec.static_cont_channels =
        int(get_int(s, "suite.synthetic", "static_cont_channels", 6));
    spec.invariant_dim = int(get_int(s, "suite.synthetic", "invariant_dim", 3));
    spec.logit_scale = get_num(s, "suite.synthetic", "logit_scale", 2.0);
    spec.nuisance_strength =
        get_num(s, "suite.synthetic", "nuisance_strength", 1.0);
    if (spec.examples_per_env < 3)
      throw bad_key("suite.synthetic.examples_per_env", "too small");
    cfg.synthetic = spec;
  } else if (suite.contains("dir")) {
    cfg.suite_dir = suite.at("dir").get<std::string>();
    if (!std::filesystem::exists(cfg.suite_dir))
      throw bad_key("suite.dir", "no such directory: " + cfg.suite_dir);
  } else {
    const json& c = suite.at("cmnist");
    CmnistParams p;
    p.eta = get_num(c, "suite.cmnist", "eta", p.eta);
    p.beta = get_num(c, "suite.cmnist", "beta", p.beta);
    p.delta = get_num(c, "suite.cmnist", "delta", p.delta);
    p.n_train = int(get_int(c, "suite.cmnist", "n_train", p.n_train));
    p.n_test = int(get_int(c, "suite.cmnist", "n_test", p.n_test));
    p.side = int(get_int(c, "suite.cmnist", "side", p.side));
    p.pool = int(get_int(c, "suite.cmnist", "pool", 0));
    p.p_test = get_num(c, "suite.cmnist", "p_test", p.p_test);
    for (auto [name, v] : {std::pair<const char*, double>{"eta", p.eta},
                           {"beta", p.beta},
                           {"delta", p.delta},
                           {"p_test", p.p_test}})
      if (v < 0.0 || v > 1.0)
        throw RangeError("suite.cmnist." + std::string(name) +
                         ": must lie in [0,1]");
    cfg.cmnist = p;
  }

  if (j.contains("shift")) {
    const json& s = j.at("shift");
    cfg.shift = shift_kind_from_name(get_str(s, "shift", "kind", "Base"));
    cfg.shift_beta = get_num(s, "shift", "beta", cfg.shift_beta);
    cfg.shift_delta = get_num(s, "shift", "delta", cfg.shift_delta);
    cfg.shift_sigma = get_num(s, "shift", "sigma", cfg.shift_sigma);
    cfg.shift_feature_id =
        int(get_int(s, "shift", "feature_id", cfg.shift_feature_id));
    if (s.contains("mu")) {
      for (auto& [env, pair] : s.at("mu").items()) {
        if (!pair.is_array() || pair.size() != 2)
          throw bad_key("shift.mu." + env, "expected [mu1, mu0]");
        double mu1 = pair[0].get<double>(), mu0 = pair[1].get<double>();
        for (double m : {mu1, mu0})
          if (m <= 0.0 || m >= 1.0)
            throw RangeError("shift.mu." + env +
                             ": targets must lie strictly inside (0,1)");
        cfg.shift_mu[env] = {mu1, mu0};
      }
    }
    if ((cfg.shift == ShiftKind::BiasSampObs ||
         cfg.shift == ShiftKind::BiasSampUnobs) &&
        cfg.shift_mu.empty())
      throw bad_key("shift.mu", "biased subsampling needs per-env targets");
    if (cfg.shift == ShiftKind::ColoredMNIST)
      throw bad_key("shift.kind",
                    "colored digits are a suite source, not an applied shift");
  }

  cfg.standardize = j.value("standardize", !cfg.cmnist.has_value());

  if (j.contains("algorithms")) {
    cfg.algorithms.clear();
    if (!j.at("algorithms").is_array())
      throw bad_key("algorithms", "expected an array");
    for (const auto& a : j.at("algorithms")) {
      try {
        cfg.algorithms.push_back(algorithm_from_name(a.get<std::string>()));
      } catch (const ConfigError& e) {
        throw bad_key("algorithms", e.what());
      }
    }
    if (cfg.algorithms.empty()) throw bad_key("algorithms", "empty");
  }

  if (j.contains("selection")) {
    const json& s = j.at("selection");
    cfg.search.strategy.kind =
        selection_kind_from_name(get_str(s, "selection", "kind", "training_domains"));
    cfg.search.strategy.metric =
        selection_metric_from_name(get_str(s, "selection", "metric", "auroc"));
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    std::string fam = get_str(m, "model", "family", "mlp");
    if (fam == "mlp") cfg.search.model.family = ModelFamily::Mlp;
    else if (fam == "gru") cfg.search.model.family = ModelFamily::Gru;
    else throw bad_key("model.family", "expected mlp or gru");
    if (m.contains("hidden")) {
      cfg.search.model.hidden_sizes.clear();
      for (const auto& h : m.at("hidden"))
        cfg.search.model.hidden_sizes.push_back(h.get<int>());
    }
    cfg.search.model.gru_hidden =
        int(get_int(m, "model", "gru_hidden", cfg.search.model.gru_hidden));
    cfg.search.model.dropout = get_num(m, "model", "dropout", 0.0);
    cfg.search.model.embed_dim =
        int(get_int(m, "model", "embed_dim", cfg.search.model.embed_dim));
    std::string act = get_str(m, "model", "activation", "relu");
    if (act == "relu") cfg.search.model.activation = Activation::Relu;
    else if (act == "tanh") cfg.search.model.activation = Activation::Tanh;
    else throw bad_key("model.activation", "expected relu or tanh");
  }

  if (j.contains("train")) {
    const json& t = j.at("train");
    cfg.search.steps = get_int(t, "train", "steps", cfg.search.steps);
    cfg.search.batch_size =
        int(get_int(t, "train", "batch_size", cfg.search.batch_size));
    cfg.search.checkpoint_every =
        get_int(t, "train", "checkpoint_every", cfg.search.checkpoint_every);
    cfg.search.n_iters = int(get_int(t, "train", "n_iters", cfg.search.n_iters));
    cfg.search.repeats = int(get_int(t, "train", "repeats", cfg.search.repeats));
    cfg.search.mldg_gamma = get_num(t, "train", "mldg_gamma", 1.0);
    cfg.search.mldg_first_order = t.value("mldg_first_order", true);
    if (cfg.search.steps <= 0) throw bad_key("train.steps", "must be positive");
    if (cfg.search.repeats <= 0) throw bad_key("train.repeats", "must be positive");
  }

  if (j.contains("seeds")) {
    const json& s = j.at("seeds");
    cfg.search.seeds.data_seed = std::uint64_t(get_int(s, "seeds", "data", 1));
    cfg.search.seeds.model_seed = std::uint64_t(get_int(s, "seeds", "model", 2));
    cfg.search.seeds.search_seed = std::uint64_t(get_int(s, "seeds", "search", 3));
  }

  cfg.output_dir = get_str(j, "", "output_dir", "out");

  // normalized snapshot with all defaults made explicit
  json snap;
  if (cfg.synthetic) {
    const auto& s = *cfg.synthetic;
    snap["suite"]["synthetic"] = {{"n_train_envs", s.n_train_envs},
                                  {"with_validation_env", s.with_validation_env},
                                  {"examples_per_env", s.examples_per_env},
                                  {"seq_len", s.seq_len},
                                  {"seq_cont_channels", s.seq_cont_channels},
                                  {"static_cont_channels", s.static_cont_channels},
                                  {"invariant_dim", s.invariant_dim},
                                  {"logit_scale", s.logit_scale},
                                  {"nuisance_strength", s.nuisance_strength}};
  } else if (cfg.cmnist) {
    const auto& c = *cfg.cmnist;
    snap["suite"]["cmnist"] = {{"eta", c.eta},     {"beta", c.beta},
                               {"delta", c.delta}, {"n_train", c.n_train},
                               {"n_test", c.n_test}, {"side", c.side},
                               {"pool", c.pool},   {"p_test", c.p_test}};
  } else {
    snap["suite"]["dir"] = cfg.suite_dir;
  }
  snap["shift"] = {{"kind", shift_kind_name(cfg.shift)},
                   {"beta", cfg.shift_beta},
                   {"delta", cfg.shift_delta},
                   {"sigma", cfg.shift_sigma},
                   {"feature_id", cfg.shift_feature_id}};
  for (const auto& [env, mu] : cfg.shift_mu)
    snap["shift"]["mu"][env] = {mu.first, mu.second};
  snap["standardize"] = cfg.standardize;
  snap["algorithms"] = json::array();
  for (Algorithm a : cfg.algorithms)
    snap["algorithms"].push_back(algorithm_name(a));
  snap["selection"] = {{"kind", selection_kind_name(cfg.search.strategy.kind)},
                       {"metric", selection_metric_name(cfg.search.strategy.metric)}};
  snap["model"] = {
      {"family", cfg.search.model.family == ModelFamily::Mlp ? "mlp" : "gru"},
      {"hidden", cfg.search.model.hidden_sizes},
      {"gru_hidden", cfg.search.model.gru_hidden},
      {"dropout", cfg.search.model.dropout},
      {"embed_dim", cfg.search.model.embed_dim},
      {"activation",
       cfg.search.model.activation == Activation::Relu ? "relu" : "tanh"}};
  snap["train"] = {{"steps", cfg.search.steps},
                   {"batch_size", cfg.search.batch_size},
                   {"checkpoint_every", cfg.search.checkpoint_every},
                   {"n_iters", cfg.search.n_iters},
                   {"repeats", cfg.search.repeats},
                   {"splits", {0.7, 0.1, 0.2}}};
  snap["seeds"] = {{"data", cfg.search.seeds.data_seed},
                   {"model", cfg.search.seeds.model_seed},
                   {"search", cfg.search.seeds.search_seed}};
  snap["output_dir"] = cfg.output_dir;
  cfg.snapshot = snap;
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config_json(j);
}

std::uint64_t config_hash(const json& snapshot) {
  const std::string s = snapshot.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string run_key(const ExperimentConfig& cfg, const std::string& cell) {
  std::ostringstream os;
  os << std::hex << config_hash(cfg.snapshot) << ":" << cell;
  return os.str();
}

json record_to_json(const RunRecord& rec) {
  json j;
  j["algorithm"] = rec.algorithm;
  j["hparams"] = {{"lr", rec.hparams.lr},
                  {"lambda", rec.hparams.lambda},
                  {"dro_eta", rec.hparams.dro_eta},
                  {"mldg_alpha", rec.hparams.mldg_alpha},
                  {"anneal_step", rec.hparams.anneal_step}};
  j["seeds"] = {{"data", rec.seeds.data_seed},
                {"model", rec.seeds.model_seed},
                {"search", rec.seeds.search_seed}};
  j["repeat"] = rec.repeat;
  j["iter"] = rec.iter;
  j["selection"] = rec.selection;
  j["unrealistic_selection"] = rec.unrealistic_selection;
  j["checkpoints"] = json::array();
  for (auto& [step, score] : rec.checkpoints)
    j["checkpoints"].push_back({step, score});
  j["best_selection_score"] = rec.best_selection_score;
  j["test"] = {{"auroc", rec.test.auroc},
               {"accuracy", rec.test.accuracy},
               {"threshold", rec.test.threshold}};
  if (rec.test.fairness) {
    const auto& f = *rec.test.fairness;
    j["test"]["fairness"] = {
        {"tpr_gap", f.tpr_gap},
        {"tnr_gap", f.tnr_gap},
        {"mcc_pred_attr", f.mcc_pred_attr},
        {"threshold", f.threshold},
        {"counts",
         {{"g0", {f.counts[0].tp, f.counts[0].fp, f.counts[0].tn, f.counts[0].fn}},
          {"g1",
           {f.counts[1].tp, f.counts[1].fp, f.counts[1].tn, f.counts[1].fn}}}}};
  }
  j["diverged"] = rec.diverged;
  j["status"] = rec.status;
  j["wall_seconds"] = rec.wall_seconds;
  return j;
}

RunRecord record_from_json(const json& j) {
  RunRecord rec;
  rec.algorithm = j.at("algorithm").get<std::string>();
  const json& h = j.at("hparams");
  rec.hparams.lr = h.at("lr").get<double>();
  rec.hparams.lambda = h.at("lambda").get<double>();
  rec.hparams.dro_eta = h.at("dro_eta").get<double>();
  rec.hparams.mldg_alpha = h.at("mldg_alpha").get<double>();
  rec.hparams.anneal_step = h.at("anneal_step").get<long>();
  rec.seeds = {j.at("seeds").at("data").get<std::uint64_t>(),
               j.at("seeds").at("model").get<std::uint64_t>(),
               j.at("seeds").at("search").get<std::uint64_t>()};
  rec.repeat = j.at("repeat").get<int>();
  rec.iter = j.at("iter").get<int>();
  rec.selection = j.at("selection").get<std::string>();
  rec.unrealistic_selection = j.at("unrealistic_selection").get<bool>();
  for (const auto& c : j.at("checkpoints"))
    rec.checkpoints.emplace_back(c[0].get<long>(), c[1].get<double>());
  rec.best_selection_score = j.at("best_selection_score").get<double>();
  rec.test.auroc = j.at("test").at("auroc").get<double>();
  rec.test.accuracy = j.at("test").at("accuracy").get<double>();
  rec.test.threshold = j.at("test").at("threshold").get<double>();
  if (j.at("test").contains("fairness")) {
    const json& f = j.at("test").at("fairness");
    FairnessReport fr;
    fr.tpr_gap = f.at("tpr_gap").get<double>();
    fr.tnr_gap = f.at("tnr_gap").get<double>();
    fr.mcc_pred_attr = f.at("mcc_pred_attr").get<double>();
    fr.threshold = f.at("threshold").get<double>();
    for (int g = 0; g < 2; ++g) {
      const json& c = f.at("counts").at(g == 0 ? "g0" : "g1");
      fr.counts[size_t(g)] = {c[0].get<long>(), c[1].get<long>(),
                              c[2].get<long>(), c[3].get<long>()};
    }
    rec.test.fairness = fr;
  }
  rec.diverged = j.at("diverged").get<bool>();
  rec.status = j.at("status").get<std::string>();
  rec.wall_seconds = j.at("wall_seconds").get<double>();
  return rec;
}

RunStore::RunStore(const std::string& path) : path_(path) {
  std::ifstream in(path_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      entries_.push_back(json::parse(line));
    } catch (const json::parse_error&) {
      break;  // truncated tail from a crash; everything before it is intact
    }
  }
}

void RunStore::append(const json& entry) {
  {
    std::ofstream out(path_, std::ios::app);
    if (!out) throw DataError("cannot append to record store: " + path_);
    out << entry.dump() << "\n";
    out.flush();
  }
  entries_.push_back(entry);
}

std::vector<json> RunStore::by_key(const std::string& key) const {
  std::vector<json> out;
  for (const auto& e : entries_)
    if (e.value("key", "") == key) out.push_back(e);
  return out;
}

bool RunStore::cell_complete(const std::string& key) const {
  for (const auto& e : entries_)
    if (e.value("key", "") == key && e.value("kind", "") == "summary")
      return true;
  return false;
}

ShiftPlan make_shift_plan(const ExperimentConfig& cfg,
                          const EnvironmentSuite& suite) {
  switch (cfg.shift) {
    case ShiftKind::CorrLabel:
      return make_corrlabel_plan(suite, cfg.shift_beta, cfg.shift_delta);
    case ShiftKind::CorrNoise:
      return make_corrnoise_plan(suite, cfg.shift_beta, cfg.shift_delta, 0.0,
                                 -1.0, cfg.shift_sigma, cfg.shift_feature_id);
    case ShiftKind::BiasSampObs:
    case ShiftKind::BiasSampUnobs:
      return make_biassamp_plan(suite, cfg.shift == ShiftKind::BiasSampObs,
                                cfg.shift_mu);
    default:
      throw ConfigError("unsupported shift kind in experiment config");
  }
}

EnvironmentSuite build_suite(const ExperimentConfig& cfg,
                             const SeedBundle& seeds) {
  EnvironmentSuite suite;
  if (cfg.cmnist) {
    const auto& c = *cfg.cmnist;
    int pool = c.pool > 0 ? c.pool : 2 * c.n_train + c.n_test;
    auto digits = make_synthetic_digits(pool, c.side, seeds.data_seed ^ 0xd161ull);
    suite = generate_colored_mnist(c.eta, c.beta, c.delta, digits, seeds,
                                   c.n_train, c.n_test, c.p_test);
  } else if (cfg.synthetic) {
    suite = generate_synthetic_suite(*cfg.synthetic, seeds);
  } else {
    suite = load_suite(cfg.suite_dir);
    suite.seeds = seeds;
    std::mt19937_64 rng(seeds.data_seed ^ 0x5e5e5e5eull);
    for (auto& env : suite.environments)
      env = split_environment(std::move(env), SplitFractions{}, rng);
  }

  if (cfg.shift != ShiftKind::Base) {
    ShiftPlan plan = make_shift_plan(cfg, suite);
    std::mt19937_64 rng(seeds.data_seed ^ 0x54175417ull);
    auto [shifted, report] = apply_shift(suite, plan, rng);
    suite = std::move(shifted);
  }

  if (cfg.standardize && !cfg.cmnist) suite = standardize_suite(std::move(suite));
  return suite;
}

SuiteFactory make_suite_factory(const ExperimentConfig& cfg) {
  return [cfg](const SeedBundle& seeds) { return build_suite(cfg, seeds); };
}

namespace {

json summary_to_json(const TrialSummary& s) {
  json j;
  j["auroc"] = {{"mean", s.auroc.mean}, {"std", s.auroc.stdev}, {"n", s.auroc.n}};
  j["accuracy"] = {{"mean", s.accuracy.mean},
                   {"std", s.accuracy.stdev},
                   {"n", s.accuracy.n}};
  j["failed_repeats"] = s.failed_repeats;
  j["warning"] = s.warning;
  j["bests"] = json::array();
  for (const auto& rec : s.best_per_repeat) j["bests"].push_back(record_to_json(rec));
  return j;
}

TrialSummary summary_from_json(const json& j) {
  TrialSummary s;
  s.auroc = {j.at("auroc").at("mean").get<double>(),
             j.at("auroc").at("std").get<double>(),
             j.at("auroc").at("n").get<int>()};
  s.accuracy = {j.at("accuracy").at("mean").get<double>(),
                j.at("accuracy").at("std").get<double>(),
                j.at("accuracy").at("n").get<int>()};
  s.failed_repeats = j.at("failed_repeats").get<std::vector<int>>();
  s.warning = j.at("warning").get<std::string>();
  for (const auto& b : j.at("bests")) s.best_per_repeat.push_back(record_from_json(b));
  return s;
}

CellResult run_cell(const ExperimentConfig& cfg, const SearchConfig& sc,
                    const std::string& cell, RunStore& store) {
  CellResult out;
  out.cell = cell;
  const std::string key = run_key(cfg, cell);
  if (store.cell_complete(key)) {
    for (const auto& e : store.by_key(key))
      if (e.value("kind", "") == "summary")
        out.summary = summary_from_json(e.at("summary"));
    out.resumed = true;
    return out;
  }
  auto factory = make_suite_factory(cfg);
  out.summary = random_search(factory, sc, [&](const RunRecord& rec) {
    json e = record_to_json(rec);
    e["key"] = key;
    e["kind"] = "run";
    store.append(e);
  });
  json e;
  e["key"] = key;
  e["kind"] = "summary";
  e["cell"] = cell;
  e["config"] = cfg.snapshot;
  e["summary"] = summary_to_json(out.summary);
  store.append(e);
  return out;
}

}  // namespace

std::vector<CellResult> run_experiment(const ExperimentConfig& cfg,
                                       RunStore& store) {
  std::vector<CellResult> out;
  for (Algorithm algo : cfg.algorithms) {
    SearchConfig sc = cfg.search;
    sc.algo = algo;
    out.push_back(run_cell(cfg, sc, algorithm_name(algo), store));
  }
  return out;
}

std::vector<CellResult> sweep_lambda(const ExperimentConfig& cfg,
                                     const std::vector<double>& grid,
                                     RunStore& store) {
  if (grid.empty()) throw ConfigError("sweep_lambda: empty grid");
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());

  static const std::set<Algorithm> penalized = {
      Algorithm::IRM, Algorithm::VREx, Algorithm::RVP, Algorithm::IGA,
      Algorithm::CORAL};
  std::vector<CellResult> out;
  for (double lam : sorted) {
    for (Algorithm algo : cfg.algorithms) {
      if (!penalized.count(algo)) continue;
      SearchConfig sc = cfg.search;
      sc.algo = algo;
      sc.fixed_lambda = lam;
      std::ostringstream cell;
      cell << algorithm_name(algo) << "@lambda=" << lam;
      out.push_back(run_cell(cfg, sc, cell.str(), store));
    }
  }
  return out;
}

CmnistParam cmnist_param_from_name(const std::string& s) {
  if (s == "eta") return CmnistParam::Eta;
  if (s == "beta") return CmnistParam::Beta;
  if (s == "delta") return CmnistParam::Delta;
  throw ConfigError("unknown sweep parameter '" + s + "'; valid: eta beta delta");
}

std::vector<CmnistPoint> sweep_cmnist(const ExperimentConfig& cfg,
                                      CmnistParam param,
                                      const std::vector<double>& grid,
                                      const std::vector<SelectionKind>& strategies,
                                      RunStore& store) {
  if (!cfg.cmnist) throw ConfigError("sweep_cmnist needs a cmnist suite source");
  const char* pname = param == CmnistParam::Eta ? "eta"
                      : param == CmnistParam::Beta ? "beta"
                                                   : "delta";
  std::vector<CmnistPoint> out;
  for (double v : grid) {
    ExperimentConfig pc = cfg;
    auto& c = *pc.cmnist;
    if (param == CmnistParam::Eta) c.eta = v;
    else if (param == CmnistParam::Beta) c.beta = v;
    else c.delta = v;
    pc.snapshot = cfg.snapshot;
    pc.snapshot["suite"]["cmnist"][pname] = v;
    for (SelectionKind sk : strategies) {
      pc.snapshot["selection"]["kind"] = selection_kind_name(sk);
      for (Algorithm algo : cfg.algorithms) {
        SearchConfig sc = cfg.search;
        sc.algo = algo;
        sc.strategy.kind = sk;
        std::ostringstream cell;
        cell << pname << "=" << v << "/" << selection_kind_name(sk) << "/"
             << algorithm_name(algo);
        CellResult res = run_cell(pc, sc, cell.str(), store);
        out.push_back({v, sk, algorithm_name(algo), res.summary});
      }
    }
  }
  return out;
}

std::string emit_table(const std::vector<TableRow>& rows, bool with_unaug) {
  std::vector<std::string> cols = {"OracleID", "OracleMerged"};
  if (with_unaug) cols.push_back("ERM Unaug");
  for (const char* m :
       {"ERM", "GroupDRO", "IRM", "VREx", "RVP", "IGA", "CORAL", "MLDG"})
    cols.push_back(m);

  std::ostringstream os;
  os << "setting";
  for (const auto& c : cols) os << "\t" << c;
  os << "\n";
  for (const auto& row : rows) {
    // best non-oracle mean gets the star
    std::string best_col;
    double best_mean = -1.0;
    for (const auto& c : cols) {
      if (c == "OracleID" || c == "OracleMerged") continue;
      auto it = row.cells.find(c);
      if (it != row.cells.end() && it->second.mean > best_mean) {
        best_mean = it->second.mean;
        best_col = c;
      }
    }
    os << row.setting;
    for (const auto& c : cols) {
      auto it = row.cells.find(c);
      os << "\t";
      if (it == row.cells.end()) os << "-";
      else os << format_mean_std(it->second) << (c == best_col ? "*" : "");
    }
    os << "\n";
  }
  return os.str();
}

std::string emit_plot_data(
    const std::map<double, std::map<std::string, Aggregate>>& series) {
  std::set<std::string> methods;
  for (const auto& [x, cells] : series)
    for (const auto& [m, agg] : cells) methods.insert(m);

  std::ostringstream os;
  os << "x";
  for (const auto& m : methods) os << "\t" << m << "_mean\t" << m << "_std";
  os << "\n";
  os.setf(std::ios::fixed);
  os.precision(6);
  for (const auto& [x, cells] : series) {
    os << x;
    for (const auto& m : methods) {
      auto it = cells.find(m);
      if (it == cells.end()) os << "\tnan\tnan";
      else os << "\t" << it->second.mean << "\t" << it->second.stdev;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace dgbench
