#include "dgbench/envdata.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "dgbench/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dgbench {

std::string role_name(Role r) {
  switch (r) {
    case Role::Train: return "train";
    case Role::Validation: return "validation";
    case Role::Test: return "test";
  }
  return "?";
}

Role role_from_name(const std::string& s) {
  if (s == "train") return Role::Train;
  if (s == "validation") return Role::Validation;
  if (s == "test") return Role::Test;
  throw ConfigError("unknown role: " + s);
}

Example Environment::example(Eigen::Index i) const {
  Example ex;
  const Eigen::Index T = static_cast<Eigen::Index>(seq_cont.size());
  if (T > 0) {
    ex.sequence_features.resize(T, seq_cont[0].cols());
    for (Eigen::Index t = 0; t < T; ++t)
      ex.sequence_features.row(t) = seq_cont[t].row(i);
  }
  const Eigen::Index Tc = static_cast<Eigen::Index>(seq_cat.size());
  if (Tc > 0) {
    ex.sequence_categoricals.resize(Tc, seq_cat[0].cols());
    for (Eigen::Index t = 0; t < Tc; ++t)
      ex.sequence_categoricals.row(t) = seq_cat[t].row(i);
  }
  ex.static_continuous = static_cont.row(i);
  ex.static_categoricals = static_cat.row(i);
  ex.label = labels.row(i);
  ex.group_attribute = group.size() > 0 ? group(i) : 0;
  return ex;
}

const std::vector<int>& Environment::split(SplitKind k) const {
  switch (k) {
    case SplitKind::Train: return train_idx;
    case SplitKind::Val: return val_idx;
    case SplitKind::Test: return test_idx;
  }
  return train_idx;
}

Environment Environment::subset(const std::vector<int>& keep) const {
  Environment out;
  out.name = name;
  const Eigen::Index m = static_cast<Eigen::Index>(keep.size());
  auto take_d = [&](const Eigen::MatrixXd& src) {
    Eigen::MatrixXd dst(m, src.cols());
    for (Eigen::Index i = 0; i < m; ++i) dst.row(i) = src.row(keep[i]);
    return dst;
  };
  auto take_i = [&](const Eigen::MatrixXi& src) {
    Eigen::MatrixXi dst(m, src.cols());
    for (Eigen::Index i = 0; i < m; ++i) dst.row(i) = src.row(keep[i]);
    return dst;
  };
  for (const auto& mtx : seq_cont) out.seq_cont.push_back(take_d(mtx));
  for (const auto& mtx : seq_cat) out.seq_cat.push_back(take_i(mtx));
  out.static_cont = take_d(static_cont);
  out.static_cat = take_i(static_cat);
  out.labels = take_d(labels);
  out.group.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) out.group(i) = group(keep[i]);

  // renumber split membership
  std::vector<int> newpos(labels.rows(), -1);
  for (Eigen::Index i = 0; i < m; ++i) newpos[keep[i]] = static_cast<int>(i);
  auto remap = [&](const std::vector<int>& idx) {
    std::vector<int> r;
    for (int i : idx)
      if (newpos[i] >= 0) r.push_back(newpos[i]);
    return r;
  };
  out.train_idx = remap(train_idx);
  out.val_idx = remap(val_idx);
  out.test_idx = remap(test_idx);
  return out;
}

int AccessAudit::reads_before_final(const std::string& env) const {
  int n = 0;
  for (const auto& e : events)
    if (e.env == env && !e.after_finalize) ++n;
  return n;
}

const Environment& EnvironmentSuite::env(const std::string& name) const {
  for (const auto& e : environments)
    if (e.name == name) return e;
  throw ConfigError("no environment named " + name);
}

Environment& EnvironmentSuite::env(const std::string& name) {
  for (auto& e : environments)
    if (e.name == name) return e;
  throw ConfigError("no environment named " + name);
}

const Environment& EnvironmentSuite::test_env() const {
  for (const auto& e : environments)
    if (roles.at(e.name) == Role::Test) return e;
  throw ConfigError("suite has no test environment");
}

std::vector<const Environment*> EnvironmentSuite::by_role(Role r) const {
  std::vector<const Environment*> out;
  for (const auto& e : environments)
    if (roles.at(e.name) == r) out.push_back(&e);
  return out;
}

std::vector<std::string> EnvironmentSuite::names_by_role(Role r) const {
  std::vector<std::string> out;
  for (const auto& e : environments)
    if (roles.at(e.name) == r) out.push_back(e.name);
  return out;
}

namespace {

void check_env_schema(const Environment& e, const FeatureSchema& s) {
  auto fail = [&](const std::string& what) {
    throw SchemaError("environment " + e.name + ": " + what);
  };
  if (static_cast<int>(e.seq_cont.size()) != (s.seq_cont > 0 ? s.seq_len : 0) &&
      !(s.seq_cont == 0 && e.seq_cont.empty()))
    fail("sequence length mismatch");
  for (const auto& m : e.seq_cont)
    if (m.cols() != s.seq_cont) fail("sequence channel count mismatch");
  for (const auto& m : e.seq_cat)
    if (m.cols() != static_cast<Eigen::Index>(s.seq_cat_card.size()))
      fail("sequence categorical count mismatch");
  if (e.static_cont.cols() != s.static_cont) fail("static feature count mismatch");
  if (e.static_cat.cols() != static_cast<Eigen::Index>(s.static_cat_card.size()))
    fail("static categorical count mismatch");
  if (e.labels.cols() != s.n_labels) fail("label width mismatch");
  if (e.labels.rows() != e.static_cont.rows()) fail("row count mismatch");
}

}  // namespace

EnvironmentSuite build_environment_suite(std::vector<Environment> envs,
                                         std::map<std::string, Role> roles,
                                         const FeatureSchema& schema) {
  int n_train = 0, n_test = 0, n_val = 0;
  for (const auto& e : envs) {
    auto it = roles.find(e.name);
    if (it == roles.end())
      throw ConfigError("no role assigned for environment " + e.name);
    switch (it->second) {
      case Role::Train: ++n_train; break;
      case Role::Validation: ++n_val; break;
      case Role::Test: ++n_test; break;
    }
  }
  if (n_train < 2)
    throw ConfigError("need at least 2 training environments, got " +
                      std::to_string(n_train));
  if (n_test != 1)
    throw ConfigError("need exactly 1 test environment, got " +
                      std::to_string(n_test));
  if (n_val > 1)
    throw ConfigError("at most 1 validation environment allowed");
  for (const auto& e : envs) check_env_schema(e, schema);

  EnvironmentSuite suite;
  suite.environments = std::move(envs);
  suite.roles = std::move(roles);
  suite.schema = schema;
  return suite;
}

Environment split_environment(Environment env, const SplitFractions& f,
                              std::mt19937_64& rng) {
  const Eigen::Index n = env.size();
  if (n == 0) throw DataError("cannot split empty environment " + env.name);
  if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1");
  if (n < 3) throw DataError("environment too small to split: " + env.name);

  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);

  auto n_train = static_cast<size_t>(std::llround(f.train * double(n)));
  auto n_val = static_cast<size_t>(std::llround(f.val * double(n)));
  n_train = std::min(n_train, static_cast<size_t>(n));
  n_val = std::min(n_val, static_cast<size_t>(n) - n_train);

  env.train_idx.assign(idx.begin(), idx.begin() + n_train);
  env.val_idx.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  env.test_idx.assign(idx.begin() + n_train + n_val, idx.end());
  return env;
}

Standardizer fit_standardizer(const EnvironmentSuite& suite) {
  Standardizer s;
  const auto& schema = suite.schema;
  auto trains = suite.by_role(Role::Train);

  auto fit = [&](int channels, auto&& value_of, Eigen::VectorXd& mean,
                 Eigen::VectorXd& scale, const std::string& tag) {
    mean = Eigen::VectorXd::Zero(channels);
    scale = Eigen::VectorXd::Ones(channels);
    if (channels == 0) return;
    for (int c = 0; c < channels; ++c) {
      double sum = 0, sumsq = 0;
      long count = 0;
      for (const auto* e : trains)
        for (int i : e->train_idx)
          value_of(*e, i, c, [&](double v) { sum += v; sumsq += v * v; ++count; });
      if (count == 0) continue;
      double m = sum / double(count);
      double var = sumsq / double(count) - m * m;
      mean[c] = m;
      if (var > 1e-12)
        scale[c] = std::sqrt(var);
      else
        s.warnings.push_back("zero-variance " + tag + " channel " + std::to_string(c));
    }
  };

  fit(schema.static_cont,
      [](const Environment& e, int i, int c, auto&& acc) { acc(e.static_cont(i, c)); },
      s.static_mean, s.static_scale, "static");
  fit(schema.seq_cont,
      [](const Environment& e, int i, int c, auto&& acc) {
        for (const auto& m : e.seq_cont) acc(m(i, c));
      },
      s.seq_mean, s.seq_scale, "sequence");
  return s;
}

Environment apply_standardizer(const Standardizer& s, Environment env) {
  for (Eigen::Index c = 0; c < s.static_mean.size(); ++c)
    env.static_cont.col(c) =
        (env.static_cont.col(c).array() - s.static_mean[c]) / s.static_scale[c];
  for (auto& m : env.seq_cont)
    for (Eigen::Index c = 0; c < s.seq_mean.size(); ++c)
      m.col(c) = (m.col(c).array() - s.seq_mean[c]) / s.seq_scale[c];
  return env;
}

EnvironmentSuite standardize_suite(EnvironmentSuite suite) {
  Standardizer s = fit_standardizer(suite);
  for (auto& e : suite.environments) e = apply_standardizer(s, std::move(e));
  return suite;
}

EnvironmentSuite generate_synthetic_suite(const SyntheticSpec& spec,
                                          const SeedBundle& seeds) {
  if (spec.examples_per_env <= 0)
    throw ConfigError("examples_per_env must be positive");
  if (spec.invariant_dim <= 0 || spec.invariant_dim > spec.static_cont_channels)
    throw ConfigError("invariant_dim must be in [1, static_cont_channels]");

  FeatureSchema schema;
  schema.seq_len = spec.seq_cont_channels > 0 ? spec.seq_len : 0;
  schema.seq_cont = spec.seq_cont_channels;
  schema.static_cont = spec.static_cont_channels;
  schema.n_labels = 1;

  std::mt19937_64 wrng(seeds.data_seed ^ 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd w(spec.invariant_dim);
  for (int i = 0; i < spec.invariant_dim; ++i) w[i] = nd(wrng);
  w.normalize();

  const int n_envs = spec.n_train_envs + (spec.with_validation_env ? 1 : 0) + 1;
  std::vector<Environment> envs;
  std::map<std::string, Role> roles;

  for (int e = 0; e < n_envs; ++e) {
    std::mt19937_64 rng(seeds.data_seed + 0x51ed2701ull * (e + 1));
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> ud(0.0, 1.0);

    Environment env;
    bool is_train = e < spec.n_train_envs;
    bool is_val = spec.with_validation_env && e == spec.n_train_envs;
    env.name = is_train ? "env" + std::to_string(e + 1) : (is_val ? "val" : "test");
    roles[env.name] = is_train ? Role::Train : (is_val ? Role::Validation : Role::Test);

    // nuisance channels shift by an env-specific offset; train envs get
    // symmetric offsets around zero, val/test sit at zero
    double offset = 0.0;
    if (is_train)
      offset = spec.nuisance_strength *
               (double(e) - (double(spec.n_train_envs) - 1.0) / 2.0);

    const int n = spec.examples_per_env;
    env.static_cont.resize(n, spec.static_cont_channels);
    env.labels.resize(n, 1);
    env.group.resize(n);
    env.static_cat.resize(n, 0);
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd xinv(spec.invariant_dim);
      for (int c = 0; c < spec.invariant_dim; ++c) xinv[c] = noise(rng);
      double p = 1.0 / (1.0 + std::exp(-spec.logit_scale * w.dot(xinv)));
      double y = ud(rng) < p ? 1.0 : 0.0;
      for (int c = 0; c < spec.invariant_dim; ++c) env.static_cont(i, c) = xinv[c];
      for (int c = spec.invariant_dim; c < spec.static_cont_channels; ++c)
        env.static_cont(i, c) = offset + noise(rng);
      env.labels(i, 0) = y;
      env.group(i) = ud(rng) < spec.group_base_rate ? 1 : 0;
    }

    if (schema.seq_cont > 0) {
      for (int t = 0; t < schema.seq_len; ++t) {
        Eigen::MatrixXd m(n, schema.seq_cont);
        for (int i = 0; i < n; ++i) {
          double sig = w.dot(env.static_cont.row(i).head(spec.invariant_dim));
          for (int c = 0; c < schema.seq_cont; ++c)
            m(i, c) = 0.5 * sig + noise(rng);
        }
        env.seq_cont.push_back(std::move(m));
      }
    }

    std::mt19937_64 srng(seeds.data_seed + 0xabcd1234ull * (e + 1));
    env = split_environment(std::move(env), SplitFractions{}, srng);
    envs.push_back(std::move(env));
  }

  EnvironmentSuite suite = build_environment_suite(std::move(envs), std::move(roles), schema);
  suite.seeds = seeds;
  return suite;
}

// ---------------------------------------------------------------------------
// serialization: manifest.json + one binary columnar file per environment

namespace {

void write_u64(std::ofstream& f, std::uint64_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint64_t read_u64(std::ifstream& f) {
  std::uint64_t v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
void write_matd(std::ofstream& f, const Eigen::MatrixXd& m) {
  write_u64(f, m.rows());
  write_u64(f, m.cols());
  f.write(reinterpret_cast<const char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * m.size()));
}
Eigen::MatrixXd read_matd(std::ifstream& f) {
  auto r = read_u64(f), c = read_u64(f);
  Eigen::MatrixXd m(r, c);
  f.read(reinterpret_cast<char*>(m.data()),
         static_cast<std::streamsize>(sizeof(double) * m.size()));
  return m;
}
void write_mati(std::ofstream& f, const Eigen::MatrixXi& m) {
  write_u64(f, m.rows());
  write_u64(f, m.cols());
  f.write(reinterpret_cast<const char*>(m.data()),
          static_cast<std::streamsize>(sizeof(int) * m.size()));
}
Eigen::MatrixXi read_mati(std::ifstream& f) {
  auto r = read_u64(f), c = read_u64(f);
  Eigen::MatrixXi m(r, c);
  f.read(reinterpret_cast<char*>(m.data()),
         static_cast<std::streamsize>(sizeof(int) * m.size()));
  return m;
}
void write_ivec(std::ofstream& f, const std::vector<int>& v) {
  write_u64(f, v.size());
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(sizeof(int) * v.size()));
}
std::vector<int> read_ivec(std::ifstream& f) {
  std::vector<int> v(read_u64(f));
  f.read(reinterpret_cast<char*>(v.data()),
         static_cast<std::streamsize>(sizeof(int) * v.size()));
  return v;
}

constexpr std::uint64_t kEnvMagic = 0x4447424e56303100ull;  // "DGBNV01"

}  // namespace

void save_suite(const EnvironmentSuite& suite, const std::string& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "dgbench-suite-v1";
  manifest["seeds"] = {{"data_seed", suite.seeds.data_seed},
                       {"model_seed", suite.seeds.model_seed},
                       {"search_seed", suite.seeds.search_seed}};
  json sj;
  sj["seq_len"] = suite.schema.seq_len;
  sj["seq_cont"] = suite.schema.seq_cont;
  sj["seq_cat_card"] = suite.schema.seq_cat_card;
  sj["static_cont"] = suite.schema.static_cont;
  sj["static_cat_card"] = suite.schema.static_cat_card;
  sj["n_labels"] = suite.schema.n_labels;
  sj["group_visible"] = suite.schema.group_visible;
  manifest["schema"] = sj;

  json envs = json::array();
  for (const auto& e : suite.environments) {
    std::string file = e.name + ".bin";
    envs.push_back({{"name", e.name},
                    {"role", role_name(suite.roles.at(e.name))},
                    {"file", file}});
    std::ofstream f(fs::path(dir) / file, std::ios::binary);
    write_u64(f, kEnvMagic);
    write_u64(f, e.seq_cont.size());
    for (const auto& m : e.seq_cont) write_matd(f, m);
    write_u64(f, e.seq_cat.size());
    for (const auto& m : e.seq_cat) write_mati(f, m);
    write_matd(f, e.static_cont);
    write_mati(f, e.static_cat);
    write_matd(f, e.labels);
    Eigen::MatrixXi g = e.group;
    write_mati(f, g);
    write_ivec(f, e.train_idx);
    write_ivec(f, e.val_idx);
    write_ivec(f, e.test_idx);
  }
  manifest["environments"] = envs;
  std::ofstream mf(fs::path(dir) / "manifest.json");
  mf << manifest.dump(2) << "\n";
}

EnvironmentSuite load_suite(const std::string& dir) {
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw DataError("no manifest.json in " + dir);
  json manifest = json::parse(mf);

  EnvironmentSuite suite;
  const auto& sj = manifest.at("schema");
  suite.schema.seq_len = sj.at("seq_len");
  suite.schema.seq_cont = sj.at("seq_cont");
  suite.schema.seq_cat_card = sj.at("seq_cat_card").get<std::vector<int>>();
  suite.schema.static_cont = sj.at("static_cont");
  suite.schema.static_cat_card = sj.at("static_cat_card").get<std::vector<int>>();
  suite.schema.n_labels = sj.at("n_labels");
  suite.schema.group_visible = sj.at("group_visible");
  suite.seeds.data_seed = manifest.at("seeds").at("data_seed");
  suite.seeds.model_seed = manifest.at("seeds").at("model_seed");
  suite.seeds.search_seed = manifest.at("seeds").at("search_seed");

  for (const auto& ej : manifest.at("environments")) {
    std::ifstream f(fs::path(dir) / ej.at("file").get<std::string>(),
                    std::ios::binary);
    if (!f) throw DataError("missing environment file in " + dir);
    if (read_u64(f) != kEnvMagic) throw DataError("bad environment file magic");
    Environment e;
    e.name = ej.at("name");
    auto nt = read_u64(f);
    for (std::uint64_t t = 0; t < nt; ++t) e.seq_cont.push_back(read_matd(f));
    auto ntc = read_u64(f);
    for (std::uint64_t t = 0; t < ntc; ++t) e.seq_cat.push_back(read_mati(f));
    e.static_cont = read_matd(f);
    e.static_cat = read_mati(f);
    e.labels = read_matd(f);
    Eigen::MatrixXi g = read_mati(f);
    e.group = g;
    e.train_idx = read_ivec(f);
    e.val_idx = read_ivec(f);
    e.test_idx = read_ivec(f);
    suite.roles[e.name] = role_from_name(ej.at("role"));
    suite.environments.push_back(std::move(e));
  }
  return suite;
}

}  // namespace dgbench
