#include "dgbench/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "dgbench/errors.hpp"

namespace dgbench {

using ad::Var;

namespace {

Batch assemble(const EnvironmentSuite& suite, const Environment& env,
               const std::vector<int>& rows) {
  Batch b;
  b.env = env.name;
  const Eigen::Index m = static_cast<Eigen::Index>(rows.size());

  auto take_d = [&](const Eigen::MatrixXd& src) {
    Eigen::MatrixXd dst(m, src.cols());
    for (Eigen::Index i = 0; i < m; ++i) dst.row(i) = src.row(rows[i]);
    return dst;
  };
  auto take_i = [&](const Eigen::MatrixXi& src) {
    Eigen::MatrixXi dst(m, src.cols());
    for (Eigen::Index i = 0; i < m; ++i) dst.row(i) = src.row(rows[i]);
    return dst;
  };

  for (const auto& mtx : env.seq_cont) b.seq_cont.push_back(take_d(mtx));
  for (const auto& mtx : env.seq_cat) b.seq_cat.push_back(take_i(mtx));
  b.static_cont = take_d(env.static_cont);
  b.static_cat = take_i(env.static_cat);
  b.labels = take_d(env.labels);
  b.group.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) b.group(i) = env.group(rows[i]);

  if (suite.schema.group_visible) {
    Eigen::MatrixXd wider(m, b.static_cont.cols() + 1);
    wider.leftCols(b.static_cont.cols()) = b.static_cont;
    for (Eigen::Index i = 0; i < m; ++i)
      wider(i, b.static_cont.cols()) = double(b.group(i));
    b.static_cont = std::move(wider);
  }
  return b;
}

}  // namespace

Batch make_batch(const EnvironmentSuite& suite, const std::string& env,
                 const std::vector<int>& rows) {
  return assemble(suite, suite.env(env), rows);
}

Batch sample_batch(const EnvironmentSuite& suite, const std::string& env,
                   SplitKind split, int batch_size, std::mt19937_64& rng) {
  const Environment& e = suite.env(env);
  const auto& idx = e.split(split);
  if (idx.empty()) throw DataError("empty split in environment " + env);
  suite.record_access(env, split);
  std::uniform_int_distribution<size_t> pick(0, idx.size() - 1);
  std::vector<int> rows(batch_size);
  for (int i = 0; i < batch_size; ++i) rows[i] = idx[pick(rng)];
  return assemble(suite, e, rows);
}

Batch full_split_batch(const EnvironmentSuite& suite, const std::string& env,
                       SplitKind split) {
  const Environment& e = suite.env(env);
  const auto& idx = e.split(split);
  if (idx.empty()) throw DataError("empty split in environment " + env);
  suite.record_access(env, split);
  return assemble(suite, e, idx);
}

Eigen::Index PredictorModel::n_scalar_params() const {
  Eigen::Index n = 0;
  for (const auto& p : params) n += p.size();
  return n;
}

Eigen::VectorXd PredictorModel::flat_params() const {
  Eigen::VectorXd theta(n_scalar_params());
  Eigen::Index at = 0;
  for (const auto& p : params) {
    theta.segment(at, p.size()) = Eigen::Map<const Eigen::VectorXd>(p.data(), p.size());
    at += p.size();
  }
  return theta;
}

void PredictorModel::set_flat_params(const Eigen::VectorXd& theta) {
  Eigen::Index at = 0;
  for (auto& p : params) {
    p = Eigen::Map<const Eigen::MatrixXd>(theta.data() + at, p.rows(), p.cols());
    at += p.size();
  }
}

namespace {

struct ParamBuilder {
  PredictorModel& model;
  std::mt19937_64 rng;
  std::normal_distribution<double> nd{0.0, 1.0};

  int weight(const std::string& name, int rows, int cols, double scale) {
    Eigen::MatrixXd w(rows, cols);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = scale * nd(rng);
    model.params.push_back(std::move(w));
    model.param_names.push_back(name);
    return static_cast<int>(model.params.size()) - 1;
  }
  int zeros(const std::string& name, int rows, int cols) {
    model.params.push_back(Eigen::MatrixXd::Zero(rows, cols));
    model.param_names.push_back(name);
    return static_cast<int>(model.params.size()) - 1;
  }
};

int model_input_width(const ModelSpec& spec, const FeatureSchema& schema) {
  int stat = schema.model_static_cont() +
             spec.embed_dim * static_cast<int>(schema.static_cat_card.size());
  if (spec.family == ModelFamily::Mlp)
    return stat + schema.seq_len * schema.seq_cont;  // sequences flattened
  return schema.seq_cont +
         spec.embed_dim * static_cast<int>(schema.seq_cat_card.size()) + stat;
}

}  // namespace

PredictorModel build_model(const ModelSpec& spec, const FeatureSchema& schema,
                           std::uint64_t seed) {
  if (spec.dropout < 0.0 || spec.dropout >= 1.0)
    throw ConfigError("dropout must lie in [0,1)");
  if (spec.family == ModelFamily::Gru && spec.gru_hidden <= 0)
    throw ConfigError("gru hidden size must be positive");
  if (spec.family == ModelFamily::Mlp && !schema.seq_cat_card.empty())
    throw ConfigError("mlp family does not support sequence categoricals");
  for (int h : spec.hidden_sizes)
    if (h <= 0) throw ConfigError("hidden sizes must be positive");
  if (spec.embed_dim <= 0) throw ConfigError("embed_dim must be positive");

  PredictorModel model;
  model.spec = spec;
  model.schema = schema;
  ParamBuilder pb{model, std::mt19937_64(seed)};

  for (size_t c = 0; c < schema.static_cat_card.size(); ++c)
    pb.weight("emb_static_" + std::to_string(c), schema.static_cat_card[c],
              spec.embed_dim, 0.1);
  if (spec.family == ModelFamily::Gru)
    for (size_t c = 0; c < schema.seq_cat_card.size(); ++c)
      pb.weight("emb_seq_" + std::to_string(c), schema.seq_cat_card[c],
                spec.embed_dim, 0.1);

  const int in = model_input_width(spec, schema);
  if (spec.family == ModelFamily::Mlp) {
    int width = in;
    for (size_t l = 0; l < spec.hidden_sizes.size(); ++l) {
      int h = spec.hidden_sizes[l];
      pb.weight("mlp_w" + std::to_string(l), width, h, 1.0 / std::sqrt(double(width)));
      pb.zeros("mlp_b" + std::to_string(l), 1, h);
      width = h;
    }
    model.feature_dim = width;
  } else {
    const int h = spec.gru_hidden;
    for (const char* g : {"z", "r", "h"}) {
      pb.weight(std::string("gru_w") + g, in, h, 1.0 / std::sqrt(double(in)));
      pb.weight(std::string("gru_u") + g, h, h, 1.0 / std::sqrt(double(h)));
      pb.zeros(std::string("gru_b") + g, 1, h);
    }
    model.feature_dim = h;
  }
  // zero head: untrained models emit logit 0 and score at base rate instead
  // of inheriting a random readout of whichever input channel dominates
  pb.zeros("cls_w", model.feature_dim, schema.n_labels);
  pb.zeros("cls_b", 1, schema.n_labels);
  return model;
}

std::vector<Var> make_param_vars(const PredictorModel& model) {
  std::vector<Var> pv;
  pv.reserve(model.params.size());
  for (const auto& p : model.params) pv.push_back(Var::leaf(p));
  return pv;
}

namespace {

int param_index(const PredictorModel& m, const std::string& name) {
  for (size_t i = 0; i < m.param_names.size(); ++i)
    if (m.param_names[i] == name) return static_cast<int>(i);
  throw ConfigError("model has no parameter " + name);
}

Var embed_cats(const PredictorModel& model, const std::vector<Var>& pv,
               const Eigen::MatrixXi& cats, const std::string& prefix, Var base) {
  for (Eigen::Index c = 0; c < cats.cols(); ++c) {
    std::vector<int> idx(cats.rows());
    for (Eigen::Index i = 0; i < cats.rows(); ++i) idx[i] = cats(i, c);
    Var e = ad::gather_rows(pv[param_index(model, prefix + std::to_string(c))], idx);
    base = base.defined() ? ad::hstack(base, e) : e;
  }
  return base;
}

Var activate(const ModelSpec& spec, const Var& x) {
  return spec.activation == Activation::Relu ? ad::relu(x) : ad::tanh_(x);
}

Var dropout_mask(const Var& x, double p, bool training, std::mt19937_64* rng) {
  if (!training || p <= 0.0) return x;
  if (!rng) throw ConfigError("training-mode forward needs an rng for dropout");
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  Eigen::MatrixXd mask(x.val().rows(), x.val().cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i)
    mask.data()[i] = ud(*rng) < p ? 0.0 : 1.0 / (1.0 - p);
  return ad::mul(x, Var::constant(std::move(mask)));
}

}  // namespace

ForwardResult forward(const PredictorModel& model, const std::vector<Var>& pv,
                      const Batch& batch, bool training, std::mt19937_64* rng) {
  const auto& spec = model.spec;
  Var stat = Var::constant(batch.static_cont);
  if (batch.static_cat.cols() > 0)
    stat = embed_cats(model, pv, batch.static_cat, "emb_static_", stat);

  Var features;
  if (spec.family == ModelFamily::Mlp) {
    Var x = stat;
    for (const auto& m : batch.seq_cont) x = ad::hstack(x, Var::constant(m));
    for (size_t l = 0; l < spec.hidden_sizes.size(); ++l) {
      Var z = ad::addrow(ad::matmul(x, pv[param_index(model, "mlp_w" + std::to_string(l))]),
                         pv[param_index(model, "mlp_b" + std::to_string(l))]);
      x = dropout_mask(activate(spec, z), spec.dropout, training, rng);
    }
    features = x;
  } else {
    const Eigen::Index B = batch.static_cont.rows();
    const int wz = param_index(model, "gru_wz"), uz = param_index(model, "gru_uz"),
              bz = param_index(model, "gru_bz");
    const int wr = param_index(model, "gru_wr"), ur = param_index(model, "gru_ur"),
              br = param_index(model, "gru_br");
    const int wh = param_index(model, "gru_wh"), uh = param_index(model, "gru_uh"),
              bh = param_index(model, "gru_bh");
    Var h = Var::constant(Eigen::MatrixXd::Zero(B, spec.gru_hidden));
    const size_t T = batch.seq_cont.size();
    Var ones = Var::constant(Eigen::MatrixXd::Ones(B, spec.gru_hidden));
    for (size_t t = 0; t < T; ++t) {
      Var xt = Var::constant(batch.seq_cont[t]);
      if (t < batch.seq_cat.size() && batch.seq_cat[t].cols() > 0)
        xt = embed_cats(model, pv, batch.seq_cat[t], "emb_seq_", xt);
      xt = ad::hstack(xt, stat);  // static features appended at each timestep
      Var z = ad::sigmoid(ad::addrow(
          ad::add(ad::matmul(xt, pv[wz]), ad::matmul(h, pv[uz])), pv[bz]));
      Var r = ad::sigmoid(ad::addrow(
          ad::add(ad::matmul(xt, pv[wr]), ad::matmul(h, pv[ur])), pv[br]));
      Var hc = ad::tanh_(ad::addrow(
          ad::add(ad::matmul(xt, pv[wh]), ad::matmul(ad::mul(r, h), pv[uh])), pv[bh]));
      h = ad::add(ad::mul(ad::sub(ones, z), h), ad::mul(z, hc));
    }
    features = dropout_mask(h, spec.dropout, training, rng);
  }

  ForwardResult out;
  out.features = features;
  out.logits = ad::addrow(ad::matmul(features, pv[param_index(model, "cls_w")]),
                          pv[param_index(model, "cls_b")]);
  return out;
}

Eigen::MatrixXd predict_logits(const PredictorModel& model, const Batch& batch) {
  auto pv = make_param_vars(model);
  return forward(model, pv, batch).logits.val();
}

Eigen::MatrixXd predict_proba(const PredictorModel& model, const Batch& batch) {
  Eigen::MatrixXd z = predict_logits(model, batch);
  return z.unaryExpr([](double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
}

void adam_step(PredictorModel& model, const std::vector<Eigen::MatrixXd>& grads,
               const AdamConfig& cfg, AdamState& state) {
  if (state.m.empty()) {
    for (const auto& p : model.params) {
      state.m.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
      state.v.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    }
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.t));
  for (size_t i = 0; i < model.params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i].array().matrix() +
                 (1.0 - cfg.beta2) * grads[i].cwiseProduct(grads[i]);
    Eigen::ArrayXXd mhat = state.m[i].array() / bc1;
    Eigen::ArrayXXd vhat = state.v[i].array() / bc2;
    model.params[i].array() -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
  }
}

namespace {

void wr_u64(std::ofstream& f, std::uint64_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint64_t rd_u64(std::ifstream& f) {
  std::uint64_t v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
void wr_d(std::ofstream& f, double v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
double rd_d(std::ifstream& f) {
  double v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
void wr_str(std::ofstream& f, const std::string& s) {
  wr_u64(f, s.size());
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string rd_str(std::ifstream& f) {
  std::string s(rd_u64(f), '\0');
  f.read(s.data(), static_cast<std::streamsize>(s.size()));
  return s;
}
void wr_ivec(std::ofstream& f, const std::vector<int>& v) {
  wr_u64(f, v.size());
  for (int x : v) wr_u64(f, static_cast<std::uint64_t>(x));
}
std::vector<int> rd_ivec(std::ifstream& f) {
  std::vector<int> v(rd_u64(f));
  for (auto& x : v) x = static_cast<int>(rd_u64(f));
  return v;
}

constexpr std::uint64_t kModelMagic = 0x44474d444c303100ull;

}  // namespace

void save_model(const PredictorModel& model, const SeedBundle& seeds,
                const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  wr_u64(f, kModelMagic);
  wr_u64(f, seeds.data_seed);
  wr_u64(f, seeds.model_seed);
  wr_u64(f, seeds.search_seed);
  wr_u64(f, model.spec.family == ModelFamily::Mlp ? 0 : 1);
  wr_ivec(f, model.spec.hidden_sizes);
  wr_u64(f, model.spec.gru_hidden);
  wr_d(f, model.spec.dropout);
  wr_u64(f, model.spec.embed_dim);
  wr_u64(f, model.spec.activation == Activation::Relu ? 0 : 1);
  wr_u64(f, model.schema.seq_len);
  wr_u64(f, model.schema.seq_cont);
  wr_ivec(f, model.schema.seq_cat_card);
  wr_u64(f, model.schema.static_cont);
  wr_ivec(f, model.schema.static_cat_card);
  wr_u64(f, model.schema.n_labels);
  wr_u64(f, model.schema.group_visible ? 1 : 0);
  wr_u64(f, model.feature_dim);
  wr_u64(f, model.params.size());
  for (size_t i = 0; i < model.params.size(); ++i) {
    wr_str(f, model.param_names[i]);
    wr_u64(f, model.params[i].rows());
    wr_u64(f, model.params[i].cols());
    f.write(reinterpret_cast<const char*>(model.params[i].data()),
            static_cast<std::streamsize>(sizeof(double) * model.params[i].size()));
  }
}

PredictorModel load_model(const std::string& path, SeedBundle* seeds) {
  std::ifstream f(path, std::ios::binary);
  if (!f || rd_u64(f) != kModelMagic) throw DataError("bad model file " + path);
  SeedBundle sb;
  sb.data_seed = rd_u64(f);
  sb.model_seed = rd_u64(f);
  sb.search_seed = rd_u64(f);
  if (seeds) *seeds = sb;
  PredictorModel m;
  m.spec.family = rd_u64(f) == 0 ? ModelFamily::Mlp : ModelFamily::Gru;
  m.spec.hidden_sizes = rd_ivec(f);
  m.spec.gru_hidden = static_cast<int>(rd_u64(f));
  m.spec.dropout = rd_d(f);
  m.spec.embed_dim = static_cast<int>(rd_u64(f));
  m.spec.activation = rd_u64(f) == 0 ? Activation::Relu : Activation::Tanh;
  m.schema.seq_len = static_cast<int>(rd_u64(f));
  m.schema.seq_cont = static_cast<int>(rd_u64(f));
  m.schema.seq_cat_card = rd_ivec(f);
  m.schema.static_cont = static_cast<int>(rd_u64(f));
  m.schema.static_cat_card = rd_ivec(f);
  m.schema.n_labels = static_cast<int>(rd_u64(f));
  m.schema.group_visible = rd_u64(f) != 0;
  m.feature_dim = static_cast<int>(rd_u64(f));
  size_t np = rd_u64(f);
  for (size_t i = 0; i < np; ++i) {
    m.param_names.push_back(rd_str(f));
    auto r = rd_u64(f), c = rd_u64(f);
    Eigen::MatrixXd p(r, c);
    f.read(reinterpret_cast<char*>(p.data()),
           static_cast<std::streamsize>(sizeof(double) * p.size()));
    m.params.push_back(std::move(p));
  }
  return m;
}

}  // namespace dgbench
