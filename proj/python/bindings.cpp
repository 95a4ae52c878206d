#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dgbench/errors.hpp"
#include "dgbench/harness.hpp"

namespace py = pybind11;
using namespace dgbench;

namespace {

ScoredSet make_scored(const Eigen::VectorXd& scores,
                      const Eigen::VectorXi& labels,
                      const Eigen::VectorXi& group) {
  return {scores, labels, group};
}

py::dict fairness_dict(const FairnessReport& f) {
  py::dict d;
  d["threshold"] = f.threshold;
  d["tpr_gap"] = f.tpr_gap;
  d["tnr_gap"] = f.tnr_gap;
  d["mcc_pred_attr"] = f.mcc_pred_attr;
  for (int g = 0; g < 2; ++g) {
    py::dict c;
    const auto& cc = f.counts[size_t(g)];
    c["tp"] = cc.tp;
    c["fp"] = cc.fp;
    c["tn"] = cc.tn;
    c["fn"] = cc.fn;
    d[g == 0 ? "group0" : "group1"] = c;
  }
  return d;
}

py::dict summary_dict(const TrialSummary& s) {
  py::dict d;
  d["auroc_mean"] = s.auroc.mean;
  d["auroc_std"] = s.auroc.stdev;
  d["accuracy_mean"] = s.accuracy.mean;
  d["accuracy_std"] = s.accuracy.stdev;
  d["repeats"] = s.auroc.n;
  d["failed_repeats"] = s.failed_repeats;
  d["warning"] = s.warning;
  py::list bests;
  for (const auto& rec : s.best_per_repeat) {
    py::dict r;
    r["algorithm"] = rec.algorithm;
    r["lr"] = rec.hparams.lr;
    r["lambda"] = rec.hparams.lambda;
    r["selection_score"] = rec.best_selection_score;
    r["test_auroc"] = rec.test.auroc;
    r["test_accuracy"] = rec.test.accuracy;
    r["unrealistic_selection"] = rec.unrealistic_selection;
    bests.append(r);
  }
  d["bests"] = bests;
  return d;
}

}  // namespace

PYBIND11_MODULE(_dgbench, m) {
  m.doc() = "domain-generalization benchmark toolkit (C++ core)";

  m.def(
      "auroc",
      [](const Eigen::VectorXd& scores, const Eigen::VectorXi& labels) {
        return auroc(make_scored(scores, labels, {}));
      },
      py::arg("scores"), py::arg("labels"));

  m.def(
      "max_f1_threshold",
      [](const Eigen::VectorXd& scores, const Eigen::VectorXi& labels) {
        return max_f1_threshold(make_scored(scores, labels, {}));
      },
      py::arg("scores"), py::arg("labels"));

  m.def("mcc", &mcc, py::arg("pred"), py::arg("attr"));

  m.def(
      "accuracy",
      [](const Eigen::VectorXd& scores, const Eigen::VectorXi& labels,
         double threshold) {
        return accuracy(make_scored(scores, labels, {}), threshold);
      },
      py::arg("scores"), py::arg("labels"), py::arg("threshold") = 0.5);

  m.def(
      "fairness_report",
      [](const Eigen::VectorXd& scores, const Eigen::VectorXi& labels,
         const Eigen::VectorXi& group, py::object threshold) {
        std::optional<double> thr;
        if (!threshold.is_none()) thr = threshold.cast<double>();
        return fairness_dict(
            fairness_report(make_scored(scores, labels, group), thr));
      },
      py::arg("scores"), py::arg("labels"), py::arg("group"),
      py::arg("threshold") = py::none());

  m.def(
      "aggregate",
      [](const std::vector<double>& values) {
        Aggregate a = aggregate_runs(values);
        return py::make_tuple(a.mean, a.stdev);
      },
      py::arg("values"));

  m.def(
      "format_mean_std",
      [](double mean, double stdev) {
        return format_mean_std({mean, stdev, 0});
      },
      py::arg("mean"), py::arg("std"));

  m.def("subsample_probability", &subsample_probability, py::arg("y"),
        py::arg("mu"), py::arg("tau"));

  m.def("expand_beta_delta", &expand_beta_delta, py::arg("beta"),
        py::arg("delta"), py::arg("n_train_envs"));

  m.def(
      "validate_config",
      [](const std::string& config_json) {
        auto cfg = parse_config_json(json::parse(config_json));
        return cfg.snapshot.dump();
      },
      py::arg("config_json"),
      "parse and validate an experiment config, returning the normalized "
      "snapshot as a JSON string");

  m.def(
      "config_hash",
      [](const std::string& config_json) {
        auto cfg = parse_config_json(json::parse(config_json));
        return config_hash(cfg.snapshot);
      },
      py::arg("config_json"));

  m.def(
      "run_experiment",
      [](const std::string& config_json, const std::string& records_path) {
        auto cfg = parse_config_json(json::parse(config_json));
        RunStore store(records_path);
        py::dict out;
        for (const auto& cell : run_experiment(cfg, store))
          out[py::str(cell.cell)] = summary_dict(cell.summary);
        return out;
      },
      py::arg("config_json"), py::arg("records_path"),
      "run the full search protocol for every configured algorithm; results "
      "are persisted to records_path and resumable");

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<RangeError>(m, "RangeError", PyExc_ValueError);
  py::register_exception<MetricError>(m, "MetricError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
}
