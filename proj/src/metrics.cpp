#include "dgbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

#include "dgbench/errors.hpp"

namespace dgbench {

namespace {

void check_scored(const ScoredSet& s) {
  if (s.scores.size() != s.labels.size())
    throw MetricError("scores and labels differ in length");
  if (s.group.size() != 0 && s.group.size() != s.scores.size())
    throw MetricError("group attribute length mismatch");
}

}  // namespace

double auroc(const ScoredSet& s) {
  check_scored(s);
  const auto n = s.scores.size();
  long n_pos = 0;
  for (Eigen::Index i = 0; i < n; ++i) n_pos += s.labels[i];
  const long n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw MetricError("AUROC undefined: only one class present");

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return s.scores[a] < s.scores[b];
  });

  // average ranks within tie groups, then sum ranks of positives
  double pos_rank_sum = 0.0;
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j < n && s.scores[order[j]] == s.scores[order[i]]) ++j;
    double avg_rank = 0.5 * double(i + 1 + j);  // ranks are 1-based
    for (Eigen::Index k = i; k < j; ++k)
      if (s.labels[order[k]]) pos_rank_sum += avg_rank;
    i = j;
  }
  return (pos_rank_sum - 0.5 * double(n_pos) * double(n_pos + 1)) /
         (double(n_pos) * double(n_neg));
}

double mean_auroc_multilabel(const std::vector<ScoredSet>& per_label,
                             std::vector<int>* skipped) {
  if (per_label.empty()) throw MetricError("no labels to average over");
  double sum = 0.0;
  int used = 0;
  for (size_t l = 0; l < per_label.size(); ++l) {
    try {
      sum += auroc(per_label[l]);
      ++used;
    } catch (const MetricError&) {
      if (skipped) skipped->push_back(int(l));
      std::cerr << "warning: label " << l << " has a single class, skipped\n";
    }
  }
  if (used == 0) throw MetricError("every label was single-class");
  return sum / used;
}

ConfusionCounts confusion(const Eigen::VectorXd& scores,
                          const Eigen::VectorXi& labels, double threshold) {
  ConfusionCounts c;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    bool pred = scores[i] >= threshold;
    bool pos = labels[i] != 0;
    if (pred && pos) ++c.tp;
    else if (pred && !pos) ++c.fp;
    else if (!pred && pos) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double ConfusionCounts::tpr() const {
  return tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn);
}

double ConfusionCounts::tnr() const {
  return tn + fp == 0 ? 0.0 : double(tn) / double(tn + fp);
}

double max_f1_threshold(const ScoredSet& s) {
  check_scored(s);
  if (s.labels.maxCoeff() == 0)
    throw MetricError("max-F1 threshold undefined: no positive labels");

  std::vector<double> sorted(s.scores.data(), s.scores.data() + s.scores.size());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  // lowest score predicts everything positive under the >= rule; midpoints
  // cover every other achievable split
  std::vector<double> candidates = {sorted.front()};
  for (size_t i = 0; i + 1 < sorted.size(); ++i)
    candidates.push_back(0.5 * (sorted[i] + sorted[i + 1]));

  double best_f1 = -1.0, best_thr = candidates.front();
  for (double thr : candidates) {
    ConfusionCounts c = confusion(s.scores, s.labels, thr);
    double denom = 2.0 * c.tp + c.fp + c.fn;
    double f1 = denom == 0.0 ? 0.0 : 2.0 * c.tp / denom;
    if (f1 > best_f1) {
      best_f1 = f1;
      best_thr = thr;
    }
  }
  return best_thr;
}

std::array<ConfusionCounts, 2> group_confusion(const ScoredSet& s,
                                               double threshold) {
  check_scored(s);
  if (s.group.size() == 0)
    throw MetricError("group confusion requires a group attribute");
  std::array<ConfusionCounts, 2> out;
  for (Eigen::Index i = 0; i < s.scores.size(); ++i) {
    int g = s.group[i];
    if (g != 0 && g != 1) throw MetricError("group attribute must be binary");
    bool pred = s.scores[i] >= threshold;
    bool pos = s.labels[i] != 0;
    ConfusionCounts& c = out[size_t(g)];
    if (pred && pos) ++c.tp;
    else if (pred && !pos) ++c.fp;
    else if (!pred && pos) ++c.fn;
    else ++c.tn;
  }
  return out;
}

double mcc(const Eigen::VectorXi& pred, const Eigen::VectorXi& attr) {
  if (pred.size() != attr.size()) throw MetricError("mcc: length mismatch");
  if (pred.size() == 0) throw MetricError("mcc: empty input");
  double tp = 0, fp = 0, tn = 0, fn = 0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    bool p = pred[i] != 0, a = attr[i] != 0;
    if (p && a) ++tp;
    else if (p && !a) ++fp;
    else if (!p && a) ++fn;
    else ++tn;
  }
  double denom =
      std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
  if (denom == 0.0) return 0.0;
  return (tp * tn - fp * fn) / denom;
}

double accuracy(const ScoredSet& s, double threshold) {
  check_scored(s);
  if (s.scores.size() == 0) throw MetricError("accuracy: empty input");
  long correct = 0;
  for (Eigen::Index i = 0; i < s.scores.size(); ++i)
    correct += (s.scores[i] >= threshold) == (s.labels[i] != 0);
  return double(correct) / double(s.scores.size());
}

FairnessReport fairness_report(const ScoredSet& s,
                               std::optional<double> threshold) {
  FairnessReport r;
  r.threshold = threshold ? *threshold : max_f1_threshold(s);
  r.counts = group_confusion(s, r.threshold);
  r.tpr_gap = r.counts[1].tpr() - r.counts[0].tpr();
  r.tnr_gap = r.counts[1].tnr() - r.counts[0].tnr();
  Eigen::VectorXi pred(s.scores.size());
  for (Eigen::Index i = 0; i < s.scores.size(); ++i)
    pred[i] = s.scores[i] >= r.threshold ? 1 : 0;
  r.mcc_pred_attr = mcc(pred, s.group);
  return r;
}

Aggregate aggregate_runs(const std::vector<double>& values) {
  if (values.empty()) throw MetricError("aggregate_runs: no values");
  Aggregate a;
  a.n = int(values.size());
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) / a.n;
  if (a.n == 1) {
    std::cerr << "warning: aggregating a single value, std is 0\n";
    return a;
  }
  double ss = 0.0;
  for (double v : values) ss += (v - a.mean) * (v - a.mean);
  a.stdev = std::sqrt(ss / (a.n - 1));
  return a;
}

std::string format_mean_std(const Aggregate& a) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  os << a.mean << "±" << a.stdev;
  return os.str();
}

}  // namespace dgbench
