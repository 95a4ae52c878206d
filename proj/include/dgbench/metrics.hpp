#pragma once

// Performance and fairness metrics: AUROC, accuracy, max-F1 thresholding,
// per-group confusion counts with TPR/TNR gaps, Matthews correlation, and
// run aggregation.

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <string>
#include <vector>

namespace dgbench {

struct ScoredSet {
  Eigen::VectorXd scores;  // in (0, 1)
  Eigen::VectorXi labels;  // {0, 1}
  Eigen::VectorXi group;   // {0, 1}; may be empty when no attribute applies
};

// probability a random positive outranks a random negative, ties counted 1/2
double auroc(const ScoredSet& s);

// unweighted mean over labels; single-class labels are skipped and reported
double mean_auroc_multilabel(const std::vector<ScoredSet>& per_label,
                             std::vector<int>* skipped = nullptr);

// threshold (prediction rule: score >= threshold) maximizing F1, chosen from
// the observed scores and their midpoints; F1 ties break toward the lowest
double max_f1_threshold(const ScoredSet& s);

struct ConfusionCounts {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  long total() const { return tp + fp + tn + fn; }
  double tpr() const;  // 0 when no positives
  double tnr() const;
};

ConfusionCounts confusion(const Eigen::VectorXd& scores,
                          const Eigen::VectorXi& labels, double threshold);

// counts per group value {0, 1}
std::array<ConfusionCounts, 2> group_confusion(const ScoredSet& s,
                                               double threshold);

// Matthews correlation of two binary vectors; 0 on a degenerate marginal
double mcc(const Eigen::VectorXi& pred, const Eigen::VectorXi& attr);

double accuracy(const ScoredSet& s, double threshold = 0.5);

struct FairnessReport {
  double threshold = 0.0;
  std::array<ConfusionCounts, 2> counts;  // index = group value
  double tpr_gap = 0.0;  // group 1 minus group 0
  double tnr_gap = 0.0;
  double mcc_pred_attr = 0.0;
};

// threshold defaults to the max-F1 threshold of s
FairnessReport fairness_report(const ScoredSet& s,
                               std::optional<double> threshold = std::nullopt);

struct Aggregate {
  double mean = 0.0;
  double stdev = 0.0;  // sample standard deviation; 0 for a single value
  int n = 0;
};

Aggregate aggregate_runs(const std::vector<double>& values);
std::string format_mean_std(const Aggregate& a);  // "0.400±0.141"

}  // namespace dgbench
