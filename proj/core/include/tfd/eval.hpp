#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Binary-classification metrics: confusion counts, precision/recall/F1/
// accuracy, and trapezoidal ROC/AUC. Faulty is the positive class; labels
// are ints with 1 = faulty, 0 = normal.

namespace tfd::eval {

struct ConfusionCounts {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t tn = 0;
  int64_t fn = 0;
  int64_t total() const { return tp + fp + tn + fn; }
};

// Prediction = faulty iff score >= threshold.
ConfusionCounts confusion(const std::vector<double>& scores,
                          const std::vector<int>& labels, double threshold = 0.5);

struct MetricsResult {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  // Zero-denominator cases report 0 with the matching flag cleared.
  bool precision_defined = true;
  bool recall_defined = true;
  bool f1_defined = true;
};

MetricsResult metrics(const ConfusionCounts& counts);

struct RocCurve {
  // Sorted by threshold descending: thresholds[0] = +inf gives (0,0) and the
  // final point is (1,1). FPR/TPR are componentwise non-decreasing.
  std::vector<double> thresholds;
  std::vector<double> fpr;
  std::vector<double> tpr;
  double auc = 0.0;
};

// Curve over all distinct score thresholds; AUC by the trapezoidal rule,
// which equals pairwise concordance with ties counted 1/2.
RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// CSV emitters. ROC rows are `threshold,fpr,tpr`; the metrics row follows
// the point metrics with AUC appended.
void write_roc_csv(const std::string& path, const RocCurve& curve);
void write_metrics_csv(const std::string& path, const std::string& variant,
                       const MetricsResult& m, double auc);

}  // namespace tfd::eval
