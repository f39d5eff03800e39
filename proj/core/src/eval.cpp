#include "tfd/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "tfd/error.hpp"

namespace tfd::eval {

namespace {

void check_inputs(const std::vector<double>& scores, const std::vector<int>& labels) {
  require(scores.size() == labels.size(), ErrorKind::Invalid,
          "scores and labels differ in length (" + std::to_string(scores.size()) +
              " vs " + std::to_string(labels.size()) + ")");
  for (double s : scores)
    require(std::isfinite(s) && s >= 0.0 && s <= 1.0, ErrorKind::Invalid,
            "score outside [0, 1]");
  for (int l : labels)
    require(l == 0 || l == 1, ErrorKind::Invalid, "label must be 0 or 1");
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

ConfusionCounts confusion(const std::vector<double>& scores,
                          const std::vector<int>& labels, double threshold) {
  check_inputs(scores, labels);
  ConfusionCounts c;
  for (size_t i = 0; i < scores.size(); ++i) {
    const bool pred_faulty = scores[i] >= threshold;
    if (labels[i] == 1)
      (pred_faulty ? c.tp : c.fn)++;
    else
      (pred_faulty ? c.fp : c.tn)++;
  }
  return c;
}

MetricsResult metrics(const ConfusionCounts& c) {
  require(c.tp >= 0 && c.fp >= 0 && c.tn >= 0 && c.fn >= 0, ErrorKind::Invalid,
          "confusion counts must be non-negative");
  require(c.total() > 0, ErrorKind::Invalid, "metrics: no evaluated items");
  MetricsResult m;
  if (c.tp + c.fp > 0)
    m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  else
    m.precision_defined = false;
  if (c.tp + c.fn > 0)
    m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  else
    m.recall_defined = false;
  if (m.precision_defined && m.recall_defined && m.precision + m.recall > 0)
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  else
    m.f1_defined = false;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  return m;
}

RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_inputs(scores, labels);
  const int64_t n_pos = std::count(labels.begin(), labels.end(), 1);
  const int64_t n_neg = static_cast<int64_t>(labels.size()) - n_pos;
  require(n_pos > 0 && n_neg > 0, ErrorKind::Invalid,
          "roc_auc: need at least one item of each class");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.thresholds.push_back(std::numeric_limits<double>::infinity());
  curve.fpr.push_back(0.0);
  curve.tpr.push_back(0.0);

  int64_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < order.size()) {
    // consume the whole tie group so tied scores form one diagonal segment
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      if (labels[order[i]] == 1)
        ++tp;
      else
        ++fp;
      ++i;
    }
    curve.thresholds.push_back(s);
    curve.fpr.push_back(static_cast<double>(fp) / static_cast<double>(n_neg));
    curve.tpr.push_back(static_cast<double>(tp) / static_cast<double>(n_pos));
  }

  double auc = 0.0;
  for (size_t j = 1; j < curve.fpr.size(); ++j)
    auc += (curve.fpr[j] - curve.fpr[j - 1]) * (curve.tpr[j] + curve.tpr[j - 1]) * 0.5;
  curve.auc = auc;
  return curve;
}

void write_roc_csv(const std::string& path, const RocCurve& curve) {
  std::ofstream f(path);
  require(f.good(), ErrorKind::Io, "cannot open '" + path + "' for writing");
  f << "threshold,fpr,tpr\n";
  for (size_t i = 0; i < curve.thresholds.size(); ++i)
    f << format_double(curve.thresholds[i]) << ',' << format_double(curve.fpr[i])
      << ',' << format_double(curve.tpr[i]) << '\n';
  require(f.good(), ErrorKind::Io, "write failed for '" + path + "'");
}

void write_metrics_csv(const std::string& path, const std::string& variant,
                       const MetricsResult& m, double auc) {
  std::ofstream f(path);
  require(f.good(), ErrorKind::Io, "cannot open '" + path + "' for writing");
  f << "variant,precision,recall,f1_score,accuracy,auc\n";
  f << variant << ',' << format_double(m.precision) << ',' << format_double(m.recall)
    << ',' << format_double(m.f1) << ',' << format_double(m.accuracy) << ','
    << format_double(auc) << '\n';
  require(f.good(), ErrorKind::Io, "write failed for '" + path + "'");
}

}  // namespace tfd::eval
