#include "mal2gcn/metrics.hpp"

#include <algorithm>
#include <limits>

#include "mal2gcn/error.hpp"
#include "mal2gcn/text.hpp"

namespace mal2gcn {

MetricsReport compute_metrics(std::span<const ScoredLabel> scores) {
  if (scores.empty()) throw DataError("no scores to evaluate");
  MetricsReport r;
  std::size_t positives = 0;
  for (const auto& s : scores) {
    if (s.label != 0 && s.label != 1) throw DataError("labels must be 0 or 1");
    const bool predicted = s.score >= 0.5;
    if (s.label == 1) {
      ++positives;
      (predicted ? r.tp : r.fn)++;
    } else {
      (predicted ? r.fp : r.tn)++;
    }
  }
  const double n = static_cast<double>(scores.size());
  r.accuracy = static_cast<double>(r.tp + r.tn) / n;
  if (r.tp + r.fp > 0) r.precision = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
  if (r.tp + r.fn > 0) r.recall = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
  if (r.precision + r.recall > 0) {
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  }

  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) return r;

  std::vector<ScoredLabel> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; });
  std::vector<RocPoint> roc;
  roc.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double threshold = sorted[i].score;
    for (; i < sorted.size() && sorted[i].score == threshold; ++i) {
      (sorted[i].label == 1 ? tp : fp)++;
    }
    roc.push_back({static_cast<double>(fp) / static_cast<double>(negatives),
                   static_cast<double>(tp) / static_cast<double>(positives), threshold});
  }
  double auc = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i) {
    auc += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2.0;
  }
  r.roc_points = std::move(roc);
  r.auc = auc;
  return r;
}

std::string format_roc_csv(const MetricsReport& report) {
  std::string out = "fpr,tpr,threshold\n";
  if (!report.roc_points) return out;
  for (const auto& p : *report.roc_points) {
    out += format_double(p.fpr) + "," + format_double(p.tpr) + "," + format_double(p.threshold) +
           "\n";
  }
  return out;
}

}  // namespace mal2gcn
