#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mal2gcn {

struct ScoredLabel {
  double score = 0.0;
  int label = 0;  // 1 = malware
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // predicted positive when score >= threshold
};

struct MetricsReport {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Absent when only one label is present.
  std::optional<std::vector<RocPoint>> roc_points;  // threshold descending
  std::optional<double> auc;
};

// Point metrics at threshold 0.5; ROC over every distinct score; trapezoid AUC.
// Throws DataError on empty input or labels outside {0, 1}.
MetricsReport compute_metrics(std::span<const ScoredLabel> scores);

std::string format_roc_csv(const MetricsReport& report);

}  // namespace mal2gcn
