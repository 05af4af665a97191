#pragma once

#include <span>
#include <string>
#include <vector>

namespace hbaf {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long support = 0;
};

struct EvalReport {
  int num_classes = 0;
  std::vector<std::vector<long>> confusion;  // [true][predicted]
  std::vector<ClassMetrics> per_class;
  double weighted_f1 = 0.0;
  double accuracy = 0.0;
  long total = 0;
};

/// Precision or recall with a zero denominator counts as 0.
EvalReport metrics_from_confusion(const std::vector<std::vector<long>>& confusion);
EvalReport compute_metrics(std::span<const int> truth, std::span<const int> predicted,
                           int num_classes);

/// Aligned per-class table followed by the confusion matrix.
std::string format_report(const EvalReport& report, const std::vector<std::string>& class_names);

}  // namespace hbaf
