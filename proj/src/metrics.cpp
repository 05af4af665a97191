#include "hbaf/metrics.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace hbaf {

EvalReport metrics_from_confusion(const std::vector<std::vector<long>>& confusion) {
  const int c = static_cast<int>(confusion.size());
  EvalReport r;
  r.num_classes = c;
  r.confusion = confusion;
  r.per_class.resize(static_cast<std::size_t>(c));
  std::vector<long> predicted(static_cast<std::size_t>(c), 0);
  long correct = 0;
  for (int i = 0; i < c; ++i) {
    if (static_cast<int>(confusion[i].size()) != c) {
      throw std::invalid_argument("confusion matrix must be square");
    }
    for (int j = 0; j < c; ++j) {
      if (confusion[i][j] < 0) throw std::invalid_argument("negative confusion count");
      r.per_class[i].support += confusion[i][j];
      predicted[j] += confusion[i][j];
    }
    correct += confusion[i][i];
    r.total += r.per_class[i].support;
  }
  for (int i = 0; i < c; ++i) {
    ClassMetrics& m = r.per_class[i];
    const double tp = static_cast<double>(confusion[i][i]);
    m.precision = predicted[i] > 0 ? tp / static_cast<double>(predicted[i]) : 0.0;
    m.recall = m.support > 0 ? tp / static_cast<double>(m.support) : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                                          : 0.0;
  }
  if (r.total > 0) {
    // One division at the end keeps a perfect score exactly 1.
    double weighted = 0.0;
    for (const ClassMetrics& m : r.per_class) weighted += static_cast<double>(m.support) * m.f1;
    r.weighted_f1 = weighted / static_cast<double>(r.total);
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.total);
  }
  return r;
}

EvalReport compute_metrics(std::span<const int> truth, std::span<const int> predicted,
                           int num_classes) {
  if (truth.size() != predicted.size()) {
    throw std::invalid_argument("truth and prediction counts differ");
  }
  std::vector<std::vector<long>> confusion(static_cast<std::size_t>(num_classes),
                                           std::vector<long>(static_cast<std::size_t>(num_classes), 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || predicted[i] < 0 ||
        predicted[i] >= num_classes) {
      throw std::invalid_argument("class index out of range");
    }
    ++confusion[truth[i]][predicted[i]];
  }
  return metrics_from_confusion(confusion);
}

std::string format_report(const EvalReport& report, const std::vector<std::string>& class_names) {
  std::ostringstream os;
  char line[160];
  std::size_t name_width = 5;
  for (const auto& n : class_names) name_width = std::max(name_width, n.size());
  const int w = static_cast<int>(name_width);
  std::snprintf(line, sizeof line, "%-*s %9s %9s %9s %8s\n", w, "class", "precision", "recall",
                "f1", "support");
  os << line;
  for (int i = 0; i < report.num_classes; ++i) {
    const ClassMetrics& m = report.per_class[i];
    std::snprintf(line, sizeof line, "%-*s %9.4f %9.4f %9.4f %8ld\n", w, class_names[i].c_str(),
                  m.precision, m.recall, m.f1, m.support);
    os << line;
  }
  std::snprintf(line, sizeof line, "weighted_f1 %.6f  accuracy %.6f  total %ld\n",
                report.weighted_f1, report.accuracy, report.total);
  os << line << "\nconfusion (rows: true, cols: predicted)\n";
  std::snprintf(line, sizeof line, "%-*s", w, "");
  os << line;
  for (int j = 0; j < report.num_classes; ++j) {
    std::snprintf(line, sizeof line, " %8s", class_names[j].c_str());
    os << line;
  }
  os << '\n';
  for (int i = 0; i < report.num_classes; ++i) {
    std::snprintf(line, sizeof line, "%-*s", w, class_names[i].c_str());
    os << line;
    for (int j = 0; j < report.num_classes; ++j) {
      std::snprintf(line, sizeof line, " %8ld", report.confusion[i][j]);
      os << line;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace hbaf
