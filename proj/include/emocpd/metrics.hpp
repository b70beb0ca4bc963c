#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "emocpd/amino_acids.hpp"

namespace emocpd {

// 20x20 counts; rows are true classes, columns predictions.
struct ConfusionMatrix {
  std::array<std::array<int64_t, aa::kNumClasses>, aa::kNumClasses> counts{};

  int64_t total() const;
  int64_t trace() const;
  int64_t row_sum(int true_class) const;
  int64_t col_sum(int predicted_class) const;
  void add(int true_class, int predicted_class);
};

struct ClassMetrics {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  // Set when the corresponding denominator was zero and the value was
  // defaulted to 0.
  bool recall_undefined = false;
  bool precision_undefined = false;
  bool f1_undefined = false;
};

struct MetricsReport {
  double accuracy = 0.0;
  std::array<ClassMetrics, aa::kNumClasses> per_class{};
  std::array<double, aa::kNumClasses> topk{};  // topk[k-1] = top-(k) accuracy
  ConfusionMatrix confusion;
  int64_t sample_count = 0;
};

using ProbabilityRow = std::array<double, aa::kNumClasses>;

double accuracy(const ConfusionMatrix& confusion);

std::array<ClassMetrics, aa::kNumClasses> per_class_metrics(const ConfusionMatrix& confusion);

// Fraction of samples whose true label is among the k highest-probability
// classes; ties rank the lower class index first.
double topk_accuracy(const std::vector<ProbabilityRow>& probabilities,
                     const std::vector<int>& labels, int k);

ConfusionMatrix confusion_from_predictions(const std::vector<ProbabilityRow>& probabilities,
                                           const std::vector<int>& labels);

MetricsReport evaluate_predictions(const std::vector<ProbabilityRow>& probabilities,
                                   const std::vector<int>& labels);

int argmax_class(const ProbabilityRow& row);

std::string metrics_report_json(const MetricsReport& report, const std::string& tool_version,
                                const std::string& config_hash, uint64_t seed);
std::string confusion_csv(const ConfusionMatrix& confusion);

}  // namespace emocpd
