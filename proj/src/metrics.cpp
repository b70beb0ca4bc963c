#include "emocpd/metrics.hpp"

#include <algorithm>
#include <sstream>

#include "emocpd/errors.hpp"

#include "json.hpp"

namespace emocpd {

int64_t ConfusionMatrix::total() const {
  int64_t n = 0;
  for (const auto& row : counts)
    for (int64_t v : row) n += v;
  return n;
}

int64_t ConfusionMatrix::trace() const {
  int64_t n = 0;
  for (int i = 0; i < aa::kNumClasses; ++i) n += counts[static_cast<size_t>(i)][static_cast<size_t>(i)];
  return n;
}

int64_t ConfusionMatrix::row_sum(int true_class) const {
  int64_t n = 0;
  for (int64_t v : counts[static_cast<size_t>(true_class)]) n += v;
  return n;
}

int64_t ConfusionMatrix::col_sum(int predicted_class) const {
  int64_t n = 0;
  for (const auto& row : counts) n += row[static_cast<size_t>(predicted_class)];
  return n;
}

void ConfusionMatrix::add(int true_class, int predicted_class) {
  if (true_class < 0 || true_class >= aa::kNumClasses || predicted_class < 0 ||
      predicted_class >= aa::kNumClasses)
    throw Error("confusion matrix index out of range");
  ++counts[static_cast<size_t>(true_class)][static_cast<size_t>(predicted_class)];
}

double accuracy(const ConfusionMatrix& confusion) {
  int64_t total = confusion.total();
  if (total == 0) throw Error("accuracy of an empty confusion matrix is undefined");
  return static_cast<double>(confusion.trace()) / static_cast<double>(total);
}

std::array<ClassMetrics, aa::kNumClasses> per_class_metrics(const ConfusionMatrix& confusion) {
  std::array<ClassMetrics, aa::kNumClasses> out{};
  for (int c = 0; c < aa::kNumClasses; ++c) {
    int64_t tp = confusion.counts[static_cast<size_t>(c)][static_cast<size_t>(c)];
    int64_t fn = confusion.row_sum(c) - tp;
    int64_t fp = confusion.col_sum(c) - tp;
    ClassMetrics& m = out[static_cast<size_t>(c)];
    if (tp + fn > 0)
      m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    else
      m.recall_undefined = true;
    if (tp + fp > 0)
      m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    else
      m.precision_undefined = true;
    if (2 * tp + fp + fn > 0)
      m.f1 = static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
    else
      m.f1_undefined = true;
  }
  return out;
}

namespace {

// Class indices of the k most probable entries; ties rank lower index first.
std::array<int, aa::kNumClasses> ranked_classes(const ProbabilityRow& row) {
  std::array<int, aa::kNumClasses> order;
  for (int i = 0; i < aa::kNumClasses; ++i) order[static_cast<size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&row](int a, int b) {
    return row[static_cast<size_t>(a)] > row[static_cast<size_t>(b)];
  });
  return order;
}

}  // namespace

int argmax_class(const ProbabilityRow& row) {
  int best = 0;
  for (int i = 1; i < aa::kNumClasses; ++i)
    if (row[static_cast<size_t>(i)] > row[static_cast<size_t>(best)]) best = i;
  return best;
}

double topk_accuracy(const std::vector<ProbabilityRow>& probabilities,
                     const std::vector<int>& labels, int k) {
  if (k < 1 || k > aa::kNumClasses) throw Error("top-k k out of range: " + std::to_string(k));
  if (probabilities.size() != labels.size()) throw Error("probabilities/labels size mismatch");
  if (probabilities.empty()) throw Error("top-k of an empty sample set is undefined");
  int64_t hits = 0;
  for (size_t i = 0; i < probabilities.size(); ++i) {
    auto order = ranked_classes(probabilities[i]);
    for (int j = 0; j < k; ++j)
      if (order[static_cast<size_t>(j)] == labels[i]) {
        ++hits;
        break;
      }
  }
  return static_cast<double>(hits) / static_cast<double>(probabilities.size());
}

ConfusionMatrix confusion_from_predictions(const std::vector<ProbabilityRow>& probabilities,
                                           const std::vector<int>& labels) {
  if (probabilities.size() != labels.size()) throw Error("probabilities/labels size mismatch");
  ConfusionMatrix confusion;
  for (size_t i = 0; i < probabilities.size(); ++i)
    confusion.add(labels[i], argmax_class(probabilities[i]));
  return confusion;
}

MetricsReport evaluate_predictions(const std::vector<ProbabilityRow>& probabilities,
                                   const std::vector<int>& labels) {
  MetricsReport report;
  report.confusion = confusion_from_predictions(probabilities, labels);
  report.sample_count = report.confusion.total();
  report.accuracy = accuracy(report.confusion);
  report.per_class = per_class_metrics(report.confusion);
  for (int k = 1; k <= aa::kNumClasses; ++k)
    report.topk[static_cast<size_t>(k - 1)] = topk_accuracy(probabilities, labels, k);

  // Structural identities, checked on every evaluation.
  if (report.topk[0] != report.accuracy) throw Error("top-1 accuracy diverged from accuracy");
  if (report.topk[aa::kNumClasses - 1] != 1.0) throw Error("top-20 accuracy must be 1");
  for (int k = 1; k < aa::kNumClasses; ++k)
    if (report.topk[static_cast<size_t>(k)] < report.topk[static_cast<size_t>(k - 1)])
      throw Error("top-k accuracy must be nondecreasing in k");
  return report;
}

std::string metrics_report_json(const MetricsReport& report, const std::string& tool_version,
                                const std::string& config_hash, uint64_t seed) {
  nlohmann::json j;
  j["tool_version"] = tool_version;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["sample_count"] = report.sample_count;
  j["accuracy"] = report.accuracy;
  nlohmann::json per_class = nlohmann::json::object();
  for (int c = 0; c < aa::kNumClasses; ++c) {
    const ClassMetrics& m = report.per_class[static_cast<size_t>(c)];
    nlohmann::json jm;
    jm["recall"] = m.recall;
    jm["precision"] = m.precision;
    jm["f1"] = m.f1;
    if (m.recall_undefined || m.precision_undefined || m.f1_undefined) jm["undefined"] = true;
    per_class[aa::three_letter(c)] = jm;
  }
  j["per_class"] = per_class;
  j["topk"] = report.topk;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : report.confusion.counts) rows.push_back(row);
  j["confusion"] = rows;
  return j.dump(2) + "\n";
}

std::string confusion_csv(const ConfusionMatrix& confusion) {
  std::ostringstream out;
  out << "true\\pred";
  for (int c = 0; c < aa::kNumClasses; ++c) out << "," << aa::three_letter(c);
  out << "\n";
  for (int r = 0; r < aa::kNumClasses; ++r) {
    out << aa::three_letter(r);
    for (int c = 0; c < aa::kNumClasses; ++c)
      out << "," << confusion.counts[static_cast<size_t>(r)][static_cast<size_t>(c)];
    out << "\n";
  }
  return out.str();
}

}  // namespace emocpd
