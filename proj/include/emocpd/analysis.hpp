#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "emocpd/amino_acids.hpp"
#include "emocpd/metrics.hpp"

namespace emocpd {

// One scored residue as read from a predictions CSV row.
struct SitePrediction {
  std::string structure_id;
  char chain_id = ' ';
  std::string residue_seq;  // printed form, may carry an insertion code
  int true_class = -1;
  ProbabilityRow probabilities{};
};

struct StructureResult {
  std::string structure_id;
  int64_t site_count = 0;
  int64_t correct = 0;
  double accuracy = 0.0;
  std::array<double, aa::kNumClasses> content{};  // fractions of true labels, sums to 1
};

enum class AminoAcidGroup { positive, negative, neutral };

struct GroupCorrelation {
  bool defined = false;
  double r = 0.0;
};

struct CorrelationReport {
  // Per amino acid, in canonical class order; undefined when content had no
  // variance across structures.
  std::array<std::optional<double>, aa::kNumClasses> r{};
  std::array<std::optional<double>, aa::kNumClasses> p{};
  std::array<AminoAcidGroup, aa::kNumClasses> classification{};
  GroupCorrelation positive_group, negative_group, neutral_group;
  double alpha = 0.01;
  int64_t structure_count = 0;
};

std::vector<SitePrediction> parse_predictions_csv(std::istream& in);
std::string predictions_csv(const std::vector<SitePrediction>& rows,
                            const std::string& tool_version, const std::string& config_hash,
                            uint64_t seed);

// Groups rows by structure id (first-appearance order); structures with zero
// sites cannot occur by construction, so every result carries >= 1 site.
std::vector<StructureResult> per_structure_accuracy(const std::vector<SitePrediction>& rows);

// Sample Pearson correlation; throws on fewer than 3 points or zero variance.
double pearson_r(const std::vector<double>& x, const std::vector<double>& y);

// Two-tailed p-value for a sample correlation r over n points, via the exact
// t transform t = r*sqrt((n-2)/(1-r^2)) against Student's t with n-2 degrees
// of freedom. |r| = 1 returns 0 with the boundary flag set.
double significance_p(double r, int64_t n, bool* boundary = nullptr);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

std::array<AminoAcidGroup, aa::kNumClasses> classify_amino_acids(
    const std::array<std::optional<double>, aa::kNumClasses>& r,
    const std::array<std::optional<double>, aa::kNumClasses>& p, double alpha = 0.01);

struct GroupedCorrelations {
  GroupCorrelation positive, negative, neutral;
};

// Pearson r between each group's summed content and per-structure accuracy.
// A group whose content has no variance (e.g. the group is empty) is skipped
// with its `defined` flag cleared.
GroupedCorrelations grouped_content_correlation(
    const std::vector<StructureResult>& structures,
    const std::array<AminoAcidGroup, aa::kNumClasses>& classification);

CorrelationReport correlation_report(const std::vector<StructureResult>& structures,
                                     double alpha = 0.01);

struct HistogramBin {
  double lo = 0.0, hi = 0.0;
  int64_t count = 0;
};

struct AccuracyHistogram {
  std::vector<HistogramBin> bins;
  std::string min_structure, max_structure;
  double min_accuracy = 0.0, max_accuracy = 0.0;
};

AccuracyHistogram accuracy_histogram(const std::vector<StructureResult>& structures,
                                     double bin_width = 0.01);

std::string correlation_report_json(const CorrelationReport& report,
                                    const std::string& tool_version,
                                    const std::string& config_hash, uint64_t seed);
// Per-structure scatter rows: id, accuracy, positive/negative/neutral content.
std::string group_scatter_csv(const std::vector<StructureResult>& structures,
                              const std::array<AminoAcidGroup, aa::kNumClasses>& classification);
std::string histogram_csv(const AccuracyHistogram& histogram);

}  // namespace emocpd
