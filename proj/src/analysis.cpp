#include "emocpd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <sstream>

#include "emocpd/config.hpp"
#include "emocpd/errors.hpp"

#include "json.hpp"

namespace emocpd {

// ---------------------------------------------------------------------------
// Predictions CSV
// ---------------------------------------------------------------------------

std::vector<SitePrediction> parse_predictions_csv(std::istream& in) {
  std::vector<SitePrediction> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("structure,", 0) == 0) continue;  // header

    std::vector<std::string> fields;
    std::istringstream row(line);
    std::string field;
    while (std::getline(row, field, ',')) fields.push_back(field);
    if (fields.size() != 4 + aa::kNumClasses)
      throw ParseError("expected " + std::to_string(4 + aa::kNumClasses) + " columns, got " +
                           std::to_string(fields.size()),
                       line_no);

    SitePrediction p;
    p.structure_id = fields[0];
    p.chain_id = fields[1].empty() ? ' ' : fields[1][0];
    p.residue_seq = fields[2];
    char* end = nullptr;
    p.true_class = static_cast<int>(std::strtol(fields[3].c_str(), &end, 10));
    if (end != fields[3].c_str() + fields[3].size() || p.true_class < 0 ||
        p.true_class >= aa::kNumClasses)
      throw ParseError("bad true-class column '" + fields[3] + "'", line_no);
    for (int k = 0; k < aa::kNumClasses; ++k) {
      const std::string& f = fields[static_cast<size_t>(4 + k)];
      p.probabilities[static_cast<size_t>(k)] = std::strtod(f.c_str(), &end);
      if (end != f.c_str() + f.size()) throw ParseError("bad probability '" + f + "'", line_no);
    }
    rows.push_back(std::move(p));
  }
  return rows;
}

std::string predictions_csv(const std::vector<SitePrediction>& rows,
                            const std::string& tool_version, const std::string& config_hash,
                            uint64_t seed) {
  std::ostringstream out;
  out << "# tool_version=" << tool_version << " config_hash=" << config_hash << " seed=" << seed
      << "\n";
  out << "structure,chain,seq,true_class";
  for (int k = 0; k < aa::kNumClasses; ++k) out << ",p_" << aa::three_letter(k);
  out << "\n";
  for (const SitePrediction& p : rows) {
    out << p.structure_id << "," << p.chain_id << "," << p.residue_seq << "," << p.true_class;
    for (double v : p.probabilities) out << "," << format_double(v);
    out << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Per-structure aggregation
// ---------------------------------------------------------------------------

std::vector<StructureResult> per_structure_accuracy(const std::vector<SitePrediction>& rows) {
  std::vector<StructureResult> results;
  std::map<std::string, size_t> index;
  for (const SitePrediction& p : rows) {
    auto [it, inserted] = index.emplace(p.structure_id, results.size());
    if (inserted) {
      results.emplace_back();
      results.back().structure_id = p.structure_id;
    }
    StructureResult& s = results[it->second];
    ++s.site_count;
    if (argmax_class(p.probabilities) == p.true_class) ++s.correct;
    s.content[static_cast<size_t>(p.true_class)] += 1.0;
  }
  for (StructureResult& s : results) {
    s.accuracy = static_cast<double>(s.correct) / static_cast<double>(s.site_count);
    for (double& c : s.content) c /= static_cast<double>(s.site_count);
  }
  return results;
}

// ---------------------------------------------------------------------------
// Pearson correlation and significance
// ---------------------------------------------------------------------------

double pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error("pearson_r: length mismatch");
  const size_t n = x.size();
  if (n < 3) throw Error("pearson_r: need at least 3 points");
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error("pearson_r: zero variance, correlation undefined");
  return sxy / std::sqrt(sxx * syy);
}

namespace {

// Continued fraction for the incomplete beta (Lentz's method).
double beta_cf(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-15;
  constexpr int kMaxIter = 500;

  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw Error("incomplete_beta: continued fraction failed to converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0) throw Error("incomplete_beta: a, b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                    b * std::log(1.0 - x);
  double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double significance_p(double r, int64_t n, bool* boundary) {
  if (boundary) *boundary = false;
  if (n < 3) throw Error("significance_p: need n >= 3");
  if (!(std::fabs(r) <= 1.0)) throw Error("significance_p: |r| must be <= 1");
  if (std::fabs(r) == 1.0) {
    if (boundary) *boundary = true;
    return 0.0;
  }
  if (r == 0.0) return 1.0;
  double nu = static_cast<double>(n - 2);
  double t = r * std::sqrt(nu / (1.0 - r * r));
  // P(|T| >= |t|) = I_{nu/(nu+t^2)}(nu/2, 1/2)
  return incomplete_beta(nu / 2.0, 0.5, nu / (nu + t * t));
}

// ---------------------------------------------------------------------------
// Classification and grouped correlations
// ---------------------------------------------------------------------------

std::array<AminoAcidGroup, aa::kNumClasses> classify_amino_acids(
    const std::array<std::optional<double>, aa::kNumClasses>& r,
    const std::array<std::optional<double>, aa::kNumClasses>& p, double alpha) {
  std::array<AminoAcidGroup, aa::kNumClasses> out{};
  for (int i = 0; i < aa::kNumClasses; ++i) {
    size_t k = static_cast<size_t>(i);
    if (r[k] && p[k] && *p[k] < alpha && *r[k] != 0.0)
      out[k] = *r[k] > 0.0 ? AminoAcidGroup::positive : AminoAcidGroup::negative;
    else
      out[k] = AminoAcidGroup::neutral;
  }
  return out;
}

CorrelationReport correlation_report(const std::vector<StructureResult>& structures, double alpha) {
  if (structures.size() < 3) throw Error("correlation analysis needs at least 3 structures");
  CorrelationReport report;
  report.alpha = alpha;
  report.structure_count = static_cast<int64_t>(structures.size());

  std::vector<double> accuracy_values;
  accuracy_values.reserve(structures.size());
  for (const StructureResult& s : structures) accuracy_values.push_back(s.accuracy);

  for (int k = 0; k < aa::kNumClasses; ++k) {
    std::vector<double> content;
    content.reserve(structures.size());
    for (const StructureResult& s : structures)
      content.push_back(s.content[static_cast<size_t>(k)]);
    try {
      double r = pearson_r(content, accuracy_values);
      report.r[static_cast<size_t>(k)] = r;
      report.p[static_cast<size_t>(k)] =
          significance_p(r, static_cast<int64_t>(structures.size()));
    } catch (const Error&) {
      // zero variance: amino acid missing (or constant) everywhere
    }
  }
  report.classification = classify_amino_acids(report.r, report.p, alpha);

  GroupedCorrelations groups = grouped_content_correlation(structures, report.classification);
  report.positive_group = groups.positive;
  report.negative_group = groups.negative;
  report.neutral_group = groups.neutral;
  return report;
}

GroupedCorrelations grouped_content_correlation(
    const std::vector<StructureResult>& structures,
    const std::array<AminoAcidGroup, aa::kNumClasses>& classification) {
  std::vector<double> accuracy_values;
  accuracy_values.reserve(structures.size());
  for (const StructureResult& s : structures) accuracy_values.push_back(s.accuracy);

  auto group_corr = [&](AminoAcidGroup group) {
    GroupCorrelation g;
    std::vector<double> content(structures.size(), 0.0);
    for (size_t s = 0; s < structures.size(); ++s)
      for (int k = 0; k < aa::kNumClasses; ++k)
        if (classification[static_cast<size_t>(k)] == group)
          content[s] += structures[s].content[static_cast<size_t>(k)];
    try {
      g.r = pearson_r(content, accuracy_values);
      g.defined = true;
    } catch (const Error&) {
      g.defined = false;  // empty group or constant content: skipped, flagged
    }
    return g;
  };
  return {group_corr(AminoAcidGroup::positive), group_corr(AminoAcidGroup::negative),
          group_corr(AminoAcidGroup::neutral)};
}

AccuracyHistogram accuracy_histogram(const std::vector<StructureResult>& structures,
                                     double bin_width) {
  if (structures.empty()) throw Error("histogram of zero structures");
  if (bin_width <= 0.0 || bin_width > 1.0) throw Error("bad histogram bin width");
  AccuracyHistogram h;
  int bins = static_cast<int>(std::ceil(1.0 / bin_width));
  h.bins.resize(static_cast<size_t>(bins));
  for (int i = 0; i < bins; ++i) {
    h.bins[static_cast<size_t>(i)].lo = i * bin_width;
    h.bins[static_cast<size_t>(i)].hi = std::min(1.0, (i + 1) * bin_width);
  }
  h.min_accuracy = 2.0;
  h.max_accuracy = -1.0;
  for (const StructureResult& s : structures) {
    int bin = std::min(bins - 1, static_cast<int>(std::floor(s.accuracy / bin_width)));
    ++h.bins[static_cast<size_t>(bin)].count;
    if (s.accuracy < h.min_accuracy) {
      h.min_accuracy = s.accuracy;
      h.min_structure = s.structure_id;
    }
    if (s.accuracy > h.max_accuracy) {
      h.max_accuracy = s.accuracy;
      h.max_structure = s.structure_id;
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

namespace {

const char* group_name(AminoAcidGroup g) {
  switch (g) {
    case AminoAcidGroup::positive:
      return "positive";
    case AminoAcidGroup::negative:
      return "negative";
    default:
      return "neutral";
  }
}

}  // namespace

std::string correlation_report_json(const CorrelationReport& report,
                                    const std::string& tool_version,
                                    const std::string& config_hash, uint64_t seed) {
  nlohmann::json j;
  j["tool_version"] = tool_version;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["alpha"] = report.alpha;
  j["structure_count"] = report.structure_count;
  nlohmann::json per_aa = nlohmann::json::object();
  for (int k = 0; k < aa::kNumClasses; ++k) {
    nlohmann::json entry;
    size_t i = static_cast<size_t>(k);
    if (report.r[i]) {
      entry["r"] = *report.r[i];
      entry["p"] = *report.p[i];
    } else {
      entry["undefined"] = true;
    }
    entry["class"] = group_name(report.classification[i]);
    per_aa[aa::three_letter(k)] = entry;
  }
  j["per_amino_acid"] = per_aa;
  auto group_json = [](const GroupCorrelation& g) {
    nlohmann::json e;
    if (g.defined)
      e["r"] = g.r;
    else
      e["skipped"] = true;
    return e;
  };
  j["groups"]["positive"] = group_json(report.positive_group);
  j["groups"]["negative"] = group_json(report.negative_group);
  j["groups"]["neutral"] = group_json(report.neutral_group);
  return j.dump(2) + "\n";
}

std::string group_scatter_csv(const std::vector<StructureResult>& structures,
                              const std::array<AminoAcidGroup, aa::kNumClasses>& classification) {
  std::ostringstream out;
  out << "structure,accuracy,positive_content,negative_content,neutral_content\n";
  for (const StructureResult& s : structures) {
    double pos = 0.0, neg = 0.0, neu = 0.0;
    for (int k = 0; k < aa::kNumClasses; ++k) {
      double c = s.content[static_cast<size_t>(k)];
      switch (classification[static_cast<size_t>(k)]) {
        case AminoAcidGroup::positive:
          pos += c;
          break;
        case AminoAcidGroup::negative:
          neg += c;
          break;
        default:
          neu += c;
          break;
      }
    }
    out << s.structure_id << "," << format_double(s.accuracy) << "," << format_double(pos) << ","
        << format_double(neg) << "," << format_double(neu) << "\n";
  }
  return out.str();
}

std::string histogram_csv(const AccuracyHistogram& histogram) {
  std::ostringstream out;
  out << "# min_structure=" << histogram.min_structure
      << " min_accuracy=" << format_double(histogram.min_accuracy)
      << " max_structure=" << histogram.max_structure
      << " max_accuracy=" << format_double(histogram.max_accuracy) << "\n";
  out << "bin_lo,bin_hi,count\n";
  for (const HistogramBin& b : histogram.bins)
    out << format_double(b.lo) << "," << format_double(b.hi) << "," << b.count << "\n";
  return out.str();
}

}  // namespace emocpd
