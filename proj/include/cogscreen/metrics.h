#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace cogscreen {

struct ScoredSet {
  std::vector<std::string> ids;
  std::vector<double> scores;
  std::vector<int> labels;

  std::size_t size() const { return scores.size(); }
  std::size_t positives() const;
  // Throws DataError on length mismatch, non-binary labels or non-finite scores.
  void validate() const;
  void add(std::string id, double score, int label);
};

// Rows "patient_id,score,label" under a header line.
ScoredSet read_scores_csv(const std::filesystem::path& path);
std::string format_scores_csv(const ScoredSet& set);

struct RocPoint {
  double threshold = 0.0;  // predict positive when score >= threshold
  std::int64_t tp = 0;
  std::int64_t fp = 0;
};

// One point per distinct score, descending, starting from (0, 0).
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);

// Trapezoidal area under the ROC curve. Integrated in integer counts, so it
// equals the Mann-Whitney statistic with half credit for ties exactly.
double roc_auc(std::span<const double> scores, std::span<const int> labels);
double roc_auc(const ScoredSet& set);

struct ThresholdChoice {
  double threshold = 0.0;
  double accuracy = 0.0;
};

// Candidates are -inf, the midpoints between consecutive distinct scores,
// and +inf. Ties in accuracy go to the higher threshold.
ThresholdChoice best_accuracy_threshold(std::span<const double> scores, std::span<const int> labels);
ThresholdChoice best_accuracy_threshold(const ScoredSet& set);

struct MetricsReport {
  std::optional<double> auc;
  double threshold = 0.0;
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0.0;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> ppv;
  std::optional<double> npv;
  // Where the threshold came from, e.g. "validation" or "same-set".
  std::string threshold_source;

  std::int64_t total() const { return tp + fp + fn + tn; }
  bool operator==(const MetricsReport&) const = default;
};

// Ratios with a zero denominator are left empty.
MetricsReport metrics_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn, std::int64_t tn);
MetricsReport metrics_report(const ScoredSet& set, double threshold);

nlohmann::json to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const nlohmann::json& j);

struct ComparisonTable {
  std::vector<std::pair<std::string, MetricsReport>> rows;

  // Table-2 layout, two decimals, "—" for undefined ratios.
  std::string markdown() const;
  nlohmann::json to_json() const;
  static ComparisonTable from_json(const nlohmann::json& j);
};

ComparisonTable compare_models(std::vector<std::pair<std::string, MetricsReport>> reports);

}  // namespace cogscreen
