#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

namespace cogscreen {

class Vocabulary {
 public:
  Vocabulary() = default;
  // Terms must be unique; indices follow the given order.
  explicit Vocabulary(std::vector<std::string> terms);

  std::size_t size() const { return terms_.size(); }
  const std::string& term(std::size_t i) const { return terms_[i]; }
  const std::vector<std::string>& terms() const { return terms_; }
  // -1 when absent.
  int find(std::string_view term) const;

 private:
  std::vector<std::string> terms_;
  std::unordered_map<std::string, int> index_;
};

// What the per-term label correlation is computed on.
enum class CorrelationBasis { kTfIdf, kPresence };

struct TfIdfOptions {
  int min_df = 2;
  CorrelationBasis basis = CorrelationBasis::kTfIdf;
};

struct TfIdfModel {
  Vocabulary vocab;
  std::vector<double> idf;
  std::vector<double> corr;
  std::vector<bool> selected;
  double threshold = 0.0;
  std::size_t n_docs = 0;
  TfIdfOptions options;

  std::vector<int> selected_indices() const;
};

nlohmann::json to_json(const TfIdfModel& model);
TfIdfModel tfidf_from_json(const nlohmann::json& j);

// Sparse, sorted by term index.
struct DocVector {
  std::vector<std::pair<int, double>> entries;
  bool empty() const { return entries.empty(); }
};

std::vector<std::string_view> split_terms(std::string_view doc);

// Pearson correlation; 0 when either side has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

// vocab = terms with document frequency >= min_df (sorted); idf is the
// smoothed ln((1+N)/(1+df)) + 1; corr is each term's point-biserial
// correlation with the label. All terms start selected.
TfIdfModel fit_tfidf(std::span<const std::string> docs, std::span<const int> labels,
                     const TfIdfOptions& options = {});

// Raw-count tf times idf over the selected terms, L2-normalized. A document
// with no selected terms yields an empty vector.
DocVector transform(std::string_view doc, const TfIdfModel& model);

// Keeps terms with |corr| >= threshold. Throws ConfigError when nothing survives.
TfIdfModel select_features(TfIdfModel model, double threshold);

struct RankedTerm {
  std::size_t rank = 0;
  std::string term;
  double corr = 0.0;
};

// Ordered by (-|corr|, term).
std::vector<RankedTerm> rank_terms(const TfIdfModel& model, std::size_t k);
std::string format_rank_table(std::span<const RankedTerm> ranked);

}  // namespace cogscreen
