#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "cogscreen/error.h"
#include "cogscreen/io.h"
#include "cogscreen/metrics.h"

namespace cogscreen {
namespace {

// Mann-Whitney by pair counting, half credit for ties.
double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1;
      num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return num / pairs;
}

TEST(Auc, MatchesPairCountingWithTies) {
  std::mt19937_64 rng(123);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = std::uniform_int_distribution<int>(2, 50)(rng);
    std::vector<double> s(n);
    std::vector<int> y(n);
    // Few distinct levels so ties are common.
    const int levels = std::uniform_int_distribution<int>(1, 8)(rng);
    for (int i = 0; i < n; ++i) {
      s[i] = std::uniform_int_distribution<int>(0, levels)(rng) / 4.0;
      y[i] = i < 1 ? 1 : i < 2 ? 0 : static_cast<int>(rng() % 2);
    }
    EXPECT_EQ(roc_auc(s, y), brute_auc(s, y)) << "rep " << rep;
  }
}

TEST(Auc, PerfectAndInvertedAndConstant) {
  const std::vector<double> s = {0.1, 0.2, 0.3, 0.4};
  EXPECT_EQ(roc_auc(s, std::vector<int>{0, 0, 1, 1}), 1.0);
  EXPECT_EQ(roc_auc(s, std::vector<int>{1, 1, 0, 0}), 0.0);
  EXPECT_EQ(roc_auc(std::vector<double>{0.5, 0.5, 0.5}, std::vector<int>{1, 0, 1}), 0.5);
}

TEST(Auc, SingleClassIsAnError) {
  EXPECT_THROW(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), DataError);
}

TEST(RocCurve, StartsAtOriginAndEndsAtTotals) {
  const std::vector<double> s = {0.9, 0.8, 0.8, 0.3};
  const std::vector<int> y = {1, 0, 1, 0};
  const auto roc = roc_curve(s, y);
  ASSERT_EQ(roc.size(), 4u);
  EXPECT_EQ(roc.front().tp, 0);
  EXPECT_EQ(roc.front().fp, 0);
  EXPECT_EQ(roc.back().tp, 2);
  EXPECT_EQ(roc.back().fp, 2);
  EXPECT_EQ(roc[2].tp, 2);
  EXPECT_EQ(roc[2].fp, 1);
}

TEST(BestThreshold, MatchesExhaustiveScan) {
  std::mt19937_64 rng(9);
  for (int rep = 0; rep < 100; ++rep) {
    const int n = std::uniform_int_distribution<int>(1, 30)(rng);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = std::uniform_int_distribution<int>(0, 10)(rng) / 10.0;
      y[i] = static_cast<int>(rng() % 2);
    }
    const auto choice = best_accuracy_threshold(s, y);
    double best = 0;
    for (double t = -0.05; t <= 1.06; t += 0.05) {
      int correct = 0;
      for (int i = 0; i < n; ++i) correct += (s[i] >= t) == (y[i] == 1);
      best = std::max(best, static_cast<double>(correct) / n);
    }
    EXPECT_NEAR(choice.accuracy, best, 1e-12);
    int correct = 0;
    for (int i = 0; i < n; ++i) correct += (s[i] >= choice.threshold) == (y[i] == 1);
    EXPECT_NEAR(static_cast<double>(correct) / n, choice.accuracy, 1e-12);
  }
}

struct PublishedRow {
  int fp, fn;
  double sens, spec, ppv, npv, acc;
};

TEST(MetricsFromCounts, ReproducesPublishedComparison) {
  // Test set of 77 patients with 34 positive.
  const PublishedRow rows[] = {{0, 14, 0.59, 1.00, 1.00, 0.75, 0.82},
                               {4, 8, 0.76, 0.91, 0.87, 0.83, 0.84},
                               {6, 5, 0.85, 0.86, 0.83, 0.88, 0.86},
                               {1, 7, 0.79, 0.98, 0.96, 0.86, 0.90}};
  for (const auto& r : rows) {
    const auto m = metrics_from_counts(34 - r.fn, r.fp, r.fn, 43 - r.fp);
    EXPECT_NEAR(*m.sensitivity, r.sens, 0.005);
    EXPECT_NEAR(*m.specificity, r.spec, 0.005);
    EXPECT_NEAR(*m.ppv, r.ppv, 0.005);
    EXPECT_NEAR(*m.npv, r.npv, 0.005);
    EXPECT_NEAR(m.accuracy, r.acc, 0.005);
  }
}

TEST(MetricsFromCounts, UndefinedRatiosStayEmpty) {
  const auto m = metrics_from_counts(0, 0, 3, 4);
  EXPECT_FALSE(m.ppv.has_value());
  EXPECT_EQ(*m.sensitivity, 0.0);
  EXPECT_EQ(*m.npv, 4.0 / 7.0);
}

TEST(MetricsReport, ThresholdIsInclusive) {
  ScoredSet s;
  s.add("a", 0.5, 1);
  s.add("b", 0.4, 0);
  s.add("c", 0.6, 0);
  const auto m = metrics_report(s, 0.5);
  EXPECT_EQ(m.tp, 1);
  EXPECT_EQ(m.fp, 1);
  EXPECT_EQ(m.tn, 1);
  EXPECT_EQ(m.fn, 0);
  EXPECT_EQ(*m.auc, 0.5);
}

TEST(MetricsReport, JsonRoundTrip) {
  auto m = metrics_from_counts(20, 0, 14, 43);
  m.auc = 0.79;
  m.threshold = 0.37;
  m.threshold_source = "validation";
  EXPECT_EQ(metrics_from_json(to_json(m)), m);
}

TEST(ScoresCsv, RoundTripAndErrors) {
  ScoredSet s;
  s.add("P1", 0.123456789012345678, 1);
  s.add("P2", 1e-300, 0);
  const auto dir = std::filesystem::temp_directory_path() / "cogscreen_metrics_test";
  std::filesystem::create_directories(dir);
  atomic_write(dir / "s.csv", format_scores_csv(s));
  const auto back = read_scores_csv(dir / "s.csv");
  EXPECT_EQ(back.ids, s.ids);
  EXPECT_EQ(back.scores, s.scores);
  EXPECT_EQ(back.labels, s.labels);
  atomic_write(dir / "bad.csv", "patient_id,score,label\nP1,0.5,2\n");
  EXPECT_THROW(read_scores_csv(dir / "bad.csv"), ParseError);
  atomic_write(dir / "bad2.csv", "patient_id,score,label\nP1,abc,1\n");
  EXPECT_THROW(read_scores_csv(dir / "bad2.csv"), ParseError);
}

TEST(ComparisonTable, MarkdownLayout) {
  auto m = metrics_from_counts(20, 0, 14, 43);
  m.auc = 0.79;
  auto none = metrics_from_counts(0, 0, 3, 4);
  none.auc = 0.5;
  const auto md = compare_models({{"baseline", m}, {"empty", none}}).markdown();
  EXPECT_NE(md.find("| Model | AUC | Accuracy | FP | FN | Sensitivity | Specificity | PPV | NPV |"), std::string::npos);
  EXPECT_NE(md.find("| baseline | 0.79 | 0.82 | 0 | 14 | 0.59 | 1.00 | 1.00 | 0.75 |"), std::string::npos);
  EXPECT_NE(md.find("—"), std::string::npos);
}

}  // namespace
}  // namespace cogscreen
