#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cogscreen/concepts.h"
#include "cogscreen/error.h"
#include "cogscreen/pipeline.h"
#include "cogscreen/synthetic.h"
#include "cogscreen/tfidf.h"

namespace cogscreen {
namespace {

double norm(const DocVector& v) {
  double s = 0;
  for (const auto& [i, w] : v.entries) s += w * w;
  return std::sqrt(s);
}

// The top-20 correlation table as a fitted model with those correlations.
TfIdfModel published_top20() {
  const std::vector<std::pair<std::string, double>> rows = {
      {"dementia", 0.4364}, {"memory", 0.3587},     {"daughter", 0.2959}, {"cognitive", 0.2955},
      {"alzheimer", 0.2940}, {"accompanied", 0.2890}, {"behavioral", 0.2809}, {"unable", 0.2756},
      {"confused", 0.2754}, {"donepezil", 0.2738},  {"mental", 0.2686},   {"aricept", 0.2664},
      {"care", 0.2580},     {"impairment", 0.2529}, {"nursing", 0.2402},  {"assistance", 0.2365},
      {"nurse", 0.2306},    {"living", 0.2294},     {"rn", 0.2285},       {"dnr", 0.2271}};
  std::vector<std::string> terms;
  TfIdfModel m;
  for (const auto& [t, c] : rows) terms.push_back(t);
  std::sort(terms.begin(), terms.end());
  m.vocab = Vocabulary(terms);
  m.idf.assign(terms.size(), 1.0);
  m.corr.assign(terms.size(), 0.0);
  m.selected.assign(terms.size(), true);
  m.n_docs = 100;
  for (const auto& [t, c] : rows) m.corr[static_cast<std::size_t>(m.vocab.find(t))] = c;
  return m;
}

TEST(FitTfIdf, IdfFormulaAndMinDf) {
  const std::vector<std::string> docs = {"a b c", "a b", "a d", "e"};
  const std::vector<int> y = {1, 0, 1, 0};
  const auto m = fit_tfidf(docs, y);
  EXPECT_EQ(m.vocab.terms(), (std::vector<std::string>{"a", "b"}));
  EXPECT_DOUBLE_EQ(m.idf[0], std::log(5.0 / 4.0) + 1);
  EXPECT_DOUBLE_EQ(m.idf[1], std::log(5.0 / 3.0) + 1);
  EXPECT_GT(m.idf[1], m.idf[0]);
}

TEST(FitTfIdf, PerfectAndZeroVarianceCorrelation) {
  const std::vector<std::string> docs = {"memory", "memory", "other", "other"};
  const std::vector<int> y = {1, 1, 0, 0};
  const auto m = fit_tfidf(docs, y);
  EXPECT_NEAR(m.corr[static_cast<std::size_t>(m.vocab.find("memory"))], 1.0, 1e-12);
  EXPECT_NEAR(m.corr[static_cast<std::size_t>(m.vocab.find("other"))], -1.0, 1e-12);
  const std::vector<std::string> same = {"x", "x", "x"};
  const auto z = fit_tfidf(same, std::vector<int>{1, 0, 1});
  EXPECT_EQ(z.corr[0], 0.0);
}

TEST(FitTfIdf, SingleClassIsAnError) {
  const std::vector<std::string> docs = {"a", "a"};
  EXPECT_THROW(fit_tfidf(docs, std::vector<int>{1, 1}), DataError);
}

TEST(Pearson, MatchesHandComputation) {
  const std::vector<double> x = {1, 2, 3, 4}, y = {0, 0, 1, 1};
  // cov = 0.5, sd_x = sqrt(1.25), sd_y = 0.5 (population)
  EXPECT_NEAR(pearson(x, y), 0.5 / (std::sqrt(1.25) * 0.5), 1e-12);
  EXPECT_EQ(pearson(std::vector<double>{2, 2}, std::vector<double>{0, 1}), 0.0);
}

TEST(Transform, NormalizationScaleInvarianceEmpty) {
  const std::vector<std::string> docs = {"memory loss", "memory", "loss care", "care"};
  const auto m = fit_tfidf(docs, std::vector<int>{1, 1, 0, 0});
  const auto v = transform("memory memory", m);
  ASSERT_EQ(v.entries.size(), 1u);
  EXPECT_EQ(v.entries[0].first, m.vocab.find("memory"));
  EXPECT_DOUBLE_EQ(v.entries[0].second, 1.0);
  const auto a = transform("memory loss loss care", m);
  const auto b = transform("memory loss loss care memory loss loss care memory loss loss care", m);
  ASSERT_EQ(a.entries.size(), b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) EXPECT_NEAR(a.entries[i].second, b.entries[i].second, 1e-15);
  EXPECT_NEAR(norm(a), 1.0, 1e-12);
  EXPECT_TRUE(transform("", m).empty());
  EXPECT_TRUE(transform("unseen words", m).empty());
}

TEST(SelectFeatures, Bounds) {
  const auto m = published_top20();
  EXPECT_EQ(select_features(m, 0.0).selected_indices().size(), 20u);
  EXPECT_THROW(select_features(m, 1.01), ConfigError);
}

TEST(SelectFeatures, PublishedTableCounts) {
  const auto m = published_top20();
  EXPECT_EQ(select_features(m, 0.24).selected_indices().size(), 15u);
  EXPECT_EQ(select_features(m, 0.23).selected_indices().size(), 17u);
  const auto top = rank_terms(m, 3);
  ASSERT_EQ(top.size(), 3u);
  EXPECT_EQ(top[0].term, "dementia");
  EXPECT_EQ(top[1].term, "memory");
  EXPECT_EQ(top[2].term, "daughter");
  EXPECT_EQ(top[0].rank, 1u);
  const auto table = format_rank_table(rank_terms(m, 20));
  EXPECT_NE(table.find("dnr"), std::string::npos);
  EXPECT_NE(table.find("0.4364"), std::string::npos);
}

TEST(RankTerms, TiesBrokenByTerm) {
  TfIdfModel m;
  m.vocab = Vocabulary({"b", "a", "c"});
  m.idf = {1, 1, 1};
  m.corr = {0.3, -0.3, 0.1};
  m.selected = {true, true, true};
  const auto r = rank_terms(m, 3);
  EXPECT_EQ(r[0].term, "a");
  EXPECT_EQ(r[1].term, "b");
  EXPECT_EQ(r[2].term, "c");
}

TEST(TfIdfModel, JsonRoundTrip) {
  const std::vector<std::string> docs = {"memory loss", "memory", "loss care", "care"};
  const auto m = select_features(fit_tfidf(docs, std::vector<int>{1, 1, 0, 0}), 0.5);
  const auto back = tfidf_from_json(to_json(m));
  EXPECT_EQ(back.vocab.terms(), m.vocab.terms());
  EXPECT_EQ(back.idf, m.idf);
  EXPECT_EQ(back.corr, m.corr);
  EXPECT_EQ(back.selected, m.selected);
  EXPECT_EQ(back.threshold, m.threshold);
}

TEST(FitTfIdf, PlantedTermRanksHigh) {
  GenConfig g;
  g.n_patients = 400;
  const auto prepared = prepare_corpus(generate_synthetic_corpus(g, 7), Preprocessor(), ConceptLexicon::standard());
  std::vector<std::string> docs;
  for (const auto& p : prepared) docs.push_back(p.document);
  const auto top = rank_terms(fit_tfidf(docs, labels_of(prepared)), 5);
  const bool found = std::any_of(top.begin(), top.end(), [](const auto& r) { return r.term == "dementia"; });
  EXPECT_TRUE(found);
}

}  // namespace
}  // namespace cogscreen
