#include <gtest/gtest.h>

#include <filesystem>

#include "cogscreen/error.h"
#include "cogscreen/io.h"
#include "cogscreen/pipeline.h"
#include "cogscreen/synthetic.h"

namespace cogscreen {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "cogscreen_pipeline_test";
  fs::create_directories(dir);
  return dir / name;
}

PreparedCorpus small_prepared(int n, std::uint64_t seed, double unlabeled = 0.0) {
  GenConfig g;
  g.n_patients = n;
  g.unlabeled_fraction = unlabeled;
  return prepare_corpus(generate_synthetic_corpus(g, seed), Preprocessor(), ConceptLexicon::standard());
}

TEST(PrepareCorpus, FeaturesLineUpWithPatients) {
  const auto p = small_prepared(30, 1);
  ASSERT_EQ(p.size(), 30u);
  const auto s = structured_matrix(p);
  const auto c = concept_matrix(p, 15);
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_EQ(s(static_cast<Eigen::Index>(i), 0), p[i].structured.med_count);
    EXPECT_EQ(s(static_cast<Eigen::Index>(i), 1), p[i].structured.icd_count);
    for (int k = 0; k < 15; ++k) EXPECT_EQ(c(static_cast<Eigen::Index>(i), k), p[i].concepts.counts[k]);
    EXPECT_EQ(p[i].matches.size(), p[i].notes.size());
  }
}

TEST(PrepareCorpus, DropsPatientsWithoutUsableNotes) {
  GenConfig g;
  g.n_patients = 5;
  auto corpus = generate_synthetic_corpus(g, 2);
  corpus[1].notes.clear();
  corpus[3].notes = {{"n", {}, "Medications:\nDonepezil 10 mg"}};
  const auto p = prepare_corpus(corpus, Preprocessor(), ConceptLexicon::standard());
  ASSERT_EQ(p.size(), 3u);
  EXPECT_EQ(p[1].patient_id, corpus[2].patient_id);
}

TEST(FeatureCsv, RoundTripWithUnlabeledRows) {
  const auto p = small_prepared(20, 3, 0.3);
  const auto t = make_feature_table(p, kStructuredFeatureNames, structured_matrix(p));
  atomic_write(scratch("f.csv"), format_feature_csv(t));
  const auto back = read_feature_csv(scratch("f.csv"));
  EXPECT_EQ(back.ids, t.ids);
  EXPECT_EQ(back.labels, t.labels);
  EXPECT_EQ(back.names, t.names);
  EXPECT_EQ(back.x, t.x);
  EXPECT_THROW(t.known_labels(), DataError);
  const auto l = t.labeled();
  EXPECT_LT(l.ids.size(), t.ids.size());
  EXPECT_EQ(l.x.rows(), static_cast<Eigen::Index>(l.ids.size()));
  EXPECT_NO_THROW(l.known_labels());
}

TEST(FeatureCsv, MalformedInput) {
  atomic_write(scratch("bad.csv"), "patient_id,label,a\nP1,1,2\nP2,0\n");
  try {
    read_feature_csv(scratch("bad.csv"));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  atomic_write(scratch("bad2.csv"), "id,label,a\nP1,1,2\n");
  EXPECT_THROW(read_feature_csv(scratch("bad2.csv")), ParseError);
}

TEST(StratifiedSplit, PreservesClassShares) {
  std::vector<int> y(200);
  for (int i = 0; i < 200; ++i) y[i] = i < 90;
  const auto [a, b] = stratified_split(y, 0.1, 5);
  EXPECT_EQ(a.size() + b.size(), 200u);
  int pos = 0;
  for (auto i : b) pos += y[i];
  EXPECT_EQ(b.size(), 20u);
  EXPECT_EQ(pos, 9);
  EXPECT_EQ(stratified_split(y, 0.1, 5), stratified_split(y, 0.1, 5));
}

TEST(FitCvLinear, ThresholdComesFromOutOfFoldScores) {
  const auto p = small_prepared(150, 4);
  const auto y = labels_of(p);
  const auto fit = fit_cv_linear(concept_matrix(p, 15), y, ConceptLexicon::standard().names(), 5, 1);
  EXPECT_EQ(fit.threshold_source, "cross-validation");
  EXPECT_GT(fit.selection_auc, 0.8);
  EXPECT_EQ(fit.model.feature_names.size(), 15u);
}

TEST(ModelNames, RoundTrip) {
  for (auto k : {ModelKind::kBaseline, ModelKind::kRegex, ModelKind::kTfIdf, ModelKind::kAttention}) {
    EXPECT_EQ(model_kind_from_name(model_name(k)), k);
  }
  EXPECT_THROW(model_kind_from_name("svm"), ConfigError);
}

TEST(ExperimentConfig, JsonRoundTripAndUnknownKeys) {
  ExperimentConfig c;
  c.models = {ModelKind::kRegex};
  c.seed = 99;
  const auto back = experiment_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  auto j = to_json(c);
  j["train"] = {{"preset", "full"}};
  EXPECT_DOUBLE_EQ(experiment_config_from_json(j).train.learning_rate, 7.09e-6);
  EXPECT_DOUBLE_EQ(experiment_config_from_json(j).train.adam_eps, 1e-9);
  EXPECT_EQ(experiment_config_from_json(j).train.epochs, 4);
}

TEST(RunExperiment, LinearModelsOnSmallCorpus) {
  GenConfig g;
  g.n_patients = 300;
  ExperimentConfig c;
  c.models = {ModelKind::kBaseline, ModelKind::kRegex, ModelKind::kTfIdf};
  c.cv_folds = 5;
  const auto r = run_experiment(generate_synthetic_corpus(g, 3), c, Preprocessor(), ConceptLexicon::standard());
  EXPECT_EQ(r.n_test, 30u);
  EXPECT_EQ(r.n_train, 270u);
  ASSERT_EQ(r.models.size(), 3u);
  for (const auto& m : r.models) {
    EXPECT_EQ(m.test_scores.size(), 30u);
    EXPECT_EQ(m.report.total(), 30);
    EXPECT_FALSE(m.report.threshold_source.empty());
  }
  EXPECT_NE(r.table().markdown().find("tfidf"), std::string::npos);
}

}  // namespace
}  // namespace cogscreen
