#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cogscreen/attention/model.h"
#include "cogscreen/concepts.h"
#include "cogscreen/corpus.h"
#include "cogscreen/logistic.h"
#include "cogscreen/metrics.h"
#include "cogscreen/preprocess.h"
#include "cogscreen/tfidf.h"

namespace cogscreen {

// Everything the four models read from one patient.
struct PreparedPatient {
  std::string patient_id;
  int age = 0;
  std::optional<bool> gold_label;
  StructuredFeatures structured;
  std::vector<CleanNote> notes;
  std::string document;  // clean notes joined by single spaces
  ConceptCounts concepts;
  std::vector<std::vector<ConceptMatch>> matches;  // per note
};

using PreparedCorpus = std::vector<PreparedPatient>;

// Patients without notes, or whose notes clean down to nothing, are dropped.
PreparedCorpus prepare_corpus(const Corpus& corpus, const Preprocessor& pre, const ConceptLexicon& lexicon);

std::vector<int> labels_of(const PreparedCorpus& patients);

inline const std::vector<std::string> kStructuredFeatureNames = {"med_count", "icd_count"};

Matrix structured_matrix(const PreparedCorpus& patients);
Matrix concept_matrix(const PreparedCorpus& patients, std::size_t n_categories);
Matrix tfidf_matrix(const PreparedCorpus& patients, const TfIdfModel& model);
std::vector<std::string> tfidf_feature_names(const TfIdfModel& model);

// Per-patient feature rows as exchanged between CLI stages:
// "patient_id,label,<feature>..." with an empty label when unknown.
struct FeatureTable {
  std::vector<std::string> ids;
  std::vector<std::optional<int>> labels;
  std::vector<std::string> names;
  Matrix x;

  std::vector<int> known_labels() const;
  // Rows with a gold label, in order.
  FeatureTable labeled() const;
};

FeatureTable make_feature_table(const PreparedCorpus& patients, std::vector<std::string> names, Matrix x);
std::string format_feature_csv(const FeatureTable& table);
FeatureTable read_feature_csv(const std::filesystem::path& path);

enum class ModelKind { kBaseline, kRegex, kTfIdf, kAttention };

std::string_view model_name(ModelKind kind);
ModelKind model_kind_from_name(std::string_view name);

struct ExperimentConfig {
  double test_fraction = 0.10;
  // Held out of the training part for Model 3 and Model 4 tuning.
  double validation_fraction = 0.10;
  int cv_folds = 10;
  std::vector<double> corr_thresholds = {0.05, 0.075, 0.1, 0.125, 0.15, 0.2, 0.25, 0.3};
  attn::AttnConfig attention;
  attn::WindowConfig windows;
  attn::TrainConfig train;
  int min_token_freq = 2;
  std::vector<ModelKind> models = {ModelKind::kBaseline, ModelKind::kRegex, ModelKind::kTfIdf,
                                   ModelKind::kAttention};
  std::uint64_t seed = 7;
};

nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

// A fitted linear model plus where its decision threshold came from.
struct LinearFit {
  LogisticModel model;
  double threshold = 0.5;
  std::string threshold_source;
  double selection_auc = 0.0;  // CV or validation AUC at the chosen setting
};

// Models 1 and 2: 10-fold CV picks lambda; the threshold maximizes accuracy
// on the out-of-fold scores.
LinearFit fit_cv_linear(const Matrix& x, std::span<const int> labels, std::vector<std::string> names, int folds,
                        std::uint64_t seed);

struct TfIdfFit {
  TfIdfModel vectorizer;
  LinearFit linear;
  double corr_threshold = 0.0;
};

// Model 3: correlation threshold and lambda chosen jointly on the
// validation split, then both refit on all of `train`.
TfIdfFit fit_tfidf_model(const PreparedCorpus& train, std::span<const std::size_t> fit_rows,
                         std::span<const std::size_t> val_rows, std::span<const double> corr_thresholds);

struct AttentionFit {
  attn::ModelBundle bundle;
  double threshold = 0.5;
  attn::TrainLog log;
};

std::vector<attn::LabeledWindow> labeled_windows(const PreparedCorpus& patients, std::span<const std::size_t> rows,
                                                 const attn::TokenVocab& vocab, const attn::WindowConfig& windows);

// Model 4: trained on fit_rows; the threshold maximizes validation accuracy
// of the patient-level mean window probability.
AttentionFit fit_attention_model(const PreparedCorpus& train, std::span<const std::size_t> fit_rows,
                                 std::span<const std::size_t> val_rows, const ExperimentConfig& config);

std::vector<double> attention_scores(const attn::ModelBundle& bundle, const PreparedCorpus& patients);

struct ModelResult {
  ModelKind kind;
  ScoredSet test_scores;
  MetricsReport report;
  nlohmann::json details;
};

struct ExperimentResult {
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::vector<ModelResult> models;

  ComparisonTable table() const;
};

ExperimentResult run_experiment(const Corpus& corpus, const ExperimentConfig& config, const Preprocessor& pre,
                                const ConceptLexicon& lexicon);

// Validation hold-out: round(fraction * n_class) rows of each class go to
// the second part. Both parts keep ascending row order.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(std::span<const int> labels,
                                                                                double fraction, std::uint64_t seed);

}  // namespace cogscreen
