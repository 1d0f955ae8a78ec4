#include "cogscreen/pipeline.h"

#include <algorithm>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "cogscreen/error.h"
#include "cogscreen/io.h"

namespace cogscreen {

using nlohmann::json;

PreparedCorpus prepare_corpus(const Corpus& corpus, const Preprocessor& pre, const ConceptLexicon& lexicon) {
  std::vector<PreparedPatient> all(corpus.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& src = corpus[i];
    auto& p = all[i];
    p.patient_id = src.patient_id;
    p.age = src.age;
    p.gold_label = src.gold_label;
    p.structured = flag_structured(src);
    for (const auto& note : src.notes) {
      auto clean = pre.run(note);
      if (clean.text.empty()) continue;
      if (!p.document.empty()) p.document += ' ';
      p.document += clean.text;
      p.notes.push_back(std::move(clean));
    }
    p.concepts = concept_features(p.notes, lexicon, &p.matches);
  }
  PreparedCorpus out;
  for (auto& p : all) {
    if (p.notes.empty()) {
      spdlog::debug("dropping patient {}: no usable notes", p.patient_id);
      continue;
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<int> labels_of(const PreparedCorpus& patients) {
  std::vector<int> y;
  y.reserve(patients.size());
  for (const auto& p : patients) {
    if (!p.gold_label) throw DataError("patient " + p.patient_id + " has no gold label");
    y.push_back(*p.gold_label ? 1 : 0);
  }
  return y;
}

Matrix structured_matrix(const PreparedCorpus& patients) {
  Matrix x(static_cast<Eigen::Index>(patients.size()), 2);
  for (std::size_t i = 0; i < patients.size(); ++i) {
    x(static_cast<Eigen::Index>(i), 0) = static_cast<double>(patients[i].structured.med_count);
    x(static_cast<Eigen::Index>(i), 1) = static_cast<double>(patients[i].structured.icd_count);
  }
  return x;
}

Matrix concept_matrix(const PreparedCorpus& patients, std::size_t n_categories) {
  Matrix x(static_cast<Eigen::Index>(patients.size()), static_cast<Eigen::Index>(n_categories));
  for (std::size_t i = 0; i < patients.size(); ++i) {
    const auto& c = patients[i].concepts.counts;
    if (c.size() != n_categories) throw DataError("concept count width does not match the lexicon");
    for (std::size_t k = 0; k < n_categories; ++k) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = static_cast<double>(c[k]);
    }
  }
  return x;
}

Matrix tfidf_matrix(const PreparedCorpus& patients, const TfIdfModel& model) {
  const auto selected = model.selected_indices();
  std::vector<int> column(model.vocab.size(), -1);
  for (std::size_t c = 0; c < selected.size(); ++c) column[static_cast<std::size_t>(selected[c])] = static_cast<int>(c);
  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(patients.size()), static_cast<Eigen::Index>(selected.size()));
  for (std::size_t i = 0; i < patients.size(); ++i) {
    for (const auto& [term, w] : transform(patients[i].document, model).entries) {
      x(static_cast<Eigen::Index>(i), column[static_cast<std::size_t>(term)]) = w;
    }
  }
  return x;
}

std::vector<std::string> tfidf_feature_names(const TfIdfModel& model) {
  std::vector<std::string> names;
  for (int i : model.selected_indices()) names.push_back(model.vocab.term(static_cast<std::size_t>(i)));
  return names;
}

std::vector<int> FeatureTable::known_labels() const {
  std::vector<int> y;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i]) throw DataError("patient " + ids[i] + " has no label");
    y.push_back(*labels[i]);
  }
  return y;
}

FeatureTable FeatureTable::labeled() const {
  FeatureTable out{{}, {}, names, {}};
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i]) continue;
    out.ids.push_back(ids[i]);
    out.labels.push_back(labels[i]);
    rows.push_back(static_cast<Eigen::Index>(i));
  }
  out.x = x(rows, Eigen::all);
  return out;
}

FeatureTable make_feature_table(const PreparedCorpus& patients, std::vector<std::string> names, Matrix x) {
  if (x.rows() != static_cast<Eigen::Index>(patients.size()) || x.cols() != static_cast<Eigen::Index>(names.size())) {
    throw DataError("feature matrix shape does not match patients and names");
  }
  FeatureTable t;
  for (const auto& p : patients) {
    t.ids.push_back(p.patient_id);
    t.labels.push_back(p.gold_label ? std::optional<int>(*p.gold_label ? 1 : 0) : std::nullopt);
  }
  t.names = std::move(names);
  t.x = std::move(x);
  return t;
}

std::string format_feature_csv(const FeatureTable& t) {
  std::string out = "patient_id,label";
  for (const auto& n : t.names) out += "," + n;
  out += "\n";
  char buf[40];
  for (std::size_t i = 0; i < t.ids.size(); ++i) {
    out += t.ids[i] + ",";
    if (t.labels[i]) out += std::to_string(*t.labels[i]);
    for (Eigen::Index j = 0; j < t.x.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), ",%.17g", t.x(static_cast<Eigen::Index>(i), j));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

FeatureTable read_feature_csv(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  std::vector<std::vector<std::string>> rows;
  std::size_t start = 0;
  while (start < content.size()) {
    auto end = content.find('\n', start);
    if (end == std::string::npos) end = content.size();
    std::string line = content.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    start = end + 1;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t a = 0;
    for (;;) {
      const auto b = line.find(',', a);
      cells.push_back(line.substr(a, b == std::string::npos ? std::string::npos : b - a));
      if (b == std::string::npos) break;
      a = b + 1;
    }
    rows.push_back(std::move(cells));
  }
  if (rows.empty() || rows[0].size() < 2 || rows[0][0] != "patient_id" || rows[0][1] != "label") {
    throw ParseError(path.string(), 1, "header", "expected header patient_id,label,...");
  }
  FeatureTable t;
  t.names.assign(rows[0].begin() + 2, rows[0].end());
  t.x.resize(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(t.names.size()));
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& c = rows[r];
    if (c.size() != rows[0].size()) {
      throw ParseError(path.string(), r + 1, "row", "expected " + std::to_string(rows[0].size()) + " columns");
    }
    t.ids.push_back(c[0]);
    if (c[1].empty()) {
      t.labels.push_back(std::nullopt);
    } else if (c[1] == "0" || c[1] == "1") {
      t.labels.push_back(c[1] == "1");
    } else {
      throw ParseError(path.string(), r + 1, "label", "label must be 0, 1 or empty");
    }
    for (std::size_t j = 2; j < c.size(); ++j) {
      char* end = nullptr;
      const double v = std::strtod(c[j].c_str(), &end);
      if (c[j].empty() || *end != '\0') throw ParseError(path.string(), r + 1, t.names[j - 2], "not a number");
      t.x(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(j - 2)) = v;
    }
  }
  return t;
}

std::string_view model_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kBaseline: return "baseline";
    case ModelKind::kRegex: return "regex";
    case ModelKind::kTfIdf: return "tfidf";
    case ModelKind::kAttention: return "attention";
  }
  return "unknown";
}

ModelKind model_kind_from_name(std::string_view name) {
  for (auto k : {ModelKind::kBaseline, ModelKind::kRegex, ModelKind::kTfIdf, ModelKind::kAttention}) {
    if (model_name(k) == name) return k;
  }
  throw ConfigError("unknown model '" + std::string(name) + "' (expected baseline, regex, tfidf or attention)");
}

json to_json(const ExperimentConfig& c) {
  std::vector<std::string> models;
  for (auto k : c.models) models.emplace_back(model_name(k));
  return {{"test_fraction", c.test_fraction},
          {"validation_fraction", c.validation_fraction},
          {"cv_folds", c.cv_folds},
          {"corr_thresholds", c.corr_thresholds},
          {"attention", attn::to_json(c.attention)},
          {"windows", attn::to_json(c.windows)},
          {"train", attn::to_json(c.train)},
          {"min_token_freq", c.min_token_freq},
          {"models", models},
          {"seed", c.seed}};
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    c.cv_folds = j.value("cv_folds", c.cv_folds);
    c.corr_thresholds = j.value("corr_thresholds", c.corr_thresholds);
    if (j.contains("attention")) c.attention = attn::attn_config_from_json(j["attention"]);
    if (j.contains("windows")) c.windows = attn::window_config_from_json(j["windows"]);
    if (j.contains("train")) c.train = attn::train_config_from_json(j["train"]);
    c.min_token_freq = j.value("min_token_freq", c.min_token_freq);
    if (j.contains("models")) {
      c.models.clear();
      for (const auto& m : j["models"]) c.models.push_back(model_kind_from_name(m.get<std::string>()));
    }
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  if (!(c.test_fraction > 0 && c.test_fraction < 1)) throw ConfigError("test_fraction must be in (0, 1)");
  if (!(c.validation_fraction > 0 && c.validation_fraction < 1)) {
    throw ConfigError("validation_fraction must be in (0, 1)");
  }
  if (c.corr_thresholds.empty()) throw ConfigError("corr_thresholds must not be empty");
  return c;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(std::span<const int> labels,
                                                                                double fraction, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<char> held(labels.size(), 0);
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) idx.push_back(i);
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    for (std::size_t r = 0; r < take; ++r) held[idx[r]] = 1;
  }
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < labels.size(); ++i) (held[i] ? out.second : out.first).push_back(i);
  return out;
}

namespace {

template <typename T>
std::vector<T> pick(const std::vector<T>& v, std::span<const std::size_t> rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(v[r]);
  return out;
}

PreparedCorpus pick_patients(const PreparedCorpus& v, std::span<const std::size_t> rows) { return pick(v, rows); }

Vector sigmoid_scores(const Matrix& xs, const L1Solution& s) {
  Vector z = (xs * s.weights).array() + s.intercept;
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = 1.0 / (1.0 + std::exp(-z[i]));
  return z;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

ScoredSet scored_set(const PreparedCorpus& patients, std::span<const double> scores) {
  ScoredSet s;
  const auto y = labels_of(patients);
  for (std::size_t i = 0; i < patients.size(); ++i) s.add(patients[i].patient_id, scores[i], y[i]);
  return s;
}

}  // namespace

LinearFit fit_cv_linear(const Matrix& x, std::span<const int> labels, std::vector<std::string> names, int folds,
                        std::uint64_t seed) {
  const Vector y = to_vector(labels);
  const auto cv = cv_select_lambda(x, y, folds, {}, seed);
  LinearFit fit;
  fit.model = fit_l1_logistic(x, y, cv.chosen_lambda, std::move(names));
  const auto oof = to_std(cv.oof_scores);
  fit.threshold = best_accuracy_threshold(oof, labels).threshold;
  fit.threshold_source = "cross-validation";
  fit.selection_auc = cv.mean_auc[cv.chosen_index];
  return fit;
}

TfIdfFit fit_tfidf_model(const PreparedCorpus& train, std::span<const std::size_t> fit_rows,
                         std::span<const std::size_t> val_rows, std::span<const double> corr_thresholds) {
  const auto fit_part = pick_patients(train, fit_rows);
  const auto val_part = pick_patients(train, val_rows);
  const auto y_fit = labels_of(fit_part);
  const auto y_val = labels_of(val_part);
  std::vector<std::string> docs;
  for (const auto& p : fit_part) docs.push_back(p.document);
  const TfIdfModel base = fit_tfidf(docs, y_fit);

  std::vector<double> thresholds(corr_thresholds.begin(), corr_thresholds.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  TfIdfFit best;
  double best_auc = -1;
  double best_lambda = 0;
  std::vector<double> best_val_scores;
  for (double t : thresholds) {
    TfIdfModel model;
    try {
      model = select_features(base, t);
    } catch (const ConfigError&) {
      continue;
    }
    const Matrix x_fit_raw = tfidf_matrix(fit_part, model);
    const auto stats = fit_standardization(x_fit_raw);
    const Matrix x_fit = standardize(x_fit_raw, stats);
    const Matrix x_val = standardize(tfidf_matrix(val_part, model), stats);
    const Vector y = to_vector(y_fit);
    const auto grid = lambda_grid(lambda_max(x_fit, y));
    const auto path = solve_l1_path(x_fit, y, grid, {}, true);
    for (const auto& s : path) {
      const auto scores = to_std(sigmoid_scores(x_val, s));
      const double auc = roc_auc(scores, y_val);
      if (auc > best_auc) {
        best_auc = auc;
        best.corr_threshold = t;
        best_lambda = s.lambda;
        best_val_scores = scores;
      }
    }
    spdlog::debug("tfidf threshold {:.3f}: {} features, path length {}", t, model.selected_indices().size(),
                  path.size());
  }
  if (best_auc < 0) throw ConfigError("no correlation threshold keeps any term");

  std::vector<std::string> all_docs;
  for (const auto& p : train) all_docs.push_back(p.document);
  const auto y_all = labels_of(train);
  best.vectorizer = select_features(fit_tfidf(all_docs, y_all), best.corr_threshold);
  best.linear.model = fit_l1_logistic(tfidf_matrix(train, best.vectorizer), to_vector(y_all), best_lambda,
                                      tfidf_feature_names(best.vectorizer));
  best.linear.threshold = best_accuracy_threshold(best_val_scores, y_val).threshold;
  best.linear.threshold_source = "validation";
  best.linear.selection_auc = best_auc;
  return best;
}

std::vector<attn::LabeledWindow> labeled_windows(const PreparedCorpus& patients, std::span<const std::size_t> rows,
                                                 const attn::TokenVocab& vocab, const attn::WindowConfig& windows) {
  std::vector<attn::LabeledWindow> out;
  for (auto r : rows) {
    const auto& p = patients[r];
    if (!p.gold_label) throw DataError("patient " + p.patient_id + " has no gold label");
    const auto doc = attn::tokenize_notes(p.notes, vocab);
    for (const auto& w : attn::slice_windows(doc.ids.size(), windows)) {
      out.push_back({{doc.ids.begin() + static_cast<std::ptrdiff_t>(w.begin),
                      doc.ids.begin() + static_cast<std::ptrdiff_t>(w.end)},
                     *p.gold_label ? 1 : 0});
    }
  }
  return out;
}

std::vector<double> attention_scores(const attn::ModelBundle& bundle, const PreparedCorpus& patients) {
  std::vector<double> scores(patients.size());
#pragma omp parallel for schedule(dynamic, 2)
  for (std::size_t i = 0; i < patients.size(); ++i) {
    const auto doc = attn::tokenize_notes(patients[i].notes, bundle.vocab);
    scores[i] = attn::predict_patient(bundle.model, doc, bundle.windows).probability;
  }
  return scores;
}

AttentionFit fit_attention_model(const PreparedCorpus& train, std::span<const std::size_t> fit_rows,
                                 std::span<const std::size_t> val_rows, const ExperimentConfig& config) {
  std::vector<std::string> docs;
  for (auto r : fit_rows) docs.push_back(train[r].document);
  AttentionFit fit;
  fit.bundle.vocab = attn::TokenVocab::build(docs, config.min_token_freq);
  fit.bundle.windows = config.windows;
  fit.bundle.train = config.train;
  auto cfg = config.attention;
  cfg.vocab_size = fit.bundle.vocab.size();
  fit.bundle.model = attn::AttnModel(cfg, config.train.seed);
  const auto data = labeled_windows(train, fit_rows, fit.bundle.vocab, config.windows);
  spdlog::info("attention: {} training windows, vocab {}", data.size(), cfg.vocab_size);
  fit.log = attn::train(fit.bundle.model, data, config.train);
  const auto val = pick_patients(train, val_rows);
  const auto scores = attention_scores(fit.bundle, val);
  fit.threshold = best_accuracy_threshold(scores, labels_of(val)).threshold;
  fit.bundle.threshold = fit.threshold;
  return fit;
}

ComparisonTable ExperimentResult::table() const {
  std::vector<std::pair<std::string, MetricsReport>> rows;
  for (const auto& m : models) rows.emplace_back(std::string(model_name(m.kind)), m.report);
  return compare_models(std::move(rows));
}

ExperimentResult run_experiment(const Corpus& corpus, const ExperimentConfig& config, const Preprocessor& pre,
                                const ConceptLexicon& lexicon) {
  Corpus labeled;
  for (const auto& p : corpus) {
    if (p.gold_label) labeled.push_back(p);
  }
  const auto split = split_train_test(labeled, config.test_fraction, config.seed);
  const auto train = prepare_corpus(split.train, pre, lexicon);
  const auto test = prepare_corpus(split.test, pre, lexicon);
  const auto y_train = labels_of(train);
  const auto y_test = labels_of(test);
  const auto [fit_rows, val_rows] = stratified_split(y_train, config.validation_fraction, config.seed + 1);

  ExperimentResult result;
  result.n_train = train.size();
  result.n_test = test.size();
  auto finish = [&](ModelKind kind, std::span<const double> scores, double threshold, const std::string& source,
                    json details) {
    ModelResult m{kind, scored_set(test, scores), {}, std::move(details)};
    m.report = metrics_report(m.test_scores, threshold);
    m.report.threshold_source = source;
    spdlog::info("{}: test AUC {:.3f}", model_name(kind), m.report.auc.value_or(0.0));
    result.models.push_back(std::move(m));
  };

  for (auto kind : config.models) {
    switch (kind) {
      case ModelKind::kBaseline:
      case ModelKind::kRegex: {
        const bool base = kind == ModelKind::kBaseline;
        const Matrix x_train = base ? structured_matrix(train) : concept_matrix(train, lexicon.size());
        const Matrix x_test = base ? structured_matrix(test) : concept_matrix(test, lexicon.size());
        auto fit = fit_cv_linear(x_train, y_train, base ? kStructuredFeatureNames : lexicon.names(), config.cv_folds,
                                 config.seed);
        finish(kind, to_std(predict_proba(fit.model, x_test)), fit.threshold, fit.threshold_source,
               {{"model", to_json(fit.model)}, {"cv_auc", fit.selection_auc}});
        break;
      }
      case ModelKind::kTfIdf: {
        auto fit = fit_tfidf_model(train, fit_rows, val_rows, config.corr_thresholds);
        const Matrix x_test = tfidf_matrix(test, fit.vectorizer);
        finish(kind, to_std(predict_proba(fit.linear.model, x_test)), fit.linear.threshold,
               fit.linear.threshold_source,
               {{"corr_threshold", fit.corr_threshold},
                {"n_features", fit.vectorizer.selected_indices().size()},
                {"lambda", fit.linear.model.lambda},
                {"validation_auc", fit.linear.selection_auc}});
        break;
      }
      case ModelKind::kAttention: {
        auto fit = fit_attention_model(train, fit_rows, val_rows, config);
        finish(kind, attention_scores(fit.bundle, test), fit.threshold, "validation",
               {{"epoch_loss", fit.log.epoch_loss}, {"vocab_size", fit.bundle.vocab.size()}});
        break;
      }
    }
  }
  return result;
}

}  // namespace cogscreen
