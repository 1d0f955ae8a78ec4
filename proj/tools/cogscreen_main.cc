// cogscreen: generate -> preprocess -> features -> train -> evaluate -> serve.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cogscreen/active_loop.h"
#include "cogscreen/error.h"
#include "cogscreen/io.h"
#include "cogscreen/manifest.h"
#include "cogscreen/pipeline.h"
#include "cogscreen/service.h"
#include "cogscreen/synthetic.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cogscreen;

namespace {

struct Context {
  std::vector<std::string> argv;
  RunManifest manifest;
  std::string preprocess_config;
  std::string lexicon_path;

  void begin(std::string command) {
    manifest.command = std::move(command);
    manifest.argv = argv;
    manifest.started_at = utc_timestamp();
  }

  Preprocessor preprocessor() {
    if (preprocess_config.empty()) return Preprocessor();
    manifest.add_config("preprocess", preprocess_config);
    return Preprocessor(load_preprocess_config(preprocess_config));
  }

  std::shared_ptr<const ConceptLexicon> lexicon() {
    if (lexicon_path.empty()) {
      return std::make_shared<const ConceptLexicon>(ConceptLexicon::standard());
    }
    manifest.add_config("lexicon", lexicon_path);
    auto lex = std::make_shared<const ConceptLexicon>(ConceptLexicon::from_file(lexicon_path));
    if (lex->nonstandard_size()) {
      spdlog::warn("lexicon has {} categories, not the standard {}", lex->size(), kStandardCategoryCount);
    }
    return lex;
  }

  Corpus corpus(const std::string& path) {
    manifest.add_input(path);
    return load_corpus(path);
  }

  void emit(const fs::path& out, const std::string& content) {
    atomic_write(out, content);
    manifest.add_output(out);
  }

  void finish(const fs::path& primary) { write_manifest(manifest, primary); }
};

bool is_csv(const std::string& path) { return fs::path(path).extension() == ".csv"; }

std::string scores_csv(const std::vector<std::string>& ids, std::span<const double> scores,
                       const std::vector<std::optional<int>>& labels) {
  ScoredSet s;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!labels[i]) throw DataError("scores CSV needs labels; patient " + ids[i] + " is unlabeled");
    s.add(ids[i], scores[i], *labels[i]);
  }
  return format_scores_csv(s);
}

FeatureTable features_for(Context& ctx, ModelKind kind, const std::string& path, const std::string& tfidf_path) {
  if (is_csv(path)) {
    ctx.manifest.add_input(path);
    return read_feature_csv(path);
  }
  const auto corpus = ctx.corpus(path);
  const auto lexicon = ctx.lexicon();
  const auto prepared = prepare_corpus(corpus, ctx.preprocessor(), *lexicon);
  switch (kind) {
    case ModelKind::kBaseline:
      return make_feature_table(prepared, kStructuredFeatureNames, structured_matrix(prepared));
    case ModelKind::kRegex:
      return make_feature_table(prepared, lexicon->names(), concept_matrix(prepared, lexicon->size()));
    case ModelKind::kTfIdf: {
      if (tfidf_path.empty()) throw ConfigError("--tfidf is required to featurize a corpus for the tfidf model");
      ctx.manifest.add_input(tfidf_path);
      const auto model = tfidf_from_json(json::parse(read_file(tfidf_path)));
      return make_feature_table(prepared, tfidf_feature_names(model), tfidf_matrix(prepared, model));
    }
    case ModelKind::kAttention:
      break;
  }
  throw ConfigError("train-linear does not handle the attention model; use train-attn");
}

// Columns of `t` rearranged into `order`; a missing feature is an error.
Matrix align_columns(const FeatureTable& t, const std::vector<std::string>& order) {
  Matrix x(t.x.rows(), static_cast<Eigen::Index>(order.size()));
  for (std::size_t j = 0; j < order.size(); ++j) {
    const auto it = std::find(t.names.begin(), t.names.end(), order[j]);
    if (it == t.names.end()) throw DataError("feature '" + order[j] + "' is missing from the input");
    x.col(static_cast<Eigen::Index>(j)) = t.x.col(it - t.names.begin());
  }
  return x;
}

ExperimentConfig experiment_config(Context& ctx, const std::string& path) {
  if (path.empty()) return {};
  ctx.manifest.add_config("experiment", path);
  return experiment_config_from_json(json::parse(read_file(path)));
}

LoopModels loop_models(Context& ctx, const std::string& regex_path, const std::string& attn_path) {
  LoopModels m;
  if (!regex_path.empty()) {
    ctx.manifest.add_input(regex_path);
    const auto j = json::parse(read_file(regex_path));
    m.regex = logistic_from_json(j.at("model"));
    m.regex_threshold = j.value("threshold", 0.5);
  }
  if (!attn_path.empty()) {
    ctx.manifest.add_input(attn_path);
    m.attention = attn::load_bundle(attn_path);
    m.attention_threshold = m.attention->threshold;
  }
  if (m.empty()) throw ConfigError("give --regex-model and/or --attn-model");
  return m;
}

AnnotationService* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("cogscreen"));
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");

  Context ctx;
  ctx.argv.assign(argv, argv + argc);
  CLI::App app{"Cognitive-concern screening from clinical notes"};
  app.require_subcommand(1);
  app.fallthrough();
  app.footer("Environment: COGSCREEN_DATA_DIR overrides the directory holding default_lexicon.json.\n"
             "Exit codes: 0 ok, 1 runtime failure, 2 usage error.");
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_option("--preprocess-config", ctx.preprocess_config, "PreprocessConfig JSON")->check(CLI::ExistingFile);
  app.add_option("--lexicon", ctx.lexicon_path, "Concept lexicon JSON (default: the shipped 15 categories)")
      ->check(CLI::ExistingFile);
  std::string stage;
  std::function<void()> action;

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic corpus");
  std::string gen_config, gen_out;
  std::uint64_t gen_seed = 7;
  std::optional<int> gen_n;
  std::optional<double> gen_prev;
  gen->add_option("--config", gen_config, "GenConfig JSON")->check(CLI::ExistingFile);
  gen->add_option("--seed", gen_seed, "Random seed")->capture_default_str();
  gen->add_option("--n-patients", gen_n, "Override n_patients");
  gen->add_option("--prevalence", gen_prev, "Override prevalence");
  gen->add_option("--out", gen_out, "Corpus JSONL")->required();
  gen->callback([&] {
    action = [&] {
      ctx.begin("generate");
      GenConfig cfg;
      if (!gen_config.empty()) {
        ctx.manifest.add_config("generator", gen_config);
        cfg = load_gen_config(gen_config);
      }
      if (gen_n) cfg.n_patients = *gen_n;
      if (gen_prev) cfg.prevalence = *gen_prev;
      cfg.validate();
      ctx.manifest.seeds["generator"] = gen_seed;
      const auto corpus = generate_synthetic_corpus(cfg, gen_seed);
      std::ostringstream out;
      write_corpus(out, corpus);
      ctx.emit(gen_out, out.str());
      std::size_t pos = 0;
      for (const auto& p : corpus) pos += p.gold_label.value_or(false) ? 1 : 0;
      ctx.manifest.summary = {{"patients", corpus.size()}, {"positives", pos}, {"config", to_json(cfg)}};
      ctx.finish(gen_out);
      spdlog::info("wrote {} patients ({} positive) to {}", corpus.size(), pos, gen_out);
    };
  });

  // preprocess
  auto* prep = app.add_subcommand("preprocess", "Clean notes and report the length reduction");
  std::string prep_corpus, prep_out;
  prep->add_option("--in,--corpus", prep_corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  prep->add_option("--out", prep_out, "Corpus JSONL with cleaned note text")->required();
  prep->add_option("--config", ctx.preprocess_config, "PreprocessConfig JSON")->check(CLI::ExistingFile);
  prep->callback([&] {
    action = [&] {
      ctx.begin("preprocess");
      auto corpus = ctx.corpus(prep_corpus);
      const auto pre = ctx.preprocessor();
      std::vector<Note> raw;
      std::vector<CleanNote> clean;
      for (auto& p : corpus) {
        auto cleaned = preprocess_notes(p.notes, pre);
        std::vector<Note> kept;
        for (std::size_t i = 0; i < cleaned.size(); ++i) {
          raw.push_back(p.notes[i]);
          kept.push_back({p.notes[i].note_id, p.notes[i].date, cleaned[i].text});
          clean.push_back(std::move(cleaned[i]));
        }
        p.notes = std::move(kept);
      }
      std::ostringstream os;
      write_corpus(os, corpus);
      const std::string out = os.str();
      ctx.emit(prep_out, out);
      const double ratio = raw.empty() ? 0.0 : corpus_reduction_ratio(raw, clean);
      ctx.manifest.summary = {{"notes", raw.size()}, {"reduction_ratio", ratio}};
      ctx.finish(prep_out);
      std::printf("notes %zu reduction_ratio %.4f\n", raw.size(), ratio);
    };
  });

  // match
  auto* match = app.add_subcommand("match", "Concept-category counts (or structured flags) per patient");
  std::string match_corpus, match_out, match_spans;
  bool match_structured = false;
  match->add_option("--corpus", match_corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  match->add_option("--out", match_out, "Feature CSV")->required();
  match->add_option("--spans-out", match_spans, "Per-note match spans (JSONL)");
  match->add_flag("--structured", match_structured, "Emit flagged medication/ICD counts instead");
  match->callback([&] {
    action = [&] {
      ctx.begin("match");
      const auto corpus = ctx.corpus(match_corpus);
      const auto lexicon = ctx.lexicon();
      const auto prepared = prepare_corpus(corpus, ctx.preprocessor(), *lexicon);
      const auto table = match_structured
                             ? make_feature_table(prepared, kStructuredFeatureNames, structured_matrix(prepared))
                             : make_feature_table(prepared, lexicon->names(), concept_matrix(prepared, lexicon->size()));
      ctx.emit(match_out, format_feature_csv(table));
      if (!match_spans.empty()) {
        std::string out;
        for (const auto& p : prepared) {
          for (std::size_t n = 0; n < p.notes.size(); ++n) {
            json ms = json::array();
            for (const auto& m : p.matches[n]) {
              const auto [rb, re] = p.notes[n].raw_span(m.begin, m.end);
              ms.push_back({{"category", lexicon->categories()[m.category].name},
                            {"text", p.notes[n].text.substr(m.begin, m.end - m.begin)},
                            {"clean", {m.begin, m.end}},
                            {"raw", {rb, re}}});
            }
            out += json{{"patient_id", p.patient_id}, {"note_id", p.notes[n].note_id}, {"matches", ms}}.dump() + "\n";
          }
        }
        ctx.emit(match_spans, out);
      }
      ctx.manifest.summary = {{"patients", prepared.size()}, {"features", table.names.size()}};
      ctx.finish(match_out);
    };
  });

  // tfidf
  auto* tfidf = app.add_subcommand("tfidf", "Fit, apply and rank TF-IDF features");
  tfidf->require_subcommand(1);
  auto* tfit = tfidf->add_subcommand("fit", "Fit vocabulary, idf and label correlations");
  std::string tf_corpus, tf_out, tf_model, tf_basis = "tfidf";
  double tf_threshold = 0.0;
  int tf_min_df = 2;
  std::size_t tf_top = 20;
  tfit->add_option("--corpus", tf_corpus, "Labeled corpus JSONL")->required()->check(CLI::ExistingFile);
  tfit->add_option("--threshold", tf_threshold, "Keep terms with |corr| >= threshold")->capture_default_str();
  tfit->add_option("--min-df", tf_min_df, "Minimum document frequency")->capture_default_str();
  tfit->add_option("--basis", tf_basis, "Correlate the label with tfidf weights or term presence")
      ->check(CLI::IsMember({"tfidf", "presence"}))
      ->capture_default_str();
  tfit->add_option("--out", tf_out, "Vectorizer JSON")->required();
  tfit->callback([&] {
    action = [&] {
      ctx.begin("tfidf fit");
      const auto corpus = ctx.corpus(tf_corpus);
      const auto prepared = prepare_corpus(corpus, ctx.preprocessor(), *ctx.lexicon());
      std::vector<std::string> docs;
      for (const auto& p : prepared) docs.push_back(p.document);
      TfIdfOptions opt;
      opt.min_df = tf_min_df;
      opt.basis = tf_basis == "presence" ? CorrelationBasis::kPresence : CorrelationBasis::kTfIdf;
      auto model = select_features(fit_tfidf(docs, labels_of(prepared), opt), tf_threshold);
      ctx.emit(tf_out, to_json(model).dump() + "\n");
      ctx.manifest.summary = {{"vocabulary", model.vocab.size()}, {"selected", model.selected_indices().size()}};
      ctx.finish(tf_out);
    };
  });
  auto* tapply = tfidf->add_subcommand("transform", "Featurize a corpus with a fitted vectorizer");
  tapply->add_option("--model", tf_model, "Vectorizer JSON")->required()->check(CLI::ExistingFile);
  tapply->add_option("--corpus", tf_corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  tapply->add_option("--out", tf_out, "Feature CSV")->required();
  tapply->callback([&] {
    action = [&] {
      ctx.begin("tfidf transform");
      ctx.emit(tf_out, format_feature_csv(features_for(ctx, ModelKind::kTfIdf, tf_corpus, tf_model)));
      ctx.finish(tf_out);
    };
  });
  auto* trank = tfidf->add_subcommand("rank", "Terms by absolute label correlation");
  trank->add_option("--model", tf_model, "Vectorizer JSON")->required()->check(CLI::ExistingFile);
  trank->add_option("--top", tf_top, "Rows to print")->capture_default_str();
  trank->add_option("--out", tf_out, "Write the table here instead of stdout");
  trank->callback([&] {
    action = [&] {
      ctx.begin("tfidf rank");
      ctx.manifest.add_input(tf_model);
      const auto model = tfidf_from_json(json::parse(read_file(tf_model)));
      const auto table = format_rank_table(rank_terms(model, tf_top));
      if (tf_out.empty()) {
        std::fputs(table.c_str(), stdout);
      } else {
        ctx.emit(tf_out, table);
        ctx.finish(tf_out);
      }
    };
  });

  // train-linear
  auto* tl = app.add_subcommand("train-linear", "L1 logistic regression with CV-chosen lambda");
  std::string tl_kind, tl_train, tl_test, tl_tfidf, tl_out, tl_scores;
  int tl_folds = 10;
  std::uint64_t tl_seed = 7;
  tl->add_option("--model", tl_kind, "baseline, regex or tfidf")
      ->required()
      ->check(CLI::IsMember({"baseline", "regex", "tfidf"}));
  tl->add_option("--train", tl_train, "Feature CSV or corpus JSONL")->required()->check(CLI::ExistingFile);
  tl->add_option("--test", tl_test, "Feature CSV or corpus JSONL to score")->check(CLI::ExistingFile);
  tl->add_option("--tfidf", tl_tfidf, "Vectorizer JSON (tfidf model on corpus input)")->check(CLI::ExistingFile);
  tl->add_option("--folds", tl_folds, "CV folds")->capture_default_str();
  tl->add_option("--seed", tl_seed, "Fold assignment seed")->capture_default_str();
  tl->add_option("--out", tl_out, "Model JSON")->required();
  tl->add_option("--scores-out", tl_scores, "Scores CSV for --test");
  tl->callback([&] {
    action = [&] {
      ctx.begin("train-linear");
      ctx.manifest.seeds["folds"] = tl_seed;
      const auto kind = model_kind_from_name(tl_kind);
      const auto all = features_for(ctx, kind, tl_train, tl_tfidf);
      const auto train = all.labeled();
      if (train.ids.size() < all.ids.size()) {
        spdlog::info("training on {} labeled of {} patients", train.ids.size(), all.ids.size());
      }
      const auto fit = fit_cv_linear(train.x, train.known_labels(), train.names, tl_folds, tl_seed);
      json artifact = {{"kind", tl_kind},
                       {"model", to_json(fit.model)},
                       {"threshold", fit.threshold},
                       {"threshold_source", fit.threshold_source},
                       {"cv_auc", fit.selection_auc}};
      ctx.emit(tl_out, artifact.dump(2) + "\n");
      if (!tl_test.empty()) {
        if (tl_scores.empty()) throw ConfigError("--test needs --scores-out");
        const auto test = features_for(ctx, kind, tl_test, tl_tfidf);
        const Vector p = predict_proba(fit.model, align_columns(test, fit.model.feature_names));
        ctx.emit(tl_scores, scores_csv(test.ids, std::span<const double>(p.data(), static_cast<std::size_t>(p.size())),
                                       test.labels));
      }
      ctx.manifest.summary = {{"lambda", fit.model.lambda}, {"cv_auc", fit.selection_auc}, {"threshold", fit.threshold}};
      ctx.finish(tl_out);
      spdlog::info("{}: lambda {:.4g}, CV AUC {:.3f}", tl_kind, fit.model.lambda, fit.selection_auc);
    };
  });

  // train-attn
  auto* ta = app.add_subcommand("train-attn", "Train the windowed-attention classifier");
  std::string ta_corpus, ta_config, ta_out, ta_preset = "desk";
  std::optional<std::uint64_t> ta_seed;
  std::optional<int> ta_epochs;
  ta->add_option("--corpus", ta_corpus, "Labeled training corpus JSONL")->required()->check(CLI::ExistingFile);
  ta->add_option("--config", ta_config, "Experiment JSON (attention/windows/train sections)")->check(CLI::ExistingFile);
  ta->add_option("--preset", ta_preset, "Optimizer preset")->check(CLI::IsMember({"desk", "full"}))->capture_default_str();
  ta->add_option("--seed", ta_seed, "Training seed");
  ta->add_option("--epochs", ta_epochs, "Override epochs");
  ta->add_option("--out", ta_out, "Model container (.cgs); the sidecar goes to <out>.json")->required();
  ta->callback([&] {
    action = [&] {
      ctx.begin("train-attn");
      auto cfg = experiment_config(ctx, ta_config);
      if (ta_preset == "full") {
        const auto seed = cfg.train.seed;
        cfg.train = attn::TrainConfig::full_preset();
        cfg.train.seed = seed;
      }
      if (ta_seed) cfg.train.seed = *ta_seed;
      if (ta_epochs) cfg.train.epochs = *ta_epochs;
      cfg.train.validate();
      ctx.manifest.seeds["train"] = cfg.train.seed;
      const auto corpus = ctx.corpus(ta_corpus);
      const auto prepared = prepare_corpus(corpus, ctx.preprocessor(), *ctx.lexicon());
      const auto [fit_rows, val_rows] = stratified_split(labels_of(prepared), cfg.validation_fraction, cfg.train.seed);
      const auto fit = fit_attention_model(prepared, fit_rows, val_rows, cfg);
      attn::save_bundle(fit.bundle, ta_out);
      ctx.manifest.add_output(ta_out);
      ctx.manifest.add_output(ta_out + ".json");
      ctx.manifest.summary = {{"epoch_loss", fit.log.epoch_loss}, {"threshold", fit.threshold},
                              {"vocab_size", fit.bundle.vocab.size()}};
      ctx.finish(ta_out);
    };
  });

  // predict-attn
  auto* pa = app.add_subcommand("predict-attn", "Score patients with a trained attention model");
  std::string pa_model, pa_corpus, pa_scores, pa_attention;
  int pa_top_k = 8;
  pa->add_option("--model", pa_model, "Model container")->required()->check(CLI::ExistingFile);
  pa->add_option("--corpus", pa_corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  pa->add_option("--scores-out", pa_scores, "Scores CSV")->required();
  pa->add_option("--emit-attention", pa_attention, "Per-window predictions and top attention spans (JSONL)");
  pa->add_option("--top-k", pa_top_k, "Tokens per window for --emit-attention")->capture_default_str();
  pa->callback([&] {
    action = [&] {
      ctx.begin("predict-attn");
      ctx.manifest.add_input(pa_model);
      const auto bundle = attn::load_bundle(pa_model);
      const auto corpus = ctx.corpus(pa_corpus);
      const auto prepared = prepare_corpus(corpus, ctx.preprocessor(), *ctx.lexicon());
      const auto scores = attention_scores(bundle, prepared);
      std::vector<std::string> ids;
      std::vector<std::optional<int>> labels;
      for (const auto& p : prepared) {
        ids.push_back(p.patient_id);
        labels.push_back(p.gold_label ? std::optional<int>(*p.gold_label) : std::nullopt);
      }
      ctx.emit(pa_scores, scores_csv(ids, scores, labels));
      if (!pa_attention.empty()) {
        std::string out;
        for (const auto& p : prepared) {
          const auto doc = attn::tokenize_notes(p.notes, bundle.vocab);
          const auto pred = attn::predict_patient(bundle.model, doc, bundle.windows);
          json windows = json::array();
          for (const auto& w : pred.windows) {
            json top = json::array();
            const std::span<const int> win(doc.ids.data() + w.span.begin, w.span.size());
            for (const auto& h : attn::attention_highlights(bundle.model, win, static_cast<std::size_t>(pa_top_k))) {
              const auto tok = w.span.begin + h.position;
              const auto& note = p.notes[doc.note_index[tok]];
              const auto& s = doc.spans[tok];
              top.push_back({{"note_id", note.note_id},
                             {"token", note.text.substr(s.clean_begin, s.clean_end - s.clean_begin)},
                             {"raw", {s.raw_begin, s.raw_end}},
                             {"weight", h.weight}});
            }
            windows.push_back({{"begin", w.span.begin}, {"end", w.span.end}, {"probability", w.probability},
                               {"top_tokens", top}});
          }
          out += json{{"patient_id", p.patient_id}, {"label", pred.label}, {"probability", pred.probability},
                      {"windows", windows}}.dump() + "\n";
        }
        ctx.emit(pa_attention, out);
      }
      ctx.finish(pa_scores);
    };
  });

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "AUC, threshold and confusion metrics for a scores CSV");
  std::string ev_scores, ev_out, ev_threshold_from;
  std::optional<double> ev_threshold;
  ev->add_option("--scores", ev_scores, "Scores CSV (patient_id,score,label)")->required()->check(CLI::ExistingFile);
  auto* ev_t = ev->add_option("--threshold", ev_threshold, "Fixed decision threshold");
  ev->add_option("--threshold-from", ev_threshold_from, "Model JSON or attention sidecar carrying a threshold")
      ->check(CLI::ExistingFile)
      ->excludes(ev_t);
  ev->add_option("--out", ev_out, "report.json or report.md")->required();
  ev->callback([&] {
    action = [&] {
      ctx.begin("evaluate");
      ctx.manifest.add_input(ev_scores);
      const auto set = read_scores_csv(ev_scores);
      double threshold = 0;
      std::string source;
      if (ev_threshold) {
        threshold = *ev_threshold;
        source = "fixed";
      } else if (!ev_threshold_from.empty()) {
        ctx.manifest.add_input(ev_threshold_from);
        threshold = json::parse(read_file(ev_threshold_from)).at("threshold").get<double>();
        source = "validation";
      } else {
        threshold = best_accuracy_threshold(set).threshold;
        source = "same-set";
        spdlog::warn("threshold chosen on the evaluated set itself (optimistic)");
      }
      auto report = metrics_report(set, threshold);
      report.threshold_source = source;
      const bool md = fs::path(ev_out).extension() == ".md";
      ctx.emit(ev_out, md ? compare_models({{fs::path(ev_scores).stem().string(), report}}).markdown()
                          : to_json(report).dump(2) + "\n");
      ctx.manifest.summary = to_json(report);
      ctx.finish(ev_out);
    };
  });

  // compare
  auto* cmp = app.add_subcommand("compare", "Side-by-side comparison table");
  std::vector<std::string> cmp_inputs;
  std::string cmp_out;
  cmp->add_option("inputs", cmp_inputs, "name=report.json or name=scores.csv (same-set threshold)")->required();
  cmp->add_option("--out", cmp_out, "table.md or table.json (default: markdown on stdout)");
  cmp->callback([&] {
    action = [&] {
      ctx.begin("compare");
      std::vector<std::pair<std::string, MetricsReport>> rows;
      for (const auto& arg : cmp_inputs) {
        const auto eq = arg.find('=');
        const std::string path = eq == std::string::npos ? arg : arg.substr(eq + 1);
        const std::string name = eq == std::string::npos ? fs::path(arg).stem().string() : arg.substr(0, eq);
        if (!fs::exists(path)) throw ConfigError("no such file: " + path);
        ctx.manifest.add_input(path);
        if (is_csv(path)) {
          const auto set = read_scores_csv(path);
          auto r = metrics_report(set, best_accuracy_threshold(set).threshold);
          r.threshold_source = "same-set";
          rows.emplace_back(name, r);
        } else {
          rows.emplace_back(name, metrics_from_json(json::parse(read_file(path))));
        }
      }
      const auto table = compare_models(std::move(rows));
      if (cmp_out.empty()) {
        std::fputs(table.markdown().c_str(), stdout);
        return;
      }
      ctx.emit(cmp_out, fs::path(cmp_out).extension() == ".json" ? table.to_json().dump(2) + "\n" : table.markdown());
      ctx.finish(cmp_out);
    };
  });

  // serve / iterate share the loop inputs
  std::string lp_corpus, lp_regex, lp_attn, lp_config, lp_journal, lp_experiment;
  std::vector<std::string> lp_models;
  auto loop_options = [&](CLI::App* sub) {
    sub->add_option("--corpus", lp_corpus, "Corpus JSONL (labeled and unlabeled patients)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--regex-model", lp_regex, "Model JSON from train-linear --model regex")->check(CLI::ExistingFile);
    sub->add_option("--attn-model", lp_attn, "Model container from train-attn")->check(CLI::ExistingFile);
    sub->add_option("--models", lp_models, "Model files; *.json is a regex model, anything else an attention container")
        ->check(CLI::ExistingFile);
    sub->add_option("--loop-config", lp_config, "LoopConfig JSON")->check(CLI::ExistingFile);
    sub->add_option("--journal", lp_journal, "Label journal (JSONL)")->required();
    sub->add_option("--experiment-config", lp_experiment, "Settings used when retraining")->check(CLI::ExistingFile);
  };
  auto make_loop = [&]() {
    LoopConfig cfg;
    if (!lp_config.empty()) {
      ctx.manifest.add_config("loop", lp_config);
      cfg = load_loop_config(lp_config);
    }
    ctx.manifest.seeds["loop"] = cfg.seed;
    for (const auto& m : lp_models) (fs::path(m).extension() == ".json" ? lp_regex : lp_attn) = m;
    auto models = loop_models(ctx, lp_regex, lp_attn);
    auto corpus = ctx.corpus(lp_corpus);
    const auto exp = experiment_config(ctx, lp_experiment);
    return std::make_unique<ActiveLoop>(std::move(corpus), std::move(models), cfg, ctx.preprocessor(), ctx.lexicon(),
                                        fs::path(lp_journal), exp);
  };

  auto* serve = app.add_subcommand("serve", "Run the annotation service");
  std::string sv_host = "127.0.0.1", sv_static;
  int sv_port = 8080;
  loop_options(serve);
  serve->add_option("--host", sv_host, "Bind address")->capture_default_str();
  serve->add_option("--port", sv_port, "Port")->envname("COGSCREEN_PORT")->capture_default_str();
  serve->add_option("--static", sv_static, "Directory of UI assets to serve at /")->check(CLI::ExistingDirectory);
  serve->callback([&] {
    action = [&] {
      ctx.begin("serve");
      auto loop = make_loop();
      AnnotationService service(*loop, sv_static);
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      service.run(sv_host, sv_port);
      g_service = nullptr;
      loop->wait_for_retrain();
    };
  });

  auto* iter = app.add_subcommand("iterate", "Run one active-learning iteration offline");
  std::string it_out;
  loop_options(iter);
  iter->add_option("--out", it_out, "Iteration report JSON")->required();
  iter->callback([&] {
    action = [&] {
      ctx.begin("iterate");
      auto loop = make_loop();
      const auto report = loop->run_iteration(false);
      ctx.emit(it_out, to_json(report).dump(2) + "\n");
      ctx.manifest.summary = to_json(report);
      ctx.finish(it_out);
    };
  });

  // experiment
  auto* ex = app.add_subcommand("experiment", "All four models on one or more synthetic corpora");
  std::string ex_corpus, ex_gen, ex_config, ex_out, ex_table;
  std::vector<std::uint64_t> ex_seeds = {7};
  ex->add_option("--corpus", ex_corpus, "Use this corpus instead of generating one")->check(CLI::ExistingFile);
  ex->add_option("--gen-config", ex_gen, "GenConfig JSON for generated corpora")->check(CLI::ExistingFile);
  ex->add_option("--config", ex_config, "Experiment JSON")->check(CLI::ExistingFile);
  ex->add_option("--seeds", ex_seeds, "Corpus/split seeds")->delimiter(',');
  ex->add_option("--out", ex_out, "Results JSON")->required();
  ex->add_option("--table-out", ex_table, "Mean comparison table (markdown)");
  ex->callback([&] {
    action = [&] {
      ctx.begin("experiment");
      auto cfg = experiment_config(ctx, ex_config);
      GenConfig gen;
      if (!ex_gen.empty()) {
        ctx.manifest.add_config("generator", ex_gen);
        gen = load_gen_config(ex_gen);
      }
      const auto pre = ctx.preprocessor();
      const auto lexicon = ctx.lexicon();
      std::optional<Corpus> fixed;
      if (!ex_corpus.empty()) fixed = ctx.corpus(ex_corpus);
      json runs = json::array();
      std::map<std::string, std::vector<double>> aucs;
      for (auto seed : ex_seeds) {
        ctx.manifest.seeds["run" + std::to_string(runs.size())] = seed;
        cfg.seed = seed;
        cfg.train.seed = seed;
        const auto corpus = fixed ? *fixed : generate_synthetic_corpus(gen, seed);
        const auto result = run_experiment(corpus, cfg, pre, *lexicon);
        json models = json::object();
        for (const auto& m : result.models) {
          const std::string name(model_name(m.kind));
          models[name] = {{"report", to_json(m.report)}, {"details", m.details}};
          aucs[name].push_back(m.report.auc.value_or(0.5));
        }
        runs.push_back({{"seed", seed}, {"n_train", result.n_train}, {"n_test", result.n_test}, {"models", models},
                        {"table", result.table().to_json()}});
        std::fputs(result.table().markdown().c_str(), stdout);
      }
      json mean = json::object();
      std::string md = "| Model | Mean AUC | Runs |\n|---|---|---|\n";
      for (const auto& [name, v] : aucs) {
        const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        mean[name] = m;
        char row[128];
        std::snprintf(row, sizeof(row), "| %s | %.3f | %zu |\n", name.c_str(), m, v.size());
        md += row;
      }
      ctx.emit(ex_out, json{{"config", to_json(cfg)}, {"runs", runs}, {"mean_auc", mean}}.dump(2) + "\n");
      if (!ex_table.empty()) ctx.emit(ex_table, md);
      std::fputs(md.c_str(), stdout);
      ctx.manifest.summary = {{"mean_auc", mean}};
      ctx.finish(ex_out);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (verbose) spdlog::set_level(spdlog::level::debug);
  for (const auto* sub : app.get_subcommands()) {
    stage = sub->get_name();
    for (const auto* inner : sub->get_subcommands()) stage += " " + inner->get_name();
  }
  try {
    action();
  } catch (const ParseError& e) {
    spdlog::error("{}: {}", stage, e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("{}: {}", stage, e.what());
    return 1;
  }
  return 0;
}
