#include "cogscreen/active_loop.h"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <spdlog/spdlog.h>

#include "cogscreen/error.h"
#include "cogscreen/io.h"

namespace cogscreen {

using nlohmann::json;

namespace {

std::string now_iso() {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::floor<std::chrono::seconds>(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now - secs).count();
  const std::time_t t = std::chrono::system_clock::to_time_t(secs);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

}  // namespace

// ---- config ---------------------------------------------------------------

void LoopConfig::validate() const {
  if (!(uncertainty_band > 0 && uncertainty_band <= 0.5)) throw ConfigError("uncertainty_band must be in (0, 0.5]");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (retrain_after < 1) throw ConfigError("retrain_after must be at least 1");
  if (min_age < 0) throw ConfigError("min_age must be nonnegative");
  if (attention_top_k < 0) throw ConfigError("attention_top_k must be nonnegative");
  if (!(test_fraction > 0 && test_fraction < 1)) throw ConfigError("test_fraction must be in (0, 1)");
  for (const auto& m : retrain_models) {
    if (m != "regex" && m != "attention") throw ConfigError("retrain_models: unknown model '" + m + "'");
  }
}

json to_json(const LoopConfig& c) {
  return {{"min_age", c.min_age},
          {"require_unflagged", c.require_unflagged},
          {"uncertainty_band", c.uncertainty_band},
          {"batch_size", c.batch_size},
          {"retrain_after", c.retrain_after},
          {"attention_top_k", c.attention_top_k},
          {"retrain_models", c.retrain_models},
          {"test_fraction", c.test_fraction},
          {"seed", c.seed}};
}

LoopConfig loop_config_from_json(const json& j) {
  static const std::set<std::string> known = {"min_age",          "require_unflagged", "uncertainty_band",
                                              "batch_size",       "retrain_after",     "attention_top_k",
                                              "retrain_models",   "test_fraction",     "seed"};
  if (!j.is_object()) throw ConfigError("LoopConfig must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown LoopConfig field '" + key + "'");
  }
  LoopConfig c;
  try {
    c.min_age = j.value("min_age", c.min_age);
    c.require_unflagged = j.value("require_unflagged", c.require_unflagged);
    c.uncertainty_band = j.value("uncertainty_band", c.uncertainty_band);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.retrain_after = j.value("retrain_after", c.retrain_after);
    c.attention_top_k = j.value("attention_top_k", c.attention_top_k);
    c.retrain_models = j.value("retrain_models", c.retrain_models);
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("LoopConfig: ") + e.what());
  }
  c.validate();
  return c;
}

LoopConfig load_loop_config(const std::filesystem::path& path) {
  try {
    return loop_config_from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string_view to_string(TaskStatus s) {
  switch (s) {
    case TaskStatus::kPending: return "pending";
    case TaskStatus::kAssigned: return "assigned";
    case TaskStatus::kLabeled: return "labeled";
    case TaskStatus::kSkipped: return "skipped";
  }
  return "pending";
}

std::string_view to_string(AnnotationLabel l) {
  switch (l) {
    case AnnotationLabel::kPresent: return "present";
    case AnnotationLabel::kAbsent: return "absent";
    case AnnotationLabel::kUncertain: return "uncertain";
  }
  return "uncertain";
}

AnnotationLabel parse_annotation_label(std::string_view text) {
  if (text == "present") return AnnotationLabel::kPresent;
  if (text == "absent") return AnnotationLabel::kAbsent;
  if (text == "uncertain") return AnnotationLabel::kUncertain;
  throw ConfigError("label must be present, absent or uncertain (got '" + std::string(text) + "')");
}

json to_json(const AnnotationTask& t) {
  json j = {{"task_id", t.task_id},     {"patient_id", t.patient_id}, {"iteration", t.iteration},
            {"probability", t.probability}, {"status", to_string(t.status)}, {"annotator", t.annotator},
            {"created_at", t.created_at}, {"updated_at", t.updated_at}};
  j["label"] = t.label ? json(to_string(*t.label)) : json(nullptr);
  return j;
}

// ---- highlights -----------------------------------------------------------

std::vector<HighlightSegment> partition_highlights(std::uint32_t text_len, std::span<const SourceSpan> spans) {
  std::vector<std::uint32_t> cuts = {0, text_len};
  for (const auto& s : spans) {
    if (s.begin > s.end || s.end > text_len) throw DataError("highlight span outside the note text");
    cuts.push_back(s.begin);
    cuts.push_back(s.end);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  std::vector<HighlightSegment> out;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    HighlightSegment seg{cuts[c], cuts[c + 1], {}, std::nullopt};
    for (const auto& s : spans) {
      if (s.begin > seg.begin || s.end < seg.end || s.begin == s.end) continue;
      if (s.weight) {
        seg.attention_weight = std::max(seg.attention_weight.value_or(0.0), *s.weight);
      } else {
        seg.regex_tags.push_back(s.tag);
      }
    }
    std::sort(seg.regex_tags.begin(), seg.regex_tags.end());
    seg.regex_tags.erase(std::unique(seg.regex_tags.begin(), seg.regex_tags.end()), seg.regex_tags.end());
    if (!out.empty() && out.back().regex_tags == seg.regex_tags && out.back().attention_weight == seg.attention_weight) {
      out.back().end = seg.end;
    } else {
      out.push_back(std::move(seg));
    }
  }
  return out;
}

std::vector<NoteView> build_highlights(const PatientRecord& patient, const PreparedPatient& prepared,
                                       const ConceptLexicon& lexicon, const attn::ModelBundle* attention,
                                       int top_k) {
  if (prepared.matches.size() != prepared.notes.size()) throw DataError("concept matches are missing for " + patient.patient_id);
  std::map<std::string, std::size_t> note_row;
  for (std::size_t i = 0; i < patient.notes.size(); ++i) note_row[patient.notes[i].note_id] = i;
  std::vector<std::vector<SourceSpan>> spans(patient.notes.size());

  for (std::size_t n = 0; n < prepared.notes.size(); ++n) {
    const auto& clean = prepared.notes[n];
    if (clean.origin.size() != clean.text.size()) throw DataError("note " + clean.note_id + " has no offset map");
    const auto row = note_row.at(clean.note_id);
    for (const auto& m : prepared.matches[n]) {
      const auto [b, e] = clean.raw_span(m.begin, m.end);
      spans[row].push_back({b, e, lexicon.categories()[m.category].name, std::nullopt});
    }
  }

  if (attention && top_k > 0) {
    const auto doc = attn::tokenize_notes(prepared.notes, attention->vocab);
    std::map<std::size_t, double> token_weight;
    for (const auto& w : attn::slice_windows(doc.ids.size(), attention->windows)) {
      const std::span<const int> ids(doc.ids.data() + w.begin, w.size());
      for (const auto& h : attn::attention_highlights(attention->model, ids, static_cast<std::size_t>(top_k))) {
        auto& slot = token_weight[w.begin + h.position];
        slot = std::max(slot, h.weight);
      }
    }
    for (const auto& [tok, weight] : token_weight) {
      const auto& clean = prepared.notes[doc.note_index[tok]];
      const auto row = note_row.at(clean.note_id);
      const auto& s = doc.spans[tok];
      spans[row].push_back({s.raw_begin, s.raw_end, {}, weight});
    }
  }

  std::vector<NoteView> out;
  for (std::size_t i = 0; i < patient.notes.size(); ++i) {
    const auto& note = patient.notes[i];
    out.push_back({note.note_id, note.date.iso(), note.text,
                   partition_highlights(static_cast<std::uint32_t>(note.text.size()), spans[i])});
  }
  return out;
}

// ---- journal --------------------------------------------------------------

Journal::Journal(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error("cannot open journal " + path_.string() + ": " + std::strerror(errno));
}

Journal::~Journal() {
  if (fd_ >= 0) ::close(fd_);
}

void Journal::append(const json& event) {
  const std::string line = event.dump() + "\n";
  std::size_t done = 0;
  while (done < line.size()) {
    const auto n = ::write(fd_, line.data() + done, line.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error("journal write failed: " + std::string(std::strerror(errno)));
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) throw Error("journal fsync failed: " + std::string(std::strerror(errno)));
}

std::vector<json> Journal::read(const std::filesystem::path& path) {
  std::vector<json> events;
  if (!std::filesystem::exists(path)) return events;
  const std::string content = read_file(path);
  std::size_t start = 0, line_no = 0;
  while (start < content.size()) {
    auto end = content.find('\n', start);
    const bool torn = end == std::string::npos;
    if (torn) end = content.size();
    ++line_no;
    const std::string_view line(content.data() + start, end - start);
    if (!line.empty()) {
      try {
        events.push_back(json::parse(line));
      } catch (const json::parse_error& e) {
        if (!torn) throw ParseError(path.string(), line_no, "event", e.what());
        spdlog::warn("{}: ignoring torn final journal line {}", path.string(), line_no);
      }
    }
    start = end + 1;
  }
  return events;
}

// ---- task board -----------------------------------------------------------

TaskBoard::TaskBoard(std::optional<std::filesystem::path> journal) {
  if (!journal) return;
  for (const auto& event : Journal::read(*journal)) apply(event);
  journal_ = std::make_unique<Journal>(*journal);
}

void TaskBoard::apply(const json& e) {
  try {
    const auto type = e.at("type").get<std::string>();
    ++events_;
    if (type == "retrained") {
      labels_since_retrain_ = 0;
      ++retrains_;
      return;
    }
    const auto id = e.at("task_id").get<std::string>();
    if (type == "created") {
      AnnotationTask t;
      t.task_id = id;
      t.patient_id = e.at("patient_id").get<std::string>();
      t.iteration = e.at("iteration").get<int>();
      t.probability = e.at("probability").get<double>();
      t.created_at = t.updated_at = e.at("ts").get<std::string>();
      if (by_id_.contains(id)) throw DataError("journal creates task " + id + " twice");
      by_id_[id] = tasks_.size();
      by_patient_[t.patient_id] = tasks_.size();
      tasks_.push_back(std::move(t));
      return;
    }
    auto& t = tasks_.at(by_id_.at(id));
    t.updated_at = e.at("ts").get<std::string>();
    t.annotator = e.at("annotator").get<std::string>();
    if (type == "assigned") {
      t.status = TaskStatus::kAssigned;
    } else if (type == "labeled") {
      t.status = TaskStatus::kLabeled;
      t.label = parse_annotation_label(e.at("label").get<std::string>());
      if (*t.label != AnnotationLabel::kUncertain) ++labels_since_retrain_;
    } else if (type == "skipped") {
      t.status = TaskStatus::kSkipped;
    } else {
      throw DataError("unknown journal event type '" + type + "'");
    }
  } catch (const json::exception& ex) {
    throw DataError(std::string("malformed journal event: ") + ex.what());
  } catch (const std::out_of_range&) {
    throw DataError("journal event refers to an unknown task");
  }
}

void TaskBoard::record(json event) {
  event["ts"] = now_iso();
  if (journal_) journal_->append(event);
  apply(event);
}

std::vector<AnnotationTask> TaskBoard::add_tasks(std::span<const std::pair<std::string, double>> scored, int iteration) {
  std::unique_lock lock(mu_);
  std::vector<AnnotationTask> created;
  for (const auto& [patient, p] : scored) {
    if (by_patient_.contains(patient)) continue;
    char id[32];
    std::snprintf(id, sizeof(id), "T%03d-", iteration);
    record({{"type", "created"},
            {"task_id", std::string(id) + patient},
            {"patient_id", patient},
            {"iteration", iteration},
            {"probability", p}});
    created.push_back(tasks_.back());
  }
  return created;
}

std::optional<AnnotationTask> TaskBoard::checkout(const std::string& annotator) {
  std::unique_lock lock(mu_);
  for (const auto& t : tasks_) {
    if (t.status != TaskStatus::kPending) continue;
    record({{"type", "assigned"}, {"task_id", t.task_id}, {"annotator", annotator}});
    return tasks_[by_id_.at(t.task_id)];
  }
  return std::nullopt;
}

AnnotationTask TaskBoard::get(const std::string& task_id) const {
  std::shared_lock lock(mu_);
  auto it = by_id_.find(task_id);
  if (it == by_id_.end()) throw NotFoundError("no task '" + task_id + "'");
  return tasks_[it->second];
}

AnnotationTask TaskBoard::submit_label(const std::string& task_id, AnnotationLabel label, const std::string& annotator) {
  std::unique_lock lock(mu_);
  auto it = by_id_.find(task_id);
  if (it == by_id_.end()) throw NotFoundError("no task '" + task_id + "'");
  const auto& t = tasks_[it->second];
  if (t.status == TaskStatus::kLabeled) {
    if (t.label == label) return t;
    throw ConflictError("task " + task_id + " is already labeled '" + std::string(to_string(*t.label)) + "'");
  }
  if (t.status != TaskStatus::kAssigned) {
    throw ConflictError("task " + task_id + " is " + std::string(to_string(t.status)) + ", not assigned");
  }
  record({{"type", "labeled"},
          {"task_id", task_id},
          {"patient_id", t.patient_id},
          {"label", to_string(label)},
          {"annotator", annotator}});
  return tasks_[it->second];
}

AnnotationTask TaskBoard::skip(const std::string& task_id, const std::string& annotator) {
  std::unique_lock lock(mu_);
  auto it = by_id_.find(task_id);
  if (it == by_id_.end()) throw NotFoundError("no task '" + task_id + "'");
  const auto& t = tasks_[it->second];
  if (t.status == TaskStatus::kSkipped) return t;
  if (t.status != TaskStatus::kAssigned) {
    throw ConflictError("task " + task_id + " is " + std::string(to_string(t.status)) + ", not assigned");
  }
  record({{"type", "skipped"}, {"task_id", task_id}, {"annotator", annotator}});
  return tasks_[it->second];
}

std::vector<AnnotationTask> TaskBoard::tasks() const {
  std::shared_lock lock(mu_);
  return tasks_;
}

bool TaskBoard::has_task_for(const std::string& patient_id) const {
  std::shared_lock lock(mu_);
  return by_patient_.contains(patient_id);
}

std::map<std::string, bool> TaskBoard::gold_labels() const {
  std::shared_lock lock(mu_);
  std::map<std::string, bool> out;
  for (const auto& t : tasks_) {
    if (t.status == TaskStatus::kLabeled && t.label != AnnotationLabel::kUncertain) {
      out[t.patient_id] = t.label == AnnotationLabel::kPresent;
    }
  }
  return out;
}

BoardCounts TaskBoard::counts() const {
  std::shared_lock lock(mu_);
  BoardCounts c;
  for (auto s : {TaskStatus::kPending, TaskStatus::kAssigned, TaskStatus::kLabeled, TaskStatus::kSkipped}) {
    c.by_status[std::string(to_string(s))] = 0;
  }
  for (const auto& t : tasks_) {
    ++c.by_status[std::string(to_string(t.status))];
    if (t.label) {
      ++c.by_label[std::string(to_string(*t.label))];
      ++c.labels;
    }
  }
  c.labels_since_retrain = labels_since_retrain_;
  c.retrains = retrains_;
  return c;
}

void TaskBoard::mark_retrained(std::size_t labels_used) {
  std::unique_lock lock(mu_);
  record({{"type", "retrained"}, {"labels_used", labels_used}});
}

std::size_t TaskBoard::journal_events() const {
  std::shared_lock lock(mu_);
  return events_;
}

// ---- candidate selection --------------------------------------------------

bool eligible(const PreparedPatient& p, const LoopConfig& config) {
  if (p.age < config.min_age) return false;
  if (config.require_unflagged && (p.structured.med_count > 0 || p.structured.icd_count > 0)) return false;
  return true;
}

std::vector<std::string> select_candidates(const PreparedCorpus& patients, std::span<const double> scores,
                                           const LoopConfig& config) {
  config.validate();
  if (scores.size() != patients.size()) throw DataError("one score per patient is required");
  std::vector<std::pair<double, const std::string*>> pool;
  for (std::size_t i = 0; i < patients.size(); ++i) {
    if (patients[i].gold_label || !eligible(patients[i], config)) continue;
    const double margin = std::abs(scores[i] - 0.5);
    if (margin < config.uncertainty_band) pool.emplace_back(margin, &patients[i].patient_id);
  }
  std::sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : *a.second < *b.second;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < pool.size() && out.size() < static_cast<std::size_t>(config.batch_size); ++i) {
    out.push_back(*pool[i].second);
  }
  return out;
}

json to_json(const IterationReport& r) {
  json j = {{"iteration", r.iteration},         {"unlabeled", r.unlabeled},
            {"eligible", r.eligible},           {"in_band", r.in_band},
            {"candidates", r.candidates},       {"tasks_created", r.tasks_created},
            {"retrain_started", r.retrain_started}, {"labels_used", r.labels_used}};
  j["test_metrics"] = r.test_metrics ? to_json(*r.test_metrics) : json(nullptr);
  return j;
}

// ---- loop -----------------------------------------------------------------

ActiveLoop::ActiveLoop(Corpus corpus, LoopModels models, LoopConfig config, const Preprocessor& pre,
                       std::shared_ptr<const ConceptLexicon> lexicon, std::optional<std::filesystem::path> journal,
                       ExperimentConfig experiment)
    : corpus_(std::move(corpus)),
      lexicon_(std::move(lexicon)),
      config_(std::move(config)),
      experiment_(std::move(experiment)),
      board_(std::move(journal)),
      models_(std::make_shared<const LoopModels>(std::move(models))) {
  config_.validate();
  if (models_->empty()) throw ConfigError("the active loop needs at least one trained model");
  prepared_ = prepare_corpus(corpus_, pre, *lexicon_);
  for (std::size_t i = 0; i < prepared_.size(); ++i) row_of_[prepared_[i].patient_id] = i;

  std::vector<std::size_t> labeled;
  for (std::size_t i = 0; i < prepared_.size(); ++i) {
    if (prepared_[i].gold_label) labeled.push_back(i);
  }
  is_test_.assign(prepared_.size(), 0);
  if (labeled.size() >= 10) {
    std::vector<int> y;
    for (auto i : labeled) y.push_back(*prepared_[i].gold_label ? 1 : 0);
    const auto [_, held] = stratified_split(y, config_.test_fraction, config_.seed);
    for (auto h : held) {
      test_rows_.push_back(labeled[h]);
      is_test_[labeled[h]] = 1;
    }
  }
}

ActiveLoop::~ActiveLoop() {
  if (worker_.joinable()) worker_.join();
}

std::shared_ptr<const LoopModels> ActiveLoop::models() const {
  std::lock_guard lock(models_mu_);
  return models_;
}

std::vector<double> ActiveLoop::score(std::span<const std::size_t> rows) const {
  const auto m = models();
  std::vector<double> out(rows.size());
  if (m->attention) {
    PreparedCorpus subset;
    for (auto r : rows) subset.push_back(prepared_[r]);
    return attention_scores(*m->attention, subset);
  }
  PreparedCorpus subset;
  for (auto r : rows) subset.push_back(prepared_[r]);
  const Vector p = predict_proba(*m->regex, concept_matrix(subset, lexicon_->size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = p[static_cast<Eigen::Index>(i)];
  return out;
}

std::optional<bool> ActiveLoop::label_of(std::size_t row, const std::map<std::string, bool>& extra) const {
  if (prepared_[row].gold_label) return prepared_[row].gold_label;
  auto it = extra.find(prepared_[row].patient_id);
  if (it != extra.end()) return it->second;
  return std::nullopt;
}

IterationReport ActiveLoop::run_iteration(bool background) {
  std::lock_guard lock(iterate_mu_);
  IterationReport report;
  report.iteration = ++iteration_;
  const auto extra = board_.gold_labels();

  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < prepared_.size(); ++i) {
    if (label_of(i, extra)) continue;
    ++report.unlabeled;
    if (board_.has_task_for(prepared_[i].patient_id) || !eligible(prepared_[i], config_)) continue;
    pool.push_back(i);
  }
  report.eligible = pool.size();
  const auto scores = score(pool);
  PreparedCorpus subset;
  for (auto r : pool) {
    subset.push_back(prepared_[r]);
    subset.back().gold_label.reset();
  }
  for (double s : scores) report.in_band += std::abs(s - 0.5) < config_.uncertainty_band ? 1 : 0;
  report.candidates = select_candidates(subset, scores, config_);
  std::vector<std::pair<std::string, double>> queued;
  for (const auto& id : report.candidates) {
    const auto k = static_cast<std::size_t>(std::find_if(subset.begin(), subset.end(), [&](const auto& p) {
                                              return p.patient_id == id;
                                            }) - subset.begin());
    queued.emplace_back(id, scores[k]);
  }
  report.tasks_created = board_.add_tasks(queued, report.iteration).size();

  const auto counts = board_.counts();
  if (counts.labels_since_retrain >= static_cast<std::size_t>(config_.retrain_after) && !retraining_.load()) {
    report.retrain_started = true;
    report.labels_used = extra.size();
    board_.mark_retrained(extra.size());
    retraining_ = true;
    if (worker_.joinable()) worker_.join();
    if (background) {
      worker_ = std::thread([this, extra] { retrain(extra, extra.size()); });
    } else {
      retrain(extra, extra.size());
      std::lock_guard mlock(models_mu_);
      report.test_metrics = last_metrics_;
    }
  }
  spdlog::info("iteration {}: {} eligible, {} queued, retrain {}", report.iteration, report.eligible,
               report.tasks_created, report.retrain_started);
  return report;
}

void ActiveLoop::wait_for_retrain() {
  std::lock_guard lock(iterate_mu_);
  if (worker_.joinable()) worker_.join();
}

void ActiveLoop::retrain(std::map<std::string, bool> extra, std::size_t labels_used) {
  try {
    PreparedCorpus train, test;
    for (std::size_t i = 0; i < prepared_.size(); ++i) {
      const auto label = label_of(i, extra);
      if (!label) continue;
      auto p = prepared_[i];
      p.gold_label = label;
      (is_test_[i] ? test : train).push_back(std::move(p));
    }
    auto next = std::make_shared<LoopModels>(*models());
    ++next->version;
    const auto y = labels_of(train);
    for (const auto& name : config_.retrain_models) {
      if (name == "regex") {
        auto fit = fit_cv_linear(concept_matrix(train, lexicon_->size()), y, lexicon_->names(),
                                 experiment_.cv_folds, config_.seed);
        next->regex = std::move(fit.model);
        next->regex_threshold = fit.threshold;
      } else {
        std::vector<int> yy = y;
        const auto [fit_rows, val_rows] = stratified_split(yy, experiment_.validation_fraction, config_.seed);
        auto fit = fit_attention_model(train, fit_rows, val_rows, experiment_);
        next->attention = std::move(fit.bundle);
        next->attention_threshold = fit.threshold;
      }
    }
    std::optional<MetricsReport> metrics;
    if (!test.empty()) {
      std::vector<double> scores;
      double threshold = 0.5;
      if (next->attention) {
        scores = attention_scores(*next->attention, test);
        threshold = next->attention_threshold;
      } else {
        const Vector p = predict_proba(*next->regex, concept_matrix(test, lexicon_->size()));
        scores.assign(p.data(), p.data() + p.size());
        threshold = next->regex_threshold;
      }
      ScoredSet s;
      const auto yt = labels_of(test);
      for (std::size_t i = 0; i < test.size(); ++i) s.add(test[i].patient_id, scores[i], yt[i]);
      metrics = metrics_report(s, threshold);
      metrics->threshold_source = "validation";
    }
    {
      std::lock_guard lock(models_mu_);
      models_ = std::move(next);
      last_metrics_ = metrics;
    }
    ++retrain_count_;
    spdlog::info("retrained on {} labels ({} from annotation)", train.size(), labels_used);
  } catch (const std::exception& e) {
    spdlog::error("retrain failed: {}", e.what());
  }
  retraining_ = false;
}

json ActiveLoop::task_view(const std::string& task_id) const {
  const auto task = board_.get(task_id);
  auto it = row_of_.find(task.patient_id);
  if (it == row_of_.end()) throw NotFoundError("patient " + task.patient_id + " is not in the corpus");
  const auto& prepared = prepared_[it->second];
  const auto record = std::find_if(corpus_.begin(), corpus_.end(),
                                   [&](const auto& p) { return p.patient_id == task.patient_id; });
  const auto m = models();
  const auto notes = build_highlights(*record, prepared, *lexicon_, m->attention ? &*m->attention : nullptr,
                                      config_.attention_top_k);
  json j = to_json(task);
  j["patient"] = {{"age", prepared.age},
                  {"sex", to_string(record->sex)},
                  {"med_count", prepared.structured.med_count},
                  {"icd_count", prepared.structured.icd_count}};
  j["categories"] = lexicon_->names();
  j["notes"] = json::array();
  for (const auto& n : notes) {
    json segs = json::array();
    for (const auto& s : n.segments) {
      json seg = {{"begin", s.begin},
                  {"end", s.end},
                  {"text", n.text.substr(s.begin, s.end - s.begin)},
                  {"regex_tags", s.regex_tags}};
      seg["attention_weight"] = s.attention_weight ? json(*s.attention_weight) : json(nullptr);
      segs.push_back(std::move(seg));
    }
    j["notes"].push_back({{"note_id", n.note_id}, {"date", n.date}, {"text", n.text}, {"segments", segs}});
  }
  return j;
}

json ActiveLoop::metrics() const {
  const auto c = board_.counts();
  const auto m = models();
  json j = {{"labels", c.labels},
            {"labels_since_retrain", c.labels_since_retrain},
            {"tasks", c.by_status},
            {"by_label", c.by_label},
            {"retrains", c.retrains},
            {"model_version", m->version},
            {"retraining", retraining_.load()}};
  std::lock_guard lock(models_mu_);
  j["test_metrics"] = last_metrics_ ? to_json(*last_metrics_) : json(nullptr);
  return j;
}

}  // namespace cogscreen
