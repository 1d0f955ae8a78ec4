#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "cogscreen/pipeline.h"

namespace cogscreen {

struct LoopConfig {
  int min_age = 65;
  // Only patients with no flagged diagnosis code or medication are queried.
  bool require_unflagged = true;
  // Queue a patient when |p - 0.5| < uncertainty_band.
  double uncertainty_band = 0.15;
  int batch_size = 10;
  // New non-uncertain labels needed before a retrain.
  int retrain_after = 10;
  // Attention tokens highlighted per window.
  int attention_top_k = 8;
  // Models rebuilt on retrain: any of "regex", "attention".
  std::vector<std::string> retrain_models = {"regex"};
  double test_fraction = 0.10;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const LoopConfig& c);
LoopConfig loop_config_from_json(const nlohmann::json& j);
LoopConfig load_loop_config(const std::filesystem::path& path);

enum class TaskStatus { kPending, kAssigned, kLabeled, kSkipped };
enum class AnnotationLabel { kPresent, kAbsent, kUncertain };

std::string_view to_string(TaskStatus s);
std::string_view to_string(AnnotationLabel l);
AnnotationLabel parse_annotation_label(std::string_view text);

// One display piece of a note. Segments of a note partition its raw text.
struct HighlightSegment {
  std::uint32_t begin = 0;
  std::uint32_t end = 0;
  std::vector<std::string> regex_tags;
  std::optional<double> attention_weight;

  bool highlighted() const { return !regex_tags.empty() || attention_weight.has_value(); }
  bool operator==(const HighlightSegment&) const = default;
};

struct SourceSpan {
  std::uint32_t begin = 0;
  std::uint32_t end = 0;
  std::string tag;               // category name for regex spans
  std::optional<double> weight;  // set for attention spans
};

// Splits [0, text_len) at every span boundary. Each piece carries the
// regex tags of all spans covering it and the largest covering attention
// weight; equal neighbours are merged.
std::vector<HighlightSegment> partition_highlights(std::uint32_t text_len, std::span<const SourceSpan> spans);

struct NoteView {
  std::string note_id;
  std::string date;
  std::string text;
  std::vector<HighlightSegment> segments;
};

struct AnnotationTask {
  std::string task_id;
  std::string patient_id;
  int iteration = 0;
  double probability = 0.0;
  TaskStatus status = TaskStatus::kPending;
  std::optional<AnnotationLabel> label;
  std::string annotator;
  std::string created_at;
  std::string updated_at;
};

nlohmann::json to_json(const AnnotationTask& t);

// Regex spans from the concept matches and attention spans from the top-k
// tokens of every window, mapped back to raw note offsets.
std::vector<NoteView> build_highlights(const PatientRecord& patient, const PreparedPatient& prepared,
                                       const ConceptLexicon& lexicon, const attn::ModelBundle* attention,
                                       int top_k);

// Append-only JSON Lines event log; every append is fsynced.
class Journal {
 public:
  explicit Journal(std::filesystem::path path);
  ~Journal();
  Journal(const Journal&) = delete;
  Journal& operator=(const Journal&) = delete;

  void append(const nlohmann::json& event);
  const std::filesystem::path& path() const { return path_; }

  // A torn final line (crash mid-append) is ignored; any other malformed
  // line is a ParseError.
  static std::vector<nlohmann::json> read(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

struct BoardCounts {
  std::map<std::string, std::size_t> by_status;
  std::map<std::string, std::size_t> by_label;
  std::size_t labels = 0;
  std::size_t labels_since_retrain = 0;
  int retrains = 0;
};

// Task state machine. All mutations are serialized and journaled before
// they become visible; replaying the journal rebuilds the same state.
class TaskBoard {
 public:
  // Without a journal path the board is in-memory only.
  explicit TaskBoard(std::optional<std::filesystem::path> journal = std::nullopt);

  // Tasks for patients that already have a task are skipped. Returns the
  // tasks actually created.
  std::vector<AnnotationTask> add_tasks(std::span<const std::pair<std::string, double>> scored, int iteration);

  // Oldest pending task moves to assigned. Empty when the queue is drained.
  std::optional<AnnotationTask> checkout(const std::string& annotator);
  AnnotationTask get(const std::string& task_id) const;
  AnnotationTask submit_label(const std::string& task_id, AnnotationLabel label, const std::string& annotator);
  AnnotationTask skip(const std::string& task_id, const std::string& annotator);

  std::vector<AnnotationTask> tasks() const;
  bool has_task_for(const std::string& patient_id) const;
  // Final labels excluding "uncertain".
  std::map<std::string, bool> gold_labels() const;
  BoardCounts counts() const;
  void mark_retrained(std::size_t labels_used);
  std::size_t journal_events() const;

 private:
  void apply(const nlohmann::json& event);
  void record(nlohmann::json event);

  mutable std::shared_mutex mu_;
  std::unique_ptr<Journal> journal_;
  std::vector<AnnotationTask> tasks_;
  std::map<std::string, std::size_t> by_id_;
  std::map<std::string, std::size_t> by_patient_;
  std::size_t labels_since_retrain_ = 0;
  int retrains_ = 0;
  std::size_t events_ = 0;
};

// Eligible, inside the uncertainty band, most uncertain first (ties by
// patient id), truncated to batch_size.
std::vector<std::string> select_candidates(const PreparedCorpus& patients, std::span<const double> scores,
                                           const LoopConfig& config);

bool eligible(const PreparedPatient& patient, const LoopConfig& config);

// Models the loop scores with; the attention model wins when both exist.
struct LoopModels {
  std::optional<LogisticModel> regex;
  std::optional<attn::ModelBundle> attention;
  double regex_threshold = 0.5;
  double attention_threshold = 0.5;
  int version = 0;

  bool empty() const { return !regex && !attention; }
};

struct IterationReport {
  int iteration = 0;
  std::size_t unlabeled = 0;
  std::size_t eligible = 0;
  std::size_t in_band = 0;
  std::vector<std::string> candidates;
  std::size_t tasks_created = 0;
  bool retrain_started = false;
  std::size_t labels_used = 0;
  std::optional<MetricsReport> test_metrics;
};

nlohmann::json to_json(const IterationReport& r);

class ActiveLoop {
 public:
  ActiveLoop(Corpus corpus, LoopModels models, LoopConfig config, const Preprocessor& pre,
             std::shared_ptr<const ConceptLexicon> lexicon, std::optional<std::filesystem::path> journal,
             ExperimentConfig experiment = {});
  ~ActiveLoop();

  // Scores unlabeled eligible patients, queues candidates and, once
  // retrain_after labels have arrived, retrains. With background = true the
  // retrain runs on a worker thread and the previous models keep serving.
  IterationReport run_iteration(bool background = false);
  void wait_for_retrain();
  bool retraining() const { return retraining_.load(); }

  TaskBoard& board() { return board_; }
  const TaskBoard& board() const { return board_; }
  std::shared_ptr<const LoopModels> models() const;
  std::vector<double> score(std::span<const std::size_t> rows) const;

  // Task with note text and highlight segments.
  nlohmann::json task_view(const std::string& task_id) const;
  nlohmann::json metrics() const;

  const PreparedCorpus& prepared() const { return prepared_; }
  int retrain_count() const { return retrain_count_.load(); }

 private:
  std::optional<bool> label_of(std::size_t row, const std::map<std::string, bool>& extra) const;
  void retrain(std::map<std::string, bool> extra, std::size_t labels_used);

  Corpus corpus_;
  PreparedCorpus prepared_;
  std::map<std::string, std::size_t> row_of_;
  std::shared_ptr<const ConceptLexicon> lexicon_;
  LoopConfig config_;
  ExperimentConfig experiment_;
  TaskBoard board_;
  std::vector<std::size_t> test_rows_;
  std::vector<char> is_test_;

  mutable std::mutex models_mu_;
  std::shared_ptr<const LoopModels> models_;
  std::optional<MetricsReport> last_metrics_;
  std::mutex iterate_mu_;
  std::atomic<bool> retraining_{false};
  std::atomic<int> retrain_count_{0};
  std::thread worker_;
  int iteration_ = 0;
};

}  // namespace cogscreen
