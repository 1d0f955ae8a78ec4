#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <thread>

#include "cogscreen/active_loop.h"
#include "cogscreen/error.h"
#include "cogscreen/io.h"
#include "cogscreen/synthetic.h"

namespace cogscreen {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "cogscreen_loop_test";
  fs::create_directories(dir);
  const auto p = dir / name;
  fs::remove(p);
  return p;
}

// One segment per run of characters with identical (tags, weight).
std::vector<HighlightSegment> partition_oracle(std::uint32_t len, const std::vector<SourceSpan>& spans) {
  std::vector<HighlightSegment> out;
  for (std::uint32_t i = 0; i < len; ++i) {
    HighlightSegment s{i, i + 1, {}, {}};
    for (const auto& sp : spans) {
      if (sp.begin > i || sp.end <= i) continue;
      if (sp.weight) {
        s.attention_weight = std::max(s.attention_weight.value_or(-1.0), *sp.weight);
      } else {
        s.regex_tags.push_back(sp.tag);
      }
    }
    std::sort(s.regex_tags.begin(), s.regex_tags.end());
    s.regex_tags.erase(std::unique(s.regex_tags.begin(), s.regex_tags.end()), s.regex_tags.end());
    if (!out.empty() && out.back().regex_tags == s.regex_tags && out.back().attention_weight == s.attention_weight) {
      out.back().end = i + 1;
    } else {
      out.push_back(s);
    }
  }
  return out;
}

TEST(PartitionHighlights, MatchesCharacterOracle) {
  std::mt19937_64 rng(1);
  const std::vector<std::string> tags = {"memory", "caregiver", "wandering"};
  for (int rep = 0; rep < 500; ++rep) {
    const auto len = static_cast<std::uint32_t>(std::uniform_int_distribution<int>(1, 40)(rng));
    std::vector<SourceSpan> spans;
    const int n = std::uniform_int_distribution<int>(0, 5)(rng);
    for (int k = 0; k < n; ++k) {
      auto a = static_cast<std::uint32_t>(rng() % len), b = static_cast<std::uint32_t>(rng() % (len + 1));
      if (a > b) std::swap(a, b);
      if (a == b) continue;
      if (rng() % 2) {
        spans.push_back({a, b, tags[rng() % tags.size()], std::nullopt});
      } else {
        spans.push_back({a, b, "", static_cast<double>(rng() % 4) / 4.0});
      }
    }
    ASSERT_EQ(partition_highlights(len, spans), partition_oracle(len, spans)) << "rep " << rep;
  }
}

TEST(PartitionHighlights, TwoRegexMatchesAndOverlap) {
  const std::vector<SourceSpan> two = {{2, 5, "memory", {}}, {8, 10, "caregiver", {}}};
  const auto segs = partition_highlights(12, two);
  EXPECT_EQ(std::count_if(segs.begin(), segs.end(), [](const auto& s) { return s.highlighted(); }), 2);
  const std::vector<SourceSpan> overlap = {{0, 6, "memory", {}}, {4, 9, "", 0.3}};
  const auto o = partition_highlights(10, overlap);
  ASSERT_EQ(o.size(), 4u);
  EXPECT_EQ(o[0], (HighlightSegment{0, 4, {"memory"}, {}}));
  EXPECT_EQ(o[1], (HighlightSegment{4, 6, {"memory"}, 0.3}));
  EXPECT_EQ(o[2], (HighlightSegment{6, 9, {}, 0.3}));
  EXPECT_EQ(o[3], (HighlightSegment{9, 10, {}, {}}));
  const auto plain = partition_highlights(7, {});
  ASSERT_EQ(plain.size(), 1u);
  EXPECT_FALSE(plain[0].highlighted());
}

std::vector<std::pair<std::string, double>> scored(int n) {
  std::vector<std::pair<std::string, double>> out;
  for (int i = 0; i < n; ++i) out.emplace_back("P" + std::to_string(1000 + i), 0.5);
  return out;
}

TEST(TaskBoard, LifecycleAndErrors) {
  const auto path = scratch("lifecycle.jsonl");
  TaskBoard board(path);
  const auto created = board.add_tasks(scored(2), 1);
  ASSERT_EQ(created.size(), 2u);
  EXPECT_TRUE(board.add_tasks(scored(2), 2).empty());
  EXPECT_THROW(board.submit_label(created[0].task_id, AnnotationLabel::kPresent, "a"), ConflictError);
  const auto t = board.checkout("alice");
  ASSERT_TRUE(t);
  EXPECT_EQ(t->task_id, created[0].task_id);
  EXPECT_EQ(t->status, TaskStatus::kAssigned);
  const auto events = board.journal_events();
  const auto size = fs::file_size(path);
  const auto labeled = board.submit_label(t->task_id, AnnotationLabel::kPresent, "alice");
  EXPECT_EQ(labeled.status, TaskStatus::kLabeled);
  EXPECT_EQ(board.journal_events(), events + 1);
  EXPECT_GT(fs::file_size(path), size);
  const auto after = fs::file_size(path);
  board.submit_label(t->task_id, AnnotationLabel::kPresent, "alice");
  EXPECT_EQ(fs::file_size(path), after);
  EXPECT_THROW(board.submit_label(t->task_id, AnnotationLabel::kAbsent, "alice"), ConflictError);
  EXPECT_EQ(fs::file_size(path), after);
  EXPECT_THROW(board.submit_label("T999-nobody", AnnotationLabel::kAbsent, "a"), NotFoundError);
  EXPECT_EQ(board.gold_labels().at(t->patient_id), true);
  const auto second = board.checkout("bob");
  board.submit_label(second->task_id, AnnotationLabel::kUncertain, "bob");
  EXPECT_EQ(board.gold_labels().count(second->patient_id), 0u);
  EXPECT_FALSE(board.checkout("carol"));
}

TEST(TaskBoard, JournalReplayReconstructsState) {
  const auto path = scratch("replay.jsonl");
  std::vector<nlohmann::json> before;
  {
    TaskBoard board(path);
    board.add_tasks(scored(6), 1);
    for (int i = 0; i < 5; ++i) {
      const auto t = board.checkout("ann" + std::to_string(i));
      if (i == 1) {
        board.skip(t->task_id, "ann1");
      } else {
        board.submit_label(t->task_id, i % 2 ? AnnotationLabel::kAbsent : AnnotationLabel::kPresent, t->annotator);
      }
    }
    board.mark_retrained(4);
    for (const auto& t : board.tasks()) before.push_back(to_json(t));
  }
  TaskBoard replayed(path);
  std::vector<nlohmann::json> after;
  for (const auto& t : replayed.tasks()) after.push_back(to_json(t));
  EXPECT_EQ(after, before);
  EXPECT_EQ(replayed.counts().retrains, 1);
  EXPECT_EQ(replayed.counts().labels_since_retrain, 0u);
}

TEST(Journal, TornLastLineIgnoredOtherwiseError) {
  const auto path = scratch("torn.jsonl");
  {
    Journal j(path);
    j.append({{"event", "x"}});
    j.append({{"event", "y"}});
  }
  std::ofstream(path, std::ios::app) << R"({"event": "z)";
  EXPECT_EQ(Journal::read(path).size(), 2u);
  std::ofstream(path, std::ios::app) << "\n{\"event\": \"w\"}\n";
  EXPECT_THROW(Journal::read(path), ParseError);
}

TEST(TaskBoard, ConcurrentCheckoutNeverDoubleAssigns) {
  TaskBoard board(scratch("stress.jsonl"));
  board.add_tasks(scored(60), 1);
  std::vector<std::optional<AnnotationTask>> got(100);
  std::vector<std::thread> threads;
  for (int i = 0; i < 100; ++i) {
    threads.emplace_back([&, i] { got[i] = board.checkout("a" + std::to_string(i)); });
  }
  for (auto& t : threads) t.join();
  std::set<std::string> ids;
  int served = 0;
  for (const auto& g : got) {
    if (!g) continue;
    ++served;
    EXPECT_TRUE(ids.insert(g->task_id).second);
  }
  EXPECT_EQ(served, 60);
}

PreparedPatient candidate(std::string id, int age, std::int64_t meds = 0) {
  PreparedPatient p;
  p.patient_id = std::move(id);
  p.age = age;
  p.structured.med_count = meds;
  return p;
}

TEST(SelectCandidates, EligibilityBandOrderBatch) {
  PreparedCorpus pts = {candidate("c", 70), candidate("a", 80), candidate("b", 75), candidate("young", 60),
                        candidate("flagged", 80, 1)};
  const std::vector<double> scores = {0.52, 0.48, 0.9, 0.5, 0.5};
  LoopConfig cfg;
  EXPECT_EQ(select_candidates(pts, scores, cfg), (std::vector<std::string>{"a", "c"}));
  cfg.batch_size = 1;
  EXPECT_EQ(select_candidates(pts, scores, cfg), (std::vector<std::string>{"a"}));
  EXPECT_FALSE(eligible(pts[3], cfg));
  EXPECT_FALSE(eligible(pts[4], cfg));
  cfg.require_unflagged = false;
  EXPECT_TRUE(eligible(pts[4], cfg));
}

TEST(LoopConfig, Validation) {
  LoopConfig c;
  c.uncertainty_band = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  auto j = to_json(LoopConfig{});
  j["unknown_field"] = 1;
  EXPECT_THROW(loop_config_from_json(j), ConfigError);
}

// Regex model that scores every patient 0.5 exactly.
LoopModels flat_model(const ConceptLexicon& lex) {
  LoopModels m;
  LogisticModel lm;
  lm.feature_names = lex.names();
  lm.weights = Vector::Zero(static_cast<Eigen::Index>(lex.size()));
  lm.stats = {Vector::Zero(lm.weights.size()), Vector::Ones(lm.weights.size())};
  m.regex = lm;
  return m;
}

Corpus loop_corpus() {
  GenConfig g;
  g.n_patients = 260;
  g.unlabeled_fraction = 0.55;
  return generate_synthetic_corpus(g, 12);
}

TEST(ActiveLoop, QueuesBatchAndRetrainsOnce) {
  const auto lex = std::make_shared<const ConceptLexicon>(ConceptLexicon::standard());
  LoopConfig cfg;
  ActiveLoop loop(loop_corpus(), flat_model(*lex), cfg, Preprocessor(), lex, scratch("loop.jsonl"));
  const auto first = loop.run_iteration();
  EXPECT_GE(first.eligible, 100u);
  EXPECT_EQ(first.tasks_created, 10u);
  EXPECT_FALSE(first.retrain_started);
  for (int i = 0; i < 10; ++i) {
    const auto t = loop.board().checkout("ann");
    ASSERT_TRUE(t);
    loop.board().submit_label(t->task_id, i % 2 ? AnnotationLabel::kPresent : AnnotationLabel::kAbsent, "ann");
    const auto view = loop.task_view(t->task_id);
    for (const auto& n : view.at("notes")) {
      std::string joined;
      for (const auto& s : n.at("segments")) joined += s.at("text").get<std::string>();
      EXPECT_EQ(joined, n.at("text").get<std::string>());
    }
  }
  const auto second = loop.run_iteration();
  EXPECT_TRUE(second.retrain_started);
  EXPECT_EQ(second.labels_used, 10u);
  EXPECT_EQ(loop.retrain_count(), 1);
  EXPECT_TRUE(second.test_metrics.has_value());
  const auto third = loop.run_iteration();
  EXPECT_FALSE(third.retrain_started);
  EXPECT_EQ(loop.retrain_count(), 1);
  EXPECT_EQ(loop.models()->version, 1);
}

TEST(ActiveLoop, IdenticalStateGivesIdenticalQueues) {
  const auto lex = std::make_shared<const ConceptLexicon>(ConceptLexicon::standard());
  LoopConfig cfg;
  ActiveLoop a(loop_corpus(), flat_model(*lex), cfg, Preprocessor(), lex, std::nullopt);
  ActiveLoop b(loop_corpus(), flat_model(*lex), cfg, Preprocessor(), lex, std::nullopt);
  EXPECT_EQ(a.run_iteration().candidates, b.run_iteration().candidates);
}

TEST(ActiveLoop, NothingEligibleIsNotAnError) {
  const auto lex = std::make_shared<const ConceptLexicon>(ConceptLexicon::standard());
  LoopConfig cfg;
  cfg.min_age = 200;
  ActiveLoop loop(loop_corpus(), flat_model(*lex), cfg, Preprocessor(), lex, std::nullopt);
  const auto r = loop.run_iteration();
  EXPECT_EQ(r.eligible, 0u);
  EXPECT_TRUE(r.candidates.empty());
}

}  // namespace
}  // namespace cogscreen
