#include <gtest/gtest.h>

#include <random>

#include "cogscreen/error.h"
#include "cogscreen/preprocess.h"
#include "cogscreen/synthetic.h"

namespace cogscreen {
namespace {

bool clean_alphabet(const std::string& s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c == ' ') {
      if (i == 0 || i + 1 == s.size() || s[i + 1] == ' ') return false;
    } else if (c < 'a' || c > 'z') {
      return false;
    }
  }
  return true;
}

std::string random_note(std::mt19937_64& rng) {
  static const std::vector<std::string> pieces = {
      "Patient", "reports", "MEMORY", "loss", "  ", "\n", "\n\n", "\t", "3", "mg", "10 mg", "01/02/2018",
      "2019-04-05", "10:30 AM", "Dr. Smith", "Mrs. Lee Ann", "follow-up", "(stable)", "BP 120/80", "95%",
      "Medications:", "Assessment:", "Allergies:", "Plan:", "===", "Daughter", "café", "#", "!!", "x-ray",
      "Electronically signed by: Jane Doe, MD", "Mar 3, 2020", "Dementia", "q.d.", "A&O x3", ";"};
  std::string out;
  const int n = std::uniform_int_distribution<int>(1, 60)(rng);
  for (int i = 0; i < n; ++i) {
    out += pieces[rng() % pieces.size()];
    out += (rng() % 4 == 0) ? "\n" : " ";
  }
  return out;
}

TEST(Preprocess, WorkedExample) {
  PreprocessConfig cfg;
  cfg.header_terminator = "^HEADER:.*$";
  const Note note{"n", {}, "HEADER: MRN 12345\n\nPatient  reports MEMORY loss 3 times on 01/02/2018."};
  EXPECT_EQ(preprocess_note(note, cfg).text, "patient reports memory loss times on");
}

TEST(Preprocess, CleanTextUnchanged) {
  EXPECT_EQ(Preprocessor().run_text("patient reports memory loss").text, "patient reports memory loss");
}

TEST(Preprocess, OnlyBlockedSection) {
  const Preprocessor pre;
  EXPECT_EQ(pre.run_text("Medications:\nDonepezil 10 mg daily\nAspirin 81 mg").text, "");
}

TEST(Preprocess, BlockedSectionEndsAtNextTitle) {
  const Preprocessor pre;
  const auto c = pre.run_text("Allergies:\npenicillin\nAssessment:\nworsening memory");
  EXPECT_EQ(c.text, "assessment worsening memory");
}

TEST(Preprocess, HeaderStrip) {
  const Preprocessor pre;
  EXPECT_EQ(pre.run_text("MRN 1\nClinic A\n=====\nSeen today.").text, "seen today");
  EXPECT_EQ(pre.run_text("No header here.").text, "no header here");
}

TEST(Preprocess, SpecialCharactersSplitWords) {
  EXPECT_EQ(Preprocessor().run_text("follow-up (x-ray)").text, "follow up x ray");
}

TEST(ScrubEntities, DatesAndTimes) {
  const auto rules = PreprocessConfig::default_entity_rules();
  EXPECT_EQ(scrub_entities("seen on 01/02/2018 at 10:30", rules), "seen on at");
  EXPECT_EQ(scrub_entities("Dr. Smith examined", rules), "examined");
  EXPECT_EQ(scrub_entities("no entities at all", rules), "no entities at all");
  EXPECT_EQ(scrub_entities("took 10 mg daily", rules), "took daily");
}

TEST(Preprocess, IdempotentAlphabetMonotone) {
  std::mt19937_64 rng(2024);
  const Preprocessor pre;
  for (int i = 0; i < 1000; ++i) {
    const auto raw = random_note(rng);
    const auto once = pre.run_text(raw);
    ASSERT_TRUE(clean_alphabet(once.text)) << once.text;
    ASSERT_LE(once.text.size(), raw.size());
    ASSERT_EQ(pre.run_text(once.text).text, once.text) << raw;
  }
}

TEST(Preprocess, OriginMapsBackToRawLetters) {
  std::mt19937_64 rng(77);
  const Preprocessor pre;
  for (int i = 0; i < 200; ++i) {
    const auto raw = random_note(rng);
    const auto c = pre.run_text(raw);
    ASSERT_EQ(c.origin.size(), c.text.size());
    for (std::size_t k = 0; k < c.text.size(); ++k) {
      if (c.text[k] == ' ') continue;
      ASSERT_LT(c.origin[k], raw.size());
      ASSERT_EQ(std::tolower(static_cast<unsigned char>(raw[c.origin[k]])), c.text[k]);
    }
    for (const auto& t : c.tokens()) {
      ASSERT_LE(t.raw_begin, t.raw_end);
      ASSERT_LE(t.raw_end, raw.size());
    }
  }
}

TEST(ReductionRatio, Arithmetic) {
  const std::vector<Note> raw = {{"a", {}, std::string(1000, 'x')}};
  std::vector<CleanNote> half = {{"a", std::string(500, 'x'), {}}};
  EXPECT_DOUBLE_EQ(corpus_reduction_ratio(raw, half), 0.5);
  std::vector<CleanNote> same = {{"a", std::string(1000, 'x'), {}}};
  EXPECT_DOUBLE_EQ(corpus_reduction_ratio(raw, same), 0.0);
  std::vector<CleanNote> empty = {{"a", "", {}}};
  EXPECT_DOUBLE_EQ(corpus_reduction_ratio(raw, empty), 1.0);
  const std::vector<Note> nothing = {{"a", {}, ""}};
  EXPECT_THROW(corpus_reduction_ratio(nothing, empty), DataError);
}

TEST(ReductionRatio, SyntheticBoilerplateHalvesNotes) {
  GenConfig g;
  g.n_patients = 200;
  g.boilerplate_fraction = 0.5;
  std::vector<Note> raw;
  for (const auto& p : generate_synthetic_corpus(g, 4)) raw.insert(raw.end(), p.notes.begin(), p.notes.end());
  const auto clean = preprocess_notes(raw, Preprocessor());
  const double r = corpus_reduction_ratio(raw, clean);
  EXPECT_GE(r, 0.40);
  EXPECT_LE(r, 0.60);
}

TEST(PreprocessConfig, JsonRoundTripAndErrors) {
  const PreprocessConfig cfg;
  const auto back = preprocess_config_from_json(to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
  auto j = to_json(cfg);
  j["section_blocklist"].push_back("");
  EXPECT_THROW(Preprocessor(preprocess_config_from_json(j)), ConfigError);
  j = to_json(cfg);
  j["header_terminator"] = "([";
  EXPECT_THROW(Preprocessor(preprocess_config_from_json(j)), ConfigError);
}

TEST(PreprocessNotes, ParallelMatchesSequential) {
  GenConfig g;
  g.n_patients = 30;
  std::vector<Note> raw;
  for (const auto& p : generate_synthetic_corpus(g, 8)) raw.insert(raw.end(), p.notes.begin(), p.notes.end());
  const Preprocessor pre;
  const auto par = preprocess_notes(raw, pre);
  ASSERT_EQ(par.size(), raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    EXPECT_EQ(par[i].text, pre.run(raw[i]).text);
    EXPECT_EQ(par[i].note_id, raw[i].note_id);
  }
}

}  // namespace
}  // namespace cogscreen
