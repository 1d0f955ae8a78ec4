#include <gtest/gtest.h>

#include <numeric>

#include "cogscreen/concepts.h"
#include "cogscreen/error.h"
#include "cogscreen/pipeline.h"
#include "cogscreen/synthetic.h"

namespace cogscreen {
namespace {

ConceptLexicon make_lex(std::vector<ConceptCategory> c) { return ConceptLexicon(std::move(c)); }

CleanNote note(std::string text) { return {"n", std::move(text), {}}; }

TEST(Lexicon, DefaultHasFifteenCategories) {
  const auto lex = ConceptLexicon::standard();
  EXPECT_EQ(lex.size(), 15u);
  EXPECT_FALSE(lex.nonstandard_size());
  const std::vector<std::string> expected = {
      "memory", "dementia-diagnosis", "alzheimer", "mci-cognitive-impairment", "confusion-disorientation",
      "dementia-medications", "cognitive-testing", "behavioral-symptoms", "wandering", "adl-assistance",
      "caregiver", "nursing-placement", "word-finding", "safety-judgment", "specialist-referral"};
  EXPECT_EQ(lex.names(), expected);
}

TEST(Lexicon, SmallLexiconIsFlagged) {
  const auto lex = ConceptLexicon::from_json(nlohmann::json::parse(
      R"([{"name":"a","patterns":["a"]},{"name":"b","patterns":["b"]},{"name":"c","patterns":["c"]}])"));
  EXPECT_EQ(lex.size(), 3u);
  EXPECT_TRUE(lex.nonstandard_size());
}

TEST(Lexicon, BadPatternNamesCategoryAndPattern) {
  try {
    make_lex({{"memory", {"memory"}}, {"broken", {"ok", "(["}}});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("broken"), std::string::npos);
    EXPECT_NE(what.find("(["), std::string::npos);
  }
}

TEST(Lexicon, StructuralErrors) {
  EXPECT_THROW(make_lex({}), ConfigError);
  EXPECT_THROW(make_lex({{"a", {}}}), ConfigError);
  EXPECT_THROW(make_lex({{"a", {"x"}}, {"a", {"y"}}}), ConfigError);
  EXPECT_THROW(ConceptLexicon::from_json(nlohmann::json::object()), ConfigError);
}

TEST(ConceptFeatures, CountsLiteralMatches) {
  const auto lex = make_lex({{"memory", {"memory"}}});
  const std::vector<CleanNote> notes = {note("poor memory and memory loss")};
  EXPECT_EQ(concept_features(notes, lex).counts, std::vector<std::int64_t>{2});
}

TEST(ConceptFeatures, AdditiveOverNotes) {
  const auto lex = ConceptLexicon::standard();
  const std::vector<CleanNote> one = {note("started donepezil")};
  const std::vector<CleanNote> two = {note("started donepezil"), note("continue aricept")};
  const auto idx = 5u;
  EXPECT_EQ(concept_features(one, lex).counts[idx], 1);
  EXPECT_EQ(concept_features(two, lex).counts[idx], 2);
}

TEST(ConceptFeatures, NonOverlappingPerPatternAndPatternsSum) {
  const auto lex = make_lex({{"x", {"aa", "a"}}});
  const auto m = lex.match("aaa");
  // "aa" matches once (leftmost, no overlap); "a" matches three times.
  EXPECT_EQ(m.size(), 4u);
  EXPECT_EQ(concept_features(std::vector<CleanNote>{note("aaa")}, lex).counts[0], 4);
}

TEST(ConceptFeatures, SpansValidAndMonotone) {
  const auto lex = ConceptLexicon::standard();
  GenConfig g;
  g.n_patients = 40;
  const auto prepared = prepare_corpus(generate_synthetic_corpus(g, 3), Preprocessor(), lex);
  for (const auto& p : prepared) {
    std::vector<std::vector<ConceptMatch>> spans;
    const auto counts = concept_features(p.notes, lex, &spans);
    ASSERT_EQ(spans.size(), p.notes.size());
    std::int64_t total = 0;
    for (std::size_t n = 0; n < spans.size(); ++n) {
      total += static_cast<std::int64_t>(spans[n].size());
      for (const auto& m : spans[n]) {
        ASSERT_LT(m.begin, m.end);
        ASSERT_LE(m.end, p.notes[n].text.size());
        const std::string piece = p.notes[n].text.substr(m.begin, m.end - m.begin);
        const auto single = make_lex({{"p", {lex.categories()[m.category].patterns[m.pattern]}}});
        ASSERT_FALSE(single.match(piece).empty()) << piece;
      }
    }
    EXPECT_EQ(total, std::accumulate(counts.counts.begin(), counts.counts.end(), std::int64_t{0}));
    auto extended = p.notes;
    extended.back().text += " memory dementia";
    const auto more = concept_features(extended, lex);
    for (std::size_t c = 0; c < lex.size(); ++c) EXPECT_GE(more.counts[c], counts.counts[c]);
    EXPECT_EQ(concept_features(p.notes, lex), counts);
  }
}

TEST(ConceptFeatures, PositivesMentionMemoryMoreOften) {
  const auto lex = ConceptLexicon::standard();
  GenConfig g;
  g.n_patients = 300;
  const auto prepared = prepare_corpus(generate_synthetic_corpus(g, 11), Preprocessor(), lex);
  double pos = 0, neg = 0;
  int npos = 0, nneg = 0;
  for (const auto& p : prepared) {
    const auto c = static_cast<double>(concept_features(p.notes, lex).counts[0]);
    if (*p.gold_label) {
      pos += c;
      ++npos;
    } else {
      neg += c;
      ++nneg;
    }
  }
  EXPECT_GT(pos / npos, neg / nneg);
}

}  // namespace
}  // namespace cogscreen
