#include "cogscreen/synthetic.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "cogscreen/error.h"
#include "cogscreen/io.h"

namespace cogscreen {

using nlohmann::json;

void GenConfig::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (n_patients < 1) throw ConfigError("n_patients must be >= 1");
  if (!unit(prevalence)) throw ConfigError("prevalence must be in [0, 1]");
  if (!unit(structured_sensitivity)) throw ConfigError("structured_sensitivity must be in [0, 1]");
  if (!unit(structured_false_positive_rate)) {
    throw ConfigError("structured_false_positive_rate must be in [0, 1]");
  }
  if (!unit(mild_fraction)) throw ConfigError("mild_fraction must be in [0, 1]");
  if (!unit(unlabeled_fraction)) throw ConfigError("unlabeled_fraction must be in [0, 1]");
  if (!unit(entity_rate)) throw ConfigError("entity_rate must be in [0, 1]");
  if (!(boilerplate_fraction >= 0.0 && boilerplate_fraction < 0.95)) {
    throw ConfigError("boilerplate_fraction must be in [0, 0.95)");
  }
  if (!unit(female_fraction)) throw ConfigError("female_fraction must be in [0, 1]");
  if (notes_mean < 1.0) throw ConfigError("notes_mean must be >= 1");
  if (sentences_mean < 3.0) throw ConfigError("sentences_mean must be >= 3");
  if (concept_rate_positive < 0 || concept_rate_mild < 0 || concept_rate_negative < 0) {
    throw ConfigError("concept rates must be nonnegative");
  }
  if (age_sd < 0) throw ConfigError("age_sd must be nonnegative");
}

#define COGSCREEN_GEN_FIELDS(X)                                                          \
  X(n_patients) X(prevalence) X(structured_sensitivity) X(structured_false_positive_rate) \
  X(mild_fraction) X(unlabeled_fraction) X(notes_mean) X(sentences_mean)                  \
  X(concept_rate_positive) X(concept_rate_mild) X(concept_rate_negative) X(entity_rate)   \
  X(boilerplate_fraction) X(age_mean) X(age_sd) X(female_fraction)

GenConfig gen_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("GenConfig must be a JSON object");
  GenConfig c;
  for (const auto& [key, value] : j.items()) {
    bool known = false;
#define X(name)                                                               \
  if (key == #name) {                                                         \
    if (!value.is_number()) throw ConfigError("GenConfig." #name " must be a number"); \
    c.name = value.get<decltype(c.name)>();                                   \
    known = true;                                                             \
  }
    COGSCREEN_GEN_FIELDS(X)
#undef X
    if (!known) throw ConfigError("unknown GenConfig field '" + key + "'");
  }
  c.validate();
  return c;
}

json to_json(const GenConfig& c) {
  json j;
#define X(name) j[#name] = c.name;
  COGSCREEN_GEN_FIELDS(X)
#undef X
  return j;
}

GenConfig load_gen_config(const std::filesystem::path& path) {
  try {
    return gen_config_from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

namespace {


// Concept phrases grouped like the default lexicon. Every enriched term
// appears in at least one phrase.
struct ConceptGroup {
  double weight;
  std::vector<const char*> phrases;
};

const std::vector<ConceptGroup>& concept_groups() {
  static const std::vector<ConceptGroup> groups = {
      {3.0, {"reports short term memory loss", "daughter notes worsening memory",
             "forgetful of recent conversations", "forgets appointments and medications",
             "memory has declined over the past year", "difficulty with recall of recent events"}},
      {2.5, {"history of dementia", "dementia with behavioral disturbance",
             "progressive dementia noted", "findings consistent with lewy body dementia",
             "major neurocognitive disorder"}},
      {1.0, {"alzheimer disease suspected", "family concerned about alzheimer",
             "probable alzheimer type dementia"}},
      {1.5, {"mild cognitive impairment", "cognitive decline noted by family",
             "cognitive deficits on exam", "concern for mci"}},
      {1.0, {"appeared confused during visit", "episodes of confusion at night",
             "disoriented to time and place", "confused about medications"}},
      {1.5, {"continues donepezil", "started aricept", "tolerating memantine",
             "on namenda and aricept", "rivastigmine patch applied", "donepezil dose reviewed"}},
      {1.0, {"moca score below normal", "mmse administered", "mental status exam abnormal",
             "clock drawing impaired", "mental status declining"}},
      {1.0, {"behavioral changes reported", "increased agitation in evenings",
             "sundowning reported by family", "behavioral symptoms worsening"}},
      {0.7, {"has wandered from home", "got lost while driving", "risk of wandering"}},
      {1.0, {"requires assistance with bathing", "unable to manage medications",
             "needs assistance with adls", "unable to cook safely", "visiting rn assists with pillbox"}},
      {1.0, {"accompanied by daughter", "daughter is primary caregiver",
             "caregiver reports difficulty", "accompanied by son who provides history"}},
      {1.0, {"considering nursing home placement", "resides in assisted living",
             "moved to memory care unit", "nurse visits for medication management",
             "code status dnr discussed with health care proxy", "dnr confirmed with family"}},
      {0.7, {"word finding difficulty", "repeats questions frequently", "repetitive questioning"}},
      {0.7, {"poor judgment with finances", "unsafe to drive", "left the stove on"}},
      {0.8, {"referred to neurology for cognitive evaluation", "geriatric psychiatry consult",
             "memory clinic referral"}},
  };
  return groups;
}

// Concept-adjacent phrases that also occur in unaffected patients.
constexpr const char* kBackground[] = {
    "denies memory loss", "no memory concerns reported", "cognition grossly intact",
    "alert and oriented", "accompanied by spouse", "accompanied by daughter",
    "nurse reviewed medications", "home care services discussed",
    "neurology follow up for migraines", "unable to tolerate statin",
    "mental health screening negative", "assisted living tour for spouse",
    "independent with adls", "care coordination with cardiology",
    "rn called patient with results", "code status full code",
    "visiting nurse for wound care", "daughter helps with groceries"};

constexpr const char* kConditions[] = {
    "hypertension", "type two diabetes", "hyperlipidemia", "atrial fibrillation",
    "chronic kidney disease", "osteoarthritis", "copd", "heart failure", "hypothyroidism",
    "reflux", "osteoporosis", "anemia", "depression", "insomnia", "gout", "glaucoma",
    "peripheral neuropathy", "benign prostatic hyperplasia", "sleep apnea", "asthma"};
constexpr const char* kStatus[] = {"well controlled", "stable", "improving", "worsening",
                                   "at goal", "not at goal", "unchanged"};
constexpr const char* kSymptoms[] = {
    "chest pain", "shortness of breath", "dizziness", "fatigue", "cough", "fever",
    "nausea", "headache", "knee pain", "swelling in the legs", "palpitations",
    "constipation", "urinary frequency", "rash", "back pain", "poor appetite",
    "weight loss", "hip pain", "heartburn", "numbness in the feet"};
constexpr const char* kFindings[] = {
    "lungs clear to auscultation bilaterally", "regular rate and rhythm without murmurs",
    "abdomen soft and nontender", "no peripheral edema", "gait steady with cane",
    "skin warm and dry", "mild crepitus of the knees", "pupils equal and reactive",
    "trace edema at the ankles", "thyroid without nodules"};
constexpr const char* kDrugs[] = {"lisinopril", "metformin", "atorvastatin", "amlodipine",
                                  "levothyroxine", "omeprazole", "metoprolol", "furosemide",
                                  "apixaban", "sertraline", "gabapentin", "tamsulosin"};
constexpr const char* kPlans[] = {
    "recheck labs in three months", "obtain chest x ray", "refer to physical therapy",
    "increase fluid intake", "follow up in clinic", "schedule colonoscopy",
    "update vaccinations", "monitor blood pressure at home", "start a walking program",
    "reduce salt intake"};
constexpr const char* kSocial[] = {
    "lives with spouse", "lives alone in an apartment", "walks daily for exercise",
    "quit smoking years ago", "drinks alcohol socially", "enjoys gardening",
    "attends church weekly", "retired teacher", "retired engineer", "volunteers at the library"};
constexpr const char* kLastNames[] = {
    "Smith", "Johnson", "Patel", "Nguyen", "Garcia", "Brown", "Miller", "Davis", "Wilson",
    "Anderson", "Thomas", "Moore", "Martin", "Lee", "Clark", "Lewis", "Walker", "Hall",
    "Young", "King", "Wright", "Lopez", "Hill", "Green", "Baker", "Adams", "Nelson",
    "Carter", "Mitchell", "Roberts"};
constexpr const char* kFirstNames[] = {
    "Mary", "John", "Linda", "Robert", "Patricia", "James", "Barbara", "William",
    "Elizabeth", "Richard", "Susan", "Joseph", "Margaret", "Charles", "Dorothy", "George"};
constexpr const char* kMonths[] = {"January", "February", "March", "April", "May", "June",
                                   "July", "August", "September", "October", "November",
                                   "December"};
constexpr const char* kBackgroundMeds[] = {"Lisinopril 10mg tab", "Metformin 500mg tab",
                                           "Atorvastatin 20mg tab", "Amlodipine 5mg tab",
                                           "Levothyroxine 50mcg tab", "Omeprazole 20mg cap",
                                           "Metoprolol 25mg tab", "Furosemide 20mg tab"};
constexpr const char* kFlaggedMeds[] = {"Donepezil 10mg tab", "Memantine 10mg tab",
                                        "Rivastigmine 4.6mg patch", "Galantamine 8mg tab",
                                        "donepezil 5 mg"};
constexpr const char* kBackgroundIcd10[] = {"I10", "E11.9", "E78.5", "I48.91", "N18.3",
                                            "M17.0", "J44.9", "K21.9", "E03.9", "M81.0"};
constexpr const char* kBackgroundIcd9[] = {"401.9", "250.00", "272.4", "427.31", "715.90"};
constexpr const char* kFlaggedIcd10[] = {"G30.9", "G30.1", "G31.84", "G31.1"};
constexpr const char* kFlaggedIcd9[] = {"290.0", "294.20", "331.0", "331.83", "780.93"};
constexpr const char* kAllergies[] = {"penicillin (rash)", "sulfa drugs (hives)",
                                      "codeine (nausea)", "latex (itching)",
                                      "no known drug allergies", "shellfish (swelling)"};
constexpr const char* kLabs[] = {"Sodium", "Potassium", "Creatinine", "Hemoglobin",
                                 "Glucose", "TSH", "LDL", "Hemoglobin A1c", "BUN", "Calcium"};
constexpr const char* kFamily[] = {"Mother: hypertension, stroke", "Father: alzheimer disease",
                                   "Sister: breast cancer", "Brother: diabetes",
                                   "Father: myocardial infarction", "Mother: dementia",
                                   "No family history of colon cancer"};
constexpr const char* kClinics[] = {"Internal Medicine Clinic", "Geriatrics Clinic",
                                    "Family Practice", "Primary Care Center"};

class NoteWriter {
 public:
  NoteWriter(const GenConfig& cfg, std::mt19937_64& rng) : cfg_(cfg), rng_(rng) {}

  template <std::size_t N>
  const char* pick(const char* const (&words)[N]) {
    return words[std::uniform_int_distribution<std::size_t>(0, N - 1)(rng_)];
  }
  const char* pick(const std::vector<const char*>& words) {
    return words[std::uniform_int_distribution<std::size_t>(0, words.size() - 1)(rng_)];
  }
  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p) { return std::bernoulli_distribution(p)(rng_); }
  int poisson(double mean) {
    return mean <= 0 ? 0 : std::poisson_distribution<int>(mean)(rng_);
  }

  std::string date_text() {
    const int m = uniform(1, 12), d = uniform(1, 28);
    char buf[40];
    switch (uniform(0, 2)) {
      case 0: std::snprintf(buf, sizeof(buf), "%02d/%02d/2018", m, d); break;
      case 1: std::snprintf(buf, sizeof(buf), "2018-%02d-%02d", m, d); break;
      default: std::snprintf(buf, sizeof(buf), "%s %d, 2018", kMonths[m - 1], d); break;
    }
    return buf;
  }

  std::string entity_suffix() {
    char buf[64];
    switch (uniform(0, 4)) {
      case 0: return " on " + date_text();
      case 1:
        std::snprintf(buf, sizeof(buf), " at %d:%02d", uniform(7, 17), uniform(0, 11) * 5);
        return buf;
      case 2: return std::string(" per Dr. ") + pick(kLastNames);
      case 3:
        std::snprintf(buf, sizeof(buf), ", dose %d mg", uniform(1, 20) * 5);
        return buf;
      default:
        std::snprintf(buf, sizeof(buf), ", weight %d kg", uniform(45, 110));
        return buf;
    }
  }

  std::string filler() {
    std::string s;
    switch (uniform(0, 7)) {
      case 0: s = std::string("presents for follow up of ") + pick(kConditions); break;
      case 1: s = std::string(pick(kConditions)) + " is " + pick(kStatus); break;
      case 2:
        s = std::string("reports ") + pick(kSymptoms) + " for the past " +
            std::to_string(uniform(1, 6)) + " weeks";
        break;
      case 3: s = std::string("denies ") + pick(kSymptoms) + " or " + pick(kSymptoms); break;
      case 4: s = pick(kFindings); break;
      case 5: s = std::string("continue ") + pick(kDrugs) + " for " + pick(kConditions); break;
      case 6: s = std::string("plan to ") + pick(kPlans); break;
      default: s = pick(kSocial); break;
    }
    return s;
  }

  std::string concept_phrase() {
    const auto& groups = concept_groups();
    std::vector<double> weights;
    for (const auto& g : groups) weights.push_back(g.weight);
    std::discrete_distribution<std::size_t> which(weights.begin(), weights.end());
    return pick(groups[which(rng_)].phrases);
  }

  std::string sentence(std::string body) {
    if (coin(cfg_.entity_rate)) body += entity_suffix();
    body[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(body[0])));
    // Occasional doubled spaces for the whitespace pass.
    if (coin(0.1)) {
      if (auto sp = body.find(' '); sp != std::string::npos) body.insert(sp, " ");
    }
    return body + ".";
  }

  std::string blocked_line(int section, const std::vector<std::string>& med_names) {
    char buf[96];
    switch (section) {
      case 0:
        if (!med_names.empty() && coin(0.6)) {
          return "- " + med_names[uniform(0, static_cast<int>(med_names.size()) - 1)] + " daily";
        }
        return std::string("- ") + pick(kBackgroundMeds) + " daily";
      case 1: return std::string("- ") + pick(kAllergies);
      case 2:
        std::snprintf(buf, sizeof(buf), "- %s %d.%d (ref %d-%d) collected %02d/%02d/2018",
                      pick(kLabs), uniform(1, 150), uniform(0, 9), uniform(1, 10),
                      uniform(11, 200), uniform(1, 12), uniform(1, 28));
        return buf;
      case 3:
        std::snprintf(buf, sizeof(buf), "CPT %d level %d visit, ICD10 %s, units %d",
                      uniform(99211, 99215), uniform(2, 5), pick(kBackgroundIcd10),
                      uniform(1, 3));
        return buf;
      default: return std::string("- ") + pick(kFamily);
    }
  }

  std::string header(const std::string& patient_name, const Date& visit) {
    char buf[160];
    std::string h = std::string("COMMUNITY HEALTH NETWORK - ") + pick(kClinics) + " PROGRESS NOTE\n";
    std::snprintf(buf, sizeof(buf), "Patient: %s   MRN: %08d\n", patient_name.c_str(),
                  uniform(10000000, 99999999));
    h += buf;
    std::snprintf(buf, sizeof(buf), "DOB: %02d/%02d/19%02d   Visit date: %s\n", uniform(1, 12),
                  uniform(1, 28), uniform(15, 55), visit.iso().c_str());
    h += buf;
    h += std::string("Provider: Dr. ") + pick(kLastNames) + "   Location: " + pick(kClinics) + "\n";
    h += "==========\n";
    return h;
  }

 private:
  const GenConfig& cfg_;
  std::mt19937_64& rng_;
};

constexpr const char* kBlockedTitles[] = {"MEDICATIONS:", "ALLERGIES:", "LAB RESULTS:",
                                          "BILLING:", "FAMILY HISTORY:"};

std::string write_note(NoteWriter& w, const GenConfig& cfg, double concept_rate,
                       const std::string& patient_name, const Date& visit,
                       const std::vector<std::string>& med_names) {
  const int n_sentences = 3 + w.poisson(cfg.sentences_mean - 3.0);
  const int n_concepts = w.poisson(concept_rate);
  std::vector<std::string> body;
  for (int i = 0; i < n_sentences; ++i) body.push_back(w.sentence(w.filler()));
  for (int i = 0; i < n_concepts; ++i) {
    const auto at = static_cast<std::size_t>(w.uniform(0, static_cast<int>(body.size())));
    body.insert(body.begin() + static_cast<std::ptrdiff_t>(at), w.sentence(w.concept_phrase()));
  }
  const std::size_t split = (body.size() + 1) / 2;
  auto paragraph = [&](std::size_t from, std::size_t to) {
    std::string p;
    for (std::size_t i = from; i < to; ++i) {
      p += body[i];
      p += (w.coin(0.15) ? "\n" : " ");
    }
    if (!p.empty()) p.back() = '\n';
    return p;
  };
  const std::string hpi = "HISTORY OF PRESENT ILLNESS:\n" + paragraph(0, split);
  const std::string plan = "ASSESSMENT AND PLAN:\n" + paragraph(split, body.size());
  const double body_chars = static_cast<double>(hpi.size() + plan.size());

  std::string header;
  std::vector<std::string> blocked;
  if (cfg.boilerplate_fraction > 0.0) {
    const double target = cfg.boilerplate_fraction / (1.0 - cfg.boilerplate_fraction) * body_chars;
    header = w.header(patient_name, visit);
    double have = static_cast<double>(header.size());
    while (have < target) {
      const int section = w.uniform(0, 4);
      std::string block = std::string(kBlockedTitles[section]) + "\n";
      const int lines = w.uniform(2, 5);
      for (int i = 0; i < lines && have + static_cast<double>(block.size()) < target + 40; ++i) {
        block += w.blocked_line(section, med_names) + "\n";
      }
      have += static_cast<double>(block.size());
      blocked.push_back(std::move(block));
    }
  }

  // Blocked sections go either between HPI and plan or after the plan; each
  // one is always followed by another title or the end of the note.
  std::string text = header;
  if (w.coin(0.3)) text += "\n";
  text += hpi;
  std::vector<std::string> tail;
  for (auto& b : blocked) {
    if (w.coin(0.5)) {
      text += b;
      if (w.coin(0.3)) text += "\n";
    } else {
      tail.push_back(std::move(b));
    }
  }
  text += plan;
  for (auto& b : tail) text += b;
  return text;
}

Date random_date(NoteWriter& w) { return Date{2018, w.uniform(1, 12), w.uniform(1, 28)}; }

std::vector<std::size_t> choose(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(k);
  return idx;
}

}  // namespace

Corpus generate_synthetic_corpus(const GenConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  // Salted so the generator never shares a stream with seed-driven splits.
  std::seed_seq salted{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x53594eu};
  std::mt19937_64 rng(salted);
  NoteWriter w(cfg, rng);
  const auto n = static_cast<std::size_t>(cfg.n_patients);

  enum class Kind { kNegative, kMild, kSevere };
  std::vector<Kind> kind(n, Kind::kNegative);
  std::vector<bool> flagged(n, false);
  const auto n_pos = static_cast<std::size_t>(std::llround(cfg.prevalence * static_cast<double>(n)));
  const auto positives = choose(n, n_pos, rng);
  const auto n_mild = static_cast<std::size_t>(std::llround(cfg.mild_fraction * static_cast<double>(n_pos)));
  const auto n_coded = static_cast<std::size_t>(
      std::llround(cfg.structured_sensitivity * static_cast<double>(n_pos)));
  for (std::size_t i = 0; i < positives.size(); ++i) {
    kind[positives[i]] = i < n_mild ? Kind::kMild : Kind::kSevere;
  }
  // Coded positives are drawn independently of severity.
  for (auto i : choose(positives.size(), n_coded, rng)) flagged[positives[i]] = true;
  std::vector<bool> unlabeled(n, false);
  for (auto i : choose(n, static_cast<std::size_t>(std::llround(cfg.unlabeled_fraction * static_cast<double>(n))), rng)) {
    unlabeled[i] = true;
  }

  std::normal_distribution<double> age_dist(cfg.age_mean, cfg.age_sd);
  Corpus corpus;
  corpus.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    PatientRecord p;
    char id[16];
    std::snprintf(id, sizeof(id), "P%06zu", i + 1);
    p.patient_id = id;
    p.age = static_cast<int>(std::clamp(std::lround(age_dist(rng)), 40L, 104L));
    p.sex = w.coin(cfg.female_fraction) ? Sex::kFemale : Sex::kMale;
    const bool positive = kind[i] != Kind::kNegative;
    if (!unlabeled[i]) p.gold_label = positive;
    if (!positive && w.coin(cfg.structured_false_positive_rate)) flagged[i] = true;

    const int n_bg_meds = w.uniform(0, 4);
    for (int k = 0; k < n_bg_meds; ++k) p.medications.push_back({w.pick(kBackgroundMeds), random_date(w)});
    const int n_bg_dx = w.uniform(0, 4);
    for (int k = 0; k < n_bg_dx; ++k) {
      if (w.coin(0.2)) {
        p.diagnoses.push_back({w.pick(kBackgroundIcd9), CodeSystem::kIcd9, random_date(w)});
      } else {
        p.diagnoses.push_back({w.pick(kBackgroundIcd10), CodeSystem::kIcd10, random_date(w)});
      }
    }
    if (flagged[i]) {
      const bool meds = w.coin(0.7), codes = !meds || w.coin(0.7);
      if (meds) {
        for (int k = w.uniform(1, 3); k > 0; --k) p.medications.push_back({w.pick(kFlaggedMeds), random_date(w)});
      }
      if (codes) {
        for (int k = w.uniform(1, 3); k > 0; --k) {
          if (w.coin(0.3)) {
            p.diagnoses.push_back({w.pick(kFlaggedIcd9), CodeSystem::kIcd9, random_date(w)});
          } else {
            p.diagnoses.push_back({w.pick(kFlaggedIcd10), CodeSystem::kIcd10, random_date(w)});
          }
        }
      }
    }
    std::vector<std::string> med_names;
    for (const auto& m : p.medications) med_names.push_back(m.name);

    const double rate = kind[i] == Kind::kSevere ? cfg.concept_rate_positive
                                                 : cfg.concept_rate_mild;
    const std::string name = std::string(w.pick(kLastNames)) + ", " + w.pick(kFirstNames);
    const int n_notes = 1 + w.poisson(cfg.notes_mean - 1.0);
    std::vector<Date> dates;
    for (int k = 0; k < n_notes; ++k) dates.push_back(random_date(w));
    std::sort(dates.begin(), dates.end());
    for (int k = 0; k < n_notes; ++k) {
      // Every patient gets background phrases; only positives get planted concepts.
      std::string text = write_note(w, cfg, positive ? rate : 0.0, name, dates[k], med_names);
      const int n_bg = w.poisson(cfg.concept_rate_negative);
      for (int b = 0; b < n_bg; ++b) {
        const auto pos = text.find("ASSESSMENT AND PLAN:\n");
        text.insert(pos + 21, w.sentence(w.pick(kBackground)) + " ");
      }
      p.notes.push_back({"N" + std::to_string(k + 1), dates[k], std::move(text)});
    }
    corpus.push_back(std::move(p));
  }
  return corpus;
}

}  // namespace cogscreen
