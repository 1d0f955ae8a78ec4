#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace cogscreen {

struct Date {
  int year = 1970;
  int month = 1;
  int day = 1;

  // Accepts strict ISO-8601 calendar dates (YYYY-MM-DD).
  static std::optional<Date> parse(std::string_view text);
  std::string iso() const;

  auto operator<=>(const Date&) const = default;
};

enum class Sex { kFemale, kMale, kOther };
enum class CodeSystem { kIcd9, kIcd10 };

std::string_view to_string(Sex sex);
std::string_view to_string(CodeSystem system);

struct Note {
  std::string note_id;
  Date date;
  std::string text;

  bool operator==(const Note&) const = default;
};

struct MedicationRecord {
  std::string name;
  Date date;

  bool operator==(const MedicationRecord&) const = default;
};

struct DiagnosisRecord {
  std::string code;
  CodeSystem system = CodeSystem::kIcd10;
  Date date;

  bool operator==(const DiagnosisRecord&) const = default;
};

struct PatientRecord {
  std::string patient_id;
  int age = 0;
  Sex sex = Sex::kOther;
  std::vector<Note> notes;
  std::vector<MedicationRecord> medications;
  std::vector<DiagnosisRecord> diagnoses;
  std::optional<bool> gold_label;

  bool operator==(const PatientRecord&) const = default;
};

using Corpus = std::vector<PatientRecord>;

struct StructuredFeatures {
  std::int64_t med_count = 0;
  std::int64_t icd_count = 0;

  bool operator==(const StructuredFeatures&) const = default;
};

// Medications flagged as cognitive-concern treatments.
inline constexpr std::string_view kFlaggedMedications[] = {
    "galantamine", "donepezil", "rivastigmine", "memantine"};

// Whitespace is stripped and letters uppercased before comparison.
std::string normalize_code(std::string_view code);
bool valid_code_syntax(std::string_view code, CodeSystem system);

bool is_flagged_medication(std::string_view name);
bool is_flagged_diagnosis(const DiagnosisRecord& diagnosis);

StructuredFeatures flag_structured(const PatientRecord& patient);

// JSON Lines persistence. One patient object per line; blank lines are
// skipped. Malformed records raise ParseError with line number and field.
nlohmann::json to_json(const PatientRecord& patient);
PatientRecord patient_from_json(const nlohmann::json& j,
                                const std::string& source = "<json>",
                                std::size_t line = 0);

Corpus read_corpus(std::istream& in, const std::string& source = "<stream>");
void write_corpus(std::ostream& out, const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

struct TrainTestSplit {
  Corpus train;
  Corpus test;
};

// Random partition with |test| = round(test_fraction * N). Relative order of
// patients is preserved inside each part.
TrainTestSplit split_train_test(const Corpus& corpus, double test_fraction,
                                std::uint64_t seed);

std::vector<int> labels_of(const Corpus& corpus);

}  // namespace cogscreen
