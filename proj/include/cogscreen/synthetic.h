#pragma once

#include <cstdint>
#include <filesystem>

#include "cogscreen/corpus.h"
#include "json.hpp"

namespace cogscreen {

// Parameters of the synthetic EHR generator. Defaults track the cohort
// demographics of the original study (mean age 81.2, 58.2% female, 44.6%
// positive) at desk scale.
struct GenConfig {
  int n_patients = 770;
  double prevalence = 0.446;
  // Fraction of positive patients that also carry a flagged code or
  // medication. Positives without one are invisible to the structured model.
  double structured_sensitivity = 0.5;
  // Fraction of negative patients with a flagged code or medication.
  double structured_false_positive_rate = 0.0;
  // Share of positives with subjective concern / MCI: they get the weaker
  // concept rate below instead of the full one.
  double mild_fraction = 0.286;
  // Share of patients written without a gold label (active-learning pool).
  double unlabeled_fraction = 0.0;

  double notes_mean = 3.0;       // notes per patient, at least 1
  double sentences_mean = 7.0;   // body sentences per note, at least 3
  double concept_rate_positive = 2.0;  // concept mentions per note
  double concept_rate_mild = 1.0;
  double concept_rate_negative = 0.35;
  double entity_rate = 0.3;      // chance a body sentence carries a date/name/number
  // Target share of raw characters in the header and blocklisted sections.
  double boilerplate_fraction = 0.5;

  double age_mean = 81.2;
  double age_sd = 7.4;
  double female_fraction = 0.582;

  void validate() const;
};

GenConfig gen_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GenConfig& config);
GenConfig load_gen_config(const std::filesystem::path& path);

// Deterministic given (config, seed): the same inputs produce a
// byte-identical corpus. The number of positives is round(n * prevalence).
Corpus generate_synthetic_corpus(const GenConfig& config, std::uint64_t seed);

// Words planted preferentially in positive patients' notes.
inline constexpr std::string_view kEnrichedTerms[] = {
    "dementia", "memory",     "daughter", "cognitive", "alzheimer",
    "accompanied", "behavioral", "unable", "confused", "donepezil",
    "mental", "aricept", "care", "impairment", "nursing",
    "assistance", "nurse", "living", "rn", "dnr"};

}  // namespace cogscreen
