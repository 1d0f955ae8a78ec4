#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cogscreen/corpus.h"
#include "json.hpp"

namespace cogscreen {

struct EntityRule {
  std::string name;
  std::string pattern;
};

struct PreprocessConfig {
  // Everything up to and including the line holding the first match is the
  // fixed header. Empty disables header stripping.
  std::string header_terminator = R"(^={3,}[ \t]*$)";
  // A section starts at a line whose prefix matches this; group 1 is the title.
  std::string section_title = R"(^([A-Z][A-Za-z /&()-]{0,60}):)";
  // Case-insensitive full-match patterns for titles whose content is dropped.
  std::vector<std::string> section_blocklist = {
      "medications?( list)?", "current medications", "allerg(y|ies)",
      "lab(oratory)? results|labs", "billing( codes)?", "family history"};
  std::vector<EntityRule> entity_scrub_rules = default_entity_rules();

  static std::vector<EntityRule> default_entity_rules();
};

PreprocessConfig preprocess_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PreprocessConfig& config);
PreprocessConfig load_preprocess_config(const std::filesystem::path& path);

struct TokenSpan {
  std::uint32_t clean_begin = 0;
  std::uint32_t clean_end = 0;
  std::uint32_t raw_begin = 0;
  std::uint32_t raw_end = 0;
};

// Lowercase letters separated by single spaces. `origin[i]` is the byte
// offset in the raw note text that clean character i came from.
struct CleanNote {
  std::string note_id;
  std::string text;
  std::vector<std::uint32_t> origin;

  std::vector<TokenSpan> tokens() const;
  // Raw byte span covering clean characters [begin, end).
  std::pair<std::uint32_t, std::uint32_t> raw_span(std::size_t begin, std::size_t end) const;
};

// Compiled form of a PreprocessConfig; immutable and safe to share.
class Preprocessor {
 public:
  explicit Preprocessor(const PreprocessConfig& config = {});
  ~Preprocessor();
  Preprocessor(Preprocessor&&) noexcept;
  Preprocessor& operator=(Preprocessor&&) noexcept;

  // Whitespace collapse, header strip, blocked-section removal, entity
  // scrub, special-character/number removal, lowercasing; in that order.
  CleanNote run(const Note& note) const;
  CleanNote run_text(std::string_view text, std::string note_id = {}) const;

  std::string scrub(std::string_view text) const;

  const PreprocessConfig& config() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

CleanNote preprocess_note(const Note& note, const PreprocessConfig& config);

// Deletes every match of each rule, rules in order, then collapses the
// whitespace left behind.
std::string scrub_entities(std::string_view text, const std::vector<EntityRule>& rules);

// Parallel over notes; output order matches input order.
std::vector<CleanNote> preprocess_notes(std::span<const Note> notes, const Preprocessor& pre);

// 1 - clean_chars / raw_chars over parallel lists.
double corpus_reduction_ratio(std::span<const Note> raw, std::span<const CleanNote> clean);

}  // namespace cogscreen
