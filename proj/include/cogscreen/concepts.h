#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cogscreen/preprocess.h"
#include "json.hpp"

namespace cogscreen {

inline constexpr std::size_t kStandardCategoryCount = 15;

struct ConceptCategory {
  std::string name;
  std::vector<std::string> patterns;
};

struct ConceptMatch {
  std::uint32_t category = 0;
  std::uint32_t pattern = 0;
  std::uint32_t begin = 0;  // byte offsets in the clean note text
  std::uint32_t end = 0;

  bool operator==(const ConceptMatch&) const = default;
};

// Ordered, compiled categories. Immutable after construction.
class ConceptLexicon {
 public:
  // Throws ConfigError naming the category and pattern that fails to compile.
  explicit ConceptLexicon(std::vector<ConceptCategory> categories);
  ~ConceptLexicon();
  ConceptLexicon(ConceptLexicon&&) noexcept;
  ConceptLexicon& operator=(ConceptLexicon&&) noexcept;

  static ConceptLexicon from_json(const nlohmann::json& j);
  static ConceptLexicon from_file(const std::filesystem::path& path);
  // The shipped 15-category lexicon from data/default_lexicon.json.
  static ConceptLexicon standard();

  std::size_t size() const;
  const std::vector<ConceptCategory>& categories() const;
  std::vector<std::string> names() const;
  // Set when the category count differs from the standard 15.
  bool nonstandard_size() const { return size() != kStandardCategoryCount; }

  // Non-overlapping, leftmost-first matches of each pattern, ordered by
  // (begin, category, pattern).
  std::vector<ConceptMatch> match(std::string_view clean_text) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct ConceptCounts {
  std::vector<std::int64_t> counts;

  bool operator==(const ConceptCounts&) const = default;
};

// Per-category totals over all notes. When `spans` is given it receives one
// match list per note.
ConceptCounts concept_features(std::span<const CleanNote> notes, const ConceptLexicon& lexicon,
                               std::vector<std::vector<ConceptMatch>>* spans = nullptr);

}  // namespace cogscreen
