#include "cogscreen/concepts.h"

#include <boost/regex.hpp>

#include <algorithm>
#include <tuple>

#include "cogscreen/error.h"
#include "cogscreen/io.h"

namespace cogscreen {

using nlohmann::json;

struct ConceptLexicon::Impl {
  std::vector<ConceptCategory> categories;
  std::vector<std::vector<boost::regex>> compiled;
};

ConceptLexicon::ConceptLexicon(std::vector<ConceptCategory> categories)
    : impl_(std::make_unique<Impl>()) {
  if (categories.empty()) throw ConfigError("lexicon has no categories");
  std::vector<std::string> seen;
  for (const auto& c : categories) {
    if (c.name.empty()) throw ConfigError("lexicon category with empty name");
    if (std::find(seen.begin(), seen.end(), c.name) != seen.end()) {
      throw ConfigError("duplicate lexicon category '" + c.name + "'");
    }
    seen.push_back(c.name);
    if (c.patterns.empty()) throw ConfigError("category '" + c.name + "' has no patterns");
    std::vector<boost::regex> compiled;
    for (const auto& p : c.patterns) {
      try {
        compiled.emplace_back(p, boost::regex::perl | boost::regex::no_mod_s);
      } catch (const boost::regex_error& e) {
        throw ConfigError("category '" + c.name + "': pattern '" + p + "' does not compile: " + e.what());
      }
    }
    impl_->compiled.push_back(std::move(compiled));
  }
  impl_->categories = std::move(categories);
}

ConceptLexicon::~ConceptLexicon() = default;
ConceptLexicon::ConceptLexicon(ConceptLexicon&&) noexcept = default;
ConceptLexicon& ConceptLexicon::operator=(ConceptLexicon&&) noexcept = default;

ConceptLexicon ConceptLexicon::from_json(const json& j) {
  if (!j.is_array()) throw ConfigError("lexicon must be a JSON array of categories");
  std::vector<ConceptCategory> cats;
  for (const auto& item : j) {
    try {
      cats.push_back({item.at("name").get<std::string>(),
                      item.at("patterns").get<std::vector<std::string>>()});
    } catch (const json::exception& e) {
      throw ConfigError(std::string("lexicon entry: ") + e.what());
    }
  }
  return ConceptLexicon(std::move(cats));
}

ConceptLexicon ConceptLexicon::from_file(const std::filesystem::path& path) {
  try {
    return from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ConceptLexicon ConceptLexicon::standard() { return from_file(data_dir() / "default_lexicon.json"); }

std::size_t ConceptLexicon::size() const { return impl_->categories.size(); }

const std::vector<ConceptCategory>& ConceptLexicon::categories() const { return impl_->categories; }

std::vector<std::string> ConceptLexicon::names() const {
  std::vector<std::string> out;
  for (const auto& c : impl_->categories) out.push_back(c.name);
  return out;
}

std::vector<ConceptMatch> ConceptLexicon::match(std::string_view text) const {
  std::vector<ConceptMatch> out;
  for (std::size_t c = 0; c < impl_->compiled.size(); ++c) {
    for (std::size_t p = 0; p < impl_->compiled[c].size(); ++p) {
      boost::cregex_iterator it(text.data(), text.data() + text.size(), impl_->compiled[c][p],
                                boost::match_not_null);
      for (; it != boost::cregex_iterator(); ++it) {
        const auto begin = static_cast<std::uint32_t>(it->position(std::size_t{0}));
        out.push_back({static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(p), begin,
                       begin + static_cast<std::uint32_t>(it->length(std::size_t{0}))});
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const ConceptMatch& a, const ConceptMatch& b) {
    return std::tie(a.begin, a.category, a.pattern) < std::tie(b.begin, b.category, b.pattern);
  });
  return out;
}

ConceptCounts concept_features(std::span<const CleanNote> notes, const ConceptLexicon& lexicon,
                               std::vector<std::vector<ConceptMatch>>* spans) {
  ConceptCounts counts{std::vector<std::int64_t>(lexicon.size(), 0)};
  if (spans) spans->clear();
  for (const auto& note : notes) {
    auto matches = lexicon.match(note.text);
    for (const auto& m : matches) ++counts.counts[m.category];
    if (spans) spans->push_back(std::move(matches));
  }
  return counts;
}

}  // namespace cogscreen
