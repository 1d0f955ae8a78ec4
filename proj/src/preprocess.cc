#include "cogscreen/preprocess.h"

#include <boost/regex.hpp>

#include <algorithm>
#include <cctype>
#include <optional>
#include <utility>

#include "cogscreen/error.h"
#include "cogscreen/io.h"

namespace cogscreen {

using nlohmann::json;

std::vector<EntityRule> PreprocessConfig::default_entity_rules() {
  return {
      {"date",
       R"(\b\d{1,2}/\d{1,2}/\d{2,4}\b|\b\d{4}-\d{2}-\d{2}\b|)"
       R"(\b(?:Jan|Feb|Mar|Apr|May|Jun|Jul|Aug|Sep|Sept|Oct|Nov|Dec)[a-z]*\.?\s+\d{1,2}(?:st|nd|rd|th)?,?\s+\d{4}\b)"},
      {"time", R"(\b\d{1,2}:\d{2}(?::\d{2})?(?:\s*[AaPp]\.?[Mm]\b\.?)?)"},
      {"person",
       R"(\b(?:Dr|Mr|Mrs|Ms|Miss|Prof)\.?[ \t]+[A-Z][A-Za-z'-]+(?:[ \t]+[A-Z][A-Za-z'-]+)?)"},
      {"signature",
       R"(\b(?:Electronically signed by|Signed by|Dictated by)[ \t]*:?[ \t]*[A-Z][A-Za-z'-]+)"
       R"((?:[ \t]+[A-Z]\.)?(?:[ \t]+[A-Z][A-Za-z'-]+)*(?:,[ \t]*(?:MD|DO|NP|PA|RN|PhD))?)"},
      {"quantity",
       R"(\b\d+(?:\.\d+)?[ \t]*(?:mg|mcg|g|kg|lbs?|ml|mL|L|cm|mm|units?|%|bpm|mmHg)(?![A-Za-z]))"},
  };
}

PreprocessConfig preprocess_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("preprocess config must be a JSON object");
  PreprocessConfig c;
  try {
    if (j.contains("header_terminator")) c.header_terminator = j.at("header_terminator").get<std::string>();
    if (j.contains("section_title")) c.section_title = j.at("section_title").get<std::string>();
    if (j.contains("section_blocklist")) {
      c.section_blocklist = j.at("section_blocklist").get<std::vector<std::string>>();
    }
    if (j.contains("entity_scrub_rules")) {
      c.entity_scrub_rules.clear();
      for (const auto& r : j.at("entity_scrub_rules")) {
        c.entity_scrub_rules.push_back({r.at("name").get<std::string>(), r.at("pattern").get<std::string>()});
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("preprocess config: ") + e.what());
  }
  return c;
}

json to_json(const PreprocessConfig& c) {
  json j;
  j["header_terminator"] = c.header_terminator;
  j["section_title"] = c.section_title;
  j["section_blocklist"] = c.section_blocklist;
  j["entity_scrub_rules"] = json::array();
  for (const auto& r : c.entity_scrub_rules) {
    j["entity_scrub_rules"].push_back({{"name", r.name}, {"pattern", r.pattern}});
  }
  return j;
}

PreprocessConfig load_preprocess_config(const std::filesystem::path& path) {
  try {
    return preprocess_config_from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::vector<TokenSpan> CleanNote::tokens() const {
  std::vector<TokenSpan> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    if (i >= text.size()) break;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ') ++j;
    auto [rb, re] = raw_span(i, j);
    out.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), rb, re});
    i = j;
  }
  return out;
}

std::pair<std::uint32_t, std::uint32_t> CleanNote::raw_span(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > origin.size()) return {0, 0};
  return {origin[begin], origin[end - 1] + 1};
}

namespace {

constexpr auto kSyntax = boost::regex::perl | boost::regex::no_mod_s;

boost::regex compile(const std::string& pattern, const std::string& what,
                     boost::regex::flag_type extra = boost::regex::normal) {
  try {
    return boost::regex(pattern, kSyntax | extra);
  } catch (const boost::regex_error& e) {
    throw ConfigError("bad pattern for " + what + " '" + pattern + "': " + e.what());
  }
}

bool is_hspace(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

// Text plus the raw offset of every byte, so spans survive deletions.
struct Tracked {
  std::string text;
  std::vector<std::uint32_t> origin;

  void push(char c, std::uint32_t o) {
    text.push_back(c);
    origin.push_back(o);
  }

  // Keeps bytes whose `keep` flag is set.
  void filter(const std::vector<bool>& keep) {
    std::size_t w = 0;
    for (std::size_t r = 0; r < text.size(); ++r) {
      if (!keep[r]) continue;
      text[w] = text[r];
      origin[w] = origin[r];
      ++w;
    }
    text.resize(w);
    origin.resize(w);
  }
};

Tracked track(std::string_view raw) {
  Tracked t;
  t.text.assign(raw);
  t.origin.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) t.origin[i] = static_cast<std::uint32_t>(i);
  return t;
}

// Runs of horizontal whitespace become one space; lines are trimmed and
// empty lines dropped.
void collapse_lines(Tracked& t) {
  Tracked out;
  std::size_t i = 0;
  const auto n = t.text.size();
  while (i < n) {
    std::size_t end = t.text.find('\n', i);
    if (end == std::string::npos) end = n;
    Tracked line;
    bool pending_space = false;
    for (std::size_t k = i; k < end; ++k) {
      if (is_hspace(t.text[k])) {
        pending_space = !line.text.empty();
        continue;
      }
      if (pending_space) line.push(' ', t.origin[k - 1]);
      pending_space = false;
      line.push(t.text[k], t.origin[k]);
    }
    if (!line.text.empty()) {
      if (!out.text.empty()) out.push('\n', end < n ? t.origin[end] : line.origin.back());
      out.text += line.text;
      out.origin.insert(out.origin.end(), line.origin.begin(), line.origin.end());
    }
    i = end + 1;
  }
  t = std::move(out);
}

void strip_header(Tracked& t, const boost::regex& terminator) {
  boost::smatch m;
  if (!boost::regex_search(t.text, m, terminator)) return;
  auto line_end = t.text.find('\n', static_cast<std::size_t>(m.position(std::size_t{0}) + m.length(std::size_t{0})));
  const std::size_t cut = line_end == std::string::npos ? t.text.size() : line_end + 1;
  t.text.erase(0, cut);
  t.origin.erase(t.origin.begin(), t.origin.begin() + static_cast<std::ptrdiff_t>(cut));
}

void remove_sections(Tracked& t, const boost::regex& title, const std::vector<boost::regex>& blocked) {
  std::vector<bool> keep(t.text.size(), true);
  bool dropping = false;
  std::size_t i = 0;
  while (i < t.text.size()) {
    std::size_t end = t.text.find('\n', i);
    if (end == std::string::npos) end = t.text.size();
    const std::string line = t.text.substr(i, end - i);
    boost::smatch m;
    if (boost::regex_search(line, m, title, boost::match_continuous)) {
      std::string name = m.size() > 1 && m[1].matched ? m[1].str() : m[0].str();
      while (!name.empty() && name.back() == ' ') name.pop_back();
      dropping = false;
      for (const auto& b : blocked) {
        if (boost::regex_match(name, b)) {
          dropping = true;
          break;
        }
      }
    }
    if (dropping) {
      const std::size_t stop = end < t.text.size() ? end + 1 : end;
      for (std::size_t k = i; k < stop; ++k) keep[k] = false;
    }
    i = end + 1;
  }
  t.filter(keep);
  // A dropped final section can leave a trailing newline behind.
  while (!t.text.empty() && t.text.back() == '\n') {
    t.text.pop_back();
    t.origin.pop_back();
  }
}

void scrub_tracked(Tracked& t, const std::vector<boost::regex>& rules) {
  for (const auto& rule : rules) {
    std::vector<bool> keep(t.text.size(), true);
    bool any = false;
    boost::sregex_iterator it(t.text.begin(), t.text.end(), rule, boost::match_not_null);
    for (; it != boost::sregex_iterator(); ++it) {
      const auto pos = static_cast<std::size_t>(it->position(std::size_t{0}));
      for (std::size_t k = pos; k < pos + static_cast<std::size_t>(it->length(std::size_t{0})); ++k) keep[k] = false;
      any = true;
    }
    if (any) t.filter(keep);
  }
  collapse_lines(t);
}

// Non-letters become spaces, space runs collapse, letters are lowercased.
void normalize(Tracked& t) {
  Tracked out;
  bool pending_space = false;
  for (std::size_t k = 0; k < t.text.size(); ++k) {
    const auto c = static_cast<unsigned char>(t.text[k]);
    const bool letter = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
    if (!letter) {
      pending_space = !out.text.empty();
      continue;
    }
    if (pending_space) out.push(' ', t.origin[k - 1]);
    pending_space = false;
    out.push(static_cast<char>(std::tolower(c)), t.origin[k]);
  }
  t = std::move(out);
}

}  // namespace

struct Preprocessor::Impl {
  PreprocessConfig config;
  std::optional<boost::regex> header;
  boost::regex title;
  std::vector<boost::regex> blocked;
  std::vector<boost::regex> rules;
};

Preprocessor::Preprocessor(const PreprocessConfig& config) : impl_(std::make_unique<Impl>()) {
  impl_->config = config;
  if (!config.header_terminator.empty()) {
    impl_->header = compile(config.header_terminator, "header_terminator");
  }
  impl_->title = compile(config.section_title, "section_title");
  for (const auto& b : config.section_blocklist) {
    if (b.empty()) throw ConfigError("section_blocklist entries must be nonempty");
    impl_->blocked.push_back(compile(b, "section_blocklist", boost::regex::icase));
  }
  for (const auto& r : config.entity_scrub_rules) {
    impl_->rules.push_back(compile(r.pattern, "entity rule " + r.name));
  }
}

Preprocessor::~Preprocessor() = default;
Preprocessor::Preprocessor(Preprocessor&&) noexcept = default;
Preprocessor& Preprocessor::operator=(Preprocessor&&) noexcept = default;

const PreprocessConfig& Preprocessor::config() const { return impl_->config; }

CleanNote Preprocessor::run_text(std::string_view text, std::string note_id) const {
  Tracked t = track(text);
  collapse_lines(t);
  if (impl_->header) strip_header(t, *impl_->header);
  remove_sections(t, impl_->title, impl_->blocked);
  scrub_tracked(t, impl_->rules);
  normalize(t);
  return CleanNote{std::move(note_id), std::move(t.text), std::move(t.origin)};
}

CleanNote Preprocessor::run(const Note& note) const { return run_text(note.text, note.note_id); }

std::string Preprocessor::scrub(std::string_view text) const {
  Tracked t = track(text);
  scrub_tracked(t, impl_->rules);
  return std::move(t.text);
}

CleanNote preprocess_note(const Note& note, const PreprocessConfig& config) {
  return Preprocessor(config).run(note);
}

std::string scrub_entities(std::string_view text, const std::vector<EntityRule>& rules) {
  std::vector<boost::regex> compiled;
  for (const auto& r : rules) compiled.push_back(compile(r.pattern, "entity rule " + r.name));
  Tracked t = track(text);
  scrub_tracked(t, compiled);
  return std::move(t.text);
}

std::vector<CleanNote> preprocess_notes(std::span<const Note> notes, const Preprocessor& pre) {
  std::vector<CleanNote> out(notes.size());
  const auto n = static_cast<std::ptrdiff_t>(notes.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = pre.run(notes[i]);
  return out;
}

double corpus_reduction_ratio(std::span<const Note> raw, std::span<const CleanNote> clean) {
  if (raw.size() != clean.size()) throw DataError("raw and clean note lists differ in length");
  double raw_chars = 0, clean_chars = 0;
  for (const auto& n : raw) raw_chars += static_cast<double>(n.text.size());
  for (const auto& c : clean) clean_chars += static_cast<double>(c.text.size());
  if (raw_chars == 0) throw DataError("raw notes have zero total length");
  return std::clamp(1.0 - clean_chars / raw_chars, 0.0, 1.0);
}

}  // namespace cogscreen
