#include "cogscreen/corpus.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "cogscreen/error.h"
#include "cogscreen/io.h"

namespace cogscreen {

using nlohmann::json;

std::optional<Date> Date::parse(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  auto digits = [&](std::size_t from, std::size_t n) -> std::optional<int> {
    int v = 0;
    for (std::size_t i = from; i < from + n; ++i) {
      if (!std::isdigit(static_cast<unsigned char>(text[i]))) return std::nullopt;
      v = v * 10 + (text[i] - '0');
    }
    return v;
  };
  auto y = digits(0, 4), m = digits(5, 2), d = digits(8, 2);
  if (!y || !m || !d || *m < 1 || *m > 12 || *d < 1) return std::nullopt;
  static constexpr int kDays[] = {31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  const bool leap = (*y % 4 == 0 && *y % 100 != 0) || *y % 400 == 0;
  const int max_day = (*m == 2 && !leap) ? 28 : kDays[*m - 1];
  if (*d > max_day) return std::nullopt;
  return Date{*y, *m, *d};
}

std::string Date::iso() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
  return buf;
}

std::string_view to_string(Sex sex) {
  switch (sex) {
    case Sex::kFemale: return "F";
    case Sex::kMale: return "M";
    case Sex::kOther: return "other";
  }
  return "other";
}

std::string_view to_string(CodeSystem system) {
  return system == CodeSystem::kIcd9 ? "ICD9" : "ICD10";
}

std::string normalize_code(std::string_view code) {
  std::string out;
  out.reserve(code.size());
  for (char c : code) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return out;
}

namespace {

bool all_of_class(std::string_view s, int (*pred)(int)) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [&](char c) {
    return pred(static_cast<unsigned char>(c)) != 0;
  });
}

int is_alnum_upper(int c) { return std::isdigit(c) || std::isupper(c); }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

bool valid_code_syntax(std::string_view raw, CodeSystem system) {
  const std::string code = normalize_code(raw);
  const auto dot = code.find('.');
  const std::string_view head = std::string_view(code).substr(0, dot);
  const std::string_view tail =
      dot == std::string::npos ? std::string_view() : std::string_view(code).substr(dot + 1);
  if (dot != std::string::npos && tail.empty()) return false;
  if (system == CodeSystem::kIcd9) {
    // Numeric families only: NNN or NNN.N / NNN.NN
    return head.size() == 3 && all_of_class(head, ::isdigit) &&
           (tail.empty() || (tail.size() <= 2 && all_of_class(tail, ::isdigit)));
  }
  // Letter, digit, alphanumeric, then an optional .XXXX extension.
  return head.size() == 3 && std::isupper(static_cast<unsigned char>(head[0])) &&
         std::isdigit(static_cast<unsigned char>(head[1])) &&
         is_alnum_upper(static_cast<unsigned char>(head[2])) &&
         (tail.empty() || (tail.size() <= 4 && all_of_class(tail, is_alnum_upper)));
}

bool is_flagged_medication(std::string_view name) {
  const std::string lowered = lower(name);
  return std::any_of(std::begin(kFlaggedMedications), std::end(kFlaggedMedications),
                     [&](std::string_view med) { return lowered.find(med) != std::string::npos; });
}

bool is_flagged_diagnosis(const DiagnosisRecord& diagnosis) {
  const std::string code = normalize_code(diagnosis.code);
  auto starts = [&](std::string_view prefix) { return code.rfind(prefix, 0) == 0; };
  if (diagnosis.system == CodeSystem::kIcd9) {
    return starts("290.") || code == "290" || starts("294.") || code == "294" ||
           starts("331.") || code == "331" || code == "780.93";
  }
  return starts("G30") || starts("G31");
}

StructuredFeatures flag_structured(const PatientRecord& patient) {
  StructuredFeatures f;
  for (const auto& med : patient.medications) f.med_count += is_flagged_medication(med.name);
  for (const auto& dx : patient.diagnoses) f.icd_count += is_flagged_diagnosis(dx);
  return f;
}

// ---------------------------------------------------------------------------
// JSON Lines

json to_json(const PatientRecord& p) {
  json j;
  j["patient_id"] = p.patient_id;
  j["age"] = p.age;
  j["sex"] = std::string(to_string(p.sex));
  j["notes"] = json::array();
  for (const auto& n : p.notes) {
    j["notes"].push_back({{"note_id", n.note_id}, {"date", n.date.iso()}, {"text", n.text}});
  }
  j["medications"] = json::array();
  for (const auto& m : p.medications) {
    j["medications"].push_back({{"name", m.name}, {"date", m.date.iso()}});
  }
  j["diagnoses"] = json::array();
  for (const auto& d : p.diagnoses) {
    j["diagnoses"].push_back(
        {{"code", d.code}, {"system", std::string(to_string(d.system))}, {"date", d.date.iso()}});
  }
  if (p.gold_label) j["gold_label"] = *p.gold_label;
  return j;
}

namespace {

class FieldReader {
 public:
  FieldReader(const std::string& source, std::size_t line) : source_(source), line_(line) {}

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw ParseError(source_, line_, field, what);
  }

  const json& get(const json& obj, const std::string& key, const std::string& path) const {
    if (!obj.is_object()) fail(path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(path + key, "missing");
    return *it;
  }

  std::string string(const json& obj, const std::string& key, const std::string& path = "",
                     bool nonempty = true) const {
    const json& v = get(obj, key, path);
    if (!v.is_string()) fail(path + key, "expected a string");
    auto s = v.get<std::string>();
    if (nonempty && s.empty()) fail(path + key, "must be nonempty");
    return s;
  }

  Date date(const json& obj, const std::string& key, const std::string& path) const {
    auto s = string(obj, key, path);
    auto d = Date::parse(s);
    if (!d) fail(path + key, "not an ISO-8601 date: " + s);
    return *d;
  }

  const json& array(const json& obj, const std::string& key) const {
    const json& v = get(obj, key, "");
    if (!v.is_array()) fail(key, "expected an array");
    return v;
  }

 private:
  const std::string& source_;
  std::size_t line_;
};

}  // namespace

PatientRecord patient_from_json(const json& j, const std::string& source, std::size_t line) {
  FieldReader r(source, line);
  if (!j.is_object()) r.fail("<record>", "expected a JSON object");
  PatientRecord p;
  p.patient_id = r.string(j, "patient_id");
  const json& age = r.get(j, "age", "");
  if (!age.is_number_integer()) r.fail("age", "expected an integer");
  p.age = age.get<int>();
  if (p.age < 0) r.fail("age", "must be >= 0");
  const auto sex = r.string(j, "sex");
  if (sex == "F") p.sex = Sex::kFemale;
  else if (sex == "M") p.sex = Sex::kMale;
  else if (sex == "other") p.sex = Sex::kOther;
  else r.fail("sex", "expected F, M or other");

  std::set<std::string> note_ids;
  const json& notes = r.array(j, "notes");
  for (std::size_t i = 0; i < notes.size(); ++i) {
    const std::string path = "notes[" + std::to_string(i) + "].";
    Note n;
    n.note_id = r.string(notes[i], "note_id", path);
    n.date = r.date(notes[i], "date", path);
    n.text = r.string(notes[i], "text", path);
    if (!note_ids.insert(n.note_id).second) r.fail(path + "note_id", "duplicate " + n.note_id);
    p.notes.push_back(std::move(n));
  }
  const json& meds = r.array(j, "medications");
  for (std::size_t i = 0; i < meds.size(); ++i) {
    const std::string path = "medications[" + std::to_string(i) + "].";
    p.medications.push_back({r.string(meds[i], "name", path), r.date(meds[i], "date", path)});
  }
  const json& dxs = r.array(j, "diagnoses");
  for (std::size_t i = 0; i < dxs.size(); ++i) {
    const std::string path = "diagnoses[" + std::to_string(i) + "].";
    DiagnosisRecord d;
    d.code = r.string(dxs[i], "code", path);
    const auto system = r.string(dxs[i], "system", path);
    if (system == "ICD9") d.system = CodeSystem::kIcd9;
    else if (system == "ICD10") d.system = CodeSystem::kIcd10;
    else r.fail(path + "system", "expected ICD9 or ICD10");
    if (!valid_code_syntax(d.code, d.system)) {
      r.fail(path + "code", "'" + d.code + "' is not valid " + system + " syntax");
    }
    d.date = r.date(dxs[i], "date", path);
    p.diagnoses.push_back(std::move(d));
  }
  if (auto it = j.find("gold_label"); it != j.end() && !it->is_null()) {
    if (!it->is_boolean()) r.fail("gold_label", "expected a boolean");
    p.gold_label = it->get<bool>();
  }
  return p;
}

Corpus read_corpus(std::istream& in, const std::string& source) {
  Corpus corpus;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(source, lineno, "<record>", e.what());
    }
    auto p = patient_from_json(j, source, lineno);
    if (!ids.insert(p.patient_id).second) {
      throw ParseError(source, lineno, "patient_id", "duplicate " + p.patient_id);
    }
    corpus.push_back(std::move(p));
  }
  return corpus;
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& p : corpus) out << to_json(p).dump() << '\n';
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus " + path.string());
  return read_corpus(in, path.string());
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ostringstream out;
  write_corpus(out, corpus);
  atomic_write(path, out.str());
}

TrainTestSplit split_train_test(const Corpus& corpus, double test_fraction, std::uint64_t seed) {
  if (corpus.size() < 10) throw DataError("split needs at least 10 labeled patients");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must be in (0, 1)");
  }
  for (const auto& p : corpus) {
    if (!p.gold_label) throw DataError("patient " + p.patient_id + " is unlabeled");
  }
  const auto n = corpus.size();
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> in_test(n, false);
  for (std::size_t i = 0; i < n_test; ++i) in_test[order[i]] = true;
  TrainTestSplit split;
  for (std::size_t i = 0; i < n; ++i) (in_test[i] ? split.test : split.train).push_back(corpus[i]);
  return split;
}

std::vector<int> labels_of(const Corpus& corpus) {
  std::vector<int> y;
  y.reserve(corpus.size());
  for (const auto& p : corpus) {
    if (!p.gold_label) throw DataError("patient " + p.patient_id + " is unlabeled");
    y.push_back(*p.gold_label ? 1 : 0);
  }
  return y;
}

}  // namespace cogscreen
