#include "cogscreen/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "cogscreen/error.h"

namespace cogscreen {

using nlohmann::json;

std::size_t ScoredSet::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

void ScoredSet::validate() const {
  if (scores.size() != labels.size() || (!ids.empty() && ids.size() != scores.size())) {
    throw DataError("scored set: ids, scores and labels differ in length");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw DataError("scored set: non-finite score");
  }
  for (int l : labels) {
    if (l != 0 && l != 1) throw DataError("scored set: labels must be 0 or 1");
  }
}

void ScoredSet::add(std::string id, double score, int label) {
  ids.push_back(std::move(id));
  scores.push_back(score);
  labels.push_back(label);
}

ScoredSet read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scores file " + path.string());
  ScoredSet set;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("patient_id", 0) == 0) continue;
    std::stringstream row(line);
    std::string id, score, label;
    if (!std::getline(row, id, ',') || !std::getline(row, score, ',') || !std::getline(row, label, ',')) {
      throw ParseError(path.string(), lineno, "<row>", "expected patient_id,score,label");
    }
    try {
      std::size_t used = 0;
      const double s = std::stod(score, &used);
      if (used != score.size()) throw std::invalid_argument(score);
      if (label != "0" && label != "1") throw ParseError(path.string(), lineno, "label", "expected 0 or 1");
      set.add(id, s, label == "1" ? 1 : 0);
    } catch (const std::logic_error&) {
      throw ParseError(path.string(), lineno, "score", "not a number: " + score);
    }
  }
  set.validate();
  return set;
}

std::string format_scores_csv(const ScoredSet& set) {
  std::string out = "patient_id,score,label\n";
  char buf[64];
  for (std::size_t i = 0; i < set.size(); ++i) {
    std::snprintf(buf, sizeof(buf), ",%.17g,%d\n", set.scores[i], set.labels[i]);
    out += (set.ids.empty() ? std::to_string(i) : set.ids[i]) + buf;
  }
  return out;
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DataError("roc_curve: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<RocPoint> curve{{std::numeric_limits<double>::infinity(), 0, 0}};
  std::size_t i = 0;
  while (i < order.size()) {
    RocPoint pt = curve.back();
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] == 1 ? pt.tp : pt.fp) += 1;
      ++i;
    }
    pt.threshold = s;
    curve.push_back(pt);
  }
  return curve;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  const auto curve = roc_curve(scores, labels);
  const auto p = curve.back().tp, n = curve.back().fp;
  if (p == 0 || n == 0) throw DataError("roc_auc needs both classes");
  // Twice the area in count units: sum of dFP * (TP_prev + TP_cur).
  std::int64_t twice_area = 0;
  for (std::size_t k = 1; k < curve.size(); ++k) {
    twice_area += (curve[k].fp - curve[k - 1].fp) * (curve[k].tp + curve[k - 1].tp);
  }
  return (static_cast<double>(twice_area) * 0.5) / static_cast<double>(p * n);
}

double roc_auc(const ScoredSet& set) {
  set.validate();
  return roc_auc(set.scores, set.labels);
}

ThresholdChoice best_accuracy_threshold(std::span<const double> scores, std::span<const int> labels) {
  if (scores.empty()) throw DataError("best_accuracy_threshold: empty set");
  const auto curve = roc_curve(scores, labels);
  const auto n = static_cast<std::int64_t>(scores.size());
  const auto neg = curve.back().fp;
  // curve[k] counts predictions with score >= curve[k].threshold, so the
  // candidate just above curve[k+1]'s score yields curve[k]'s counts.
  ThresholdChoice best{std::numeric_limits<double>::infinity(), static_cast<double>(neg) / n};
  for (std::size_t k = 1; k < curve.size(); ++k) {
    const double correct = static_cast<double>(curve[k].tp + (neg - curve[k].fp));
    const double acc = correct / static_cast<double>(n);
    const double threshold = k + 1 < curve.size()
                                 ? 0.5 * (curve[k].threshold + curve[k + 1].threshold)
                                 : -std::numeric_limits<double>::infinity();
    // Iteration runs from high to low thresholds; keep the first maximum.
    if (acc > best.accuracy) best = {threshold, acc};
  }
  return best;
}

ThresholdChoice best_accuracy_threshold(const ScoredSet& set) {
  set.validate();
  return best_accuracy_threshold(set.scores, set.labels);
}

MetricsReport metrics_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn, std::int64_t tn) {
  if (tp < 0 || fp < 0 || fn < 0 || tn < 0) throw DataError("confusion counts must be nonnegative");
  MetricsReport r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.tn = tn;
  auto ratio = [](std::int64_t num, std::int64_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  r.accuracy = ratio(tp + tn, r.total()).value_or(0.0);
  r.sensitivity = ratio(tp, tp + fn);
  r.specificity = ratio(tn, tn + fp);
  r.ppv = ratio(tp, tp + fp);
  r.npv = ratio(tn, tn + fn);
  return r;
}

MetricsReport metrics_report(const ScoredSet& set, double threshold) {
  set.validate();
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const bool predicted = set.scores[i] >= threshold;
    if (set.labels[i] == 1) (predicted ? tp : fn) += 1;
    else (predicted ? fp : tn) += 1;
  }
  MetricsReport r = metrics_from_counts(tp, fp, fn, tn);
  r.threshold = threshold;
  if (tp + fn > 0 && fp + tn > 0) r.auc = roc_auc(set.scores, set.labels);
  return r;
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

json threshold_json(double t) {
  if (std::isinf(t)) return t > 0 ? "inf" : "-inf";
  return t;
}

double threshold_from(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw ConfigError("bad threshold '" + s + "'");
  }
  return j.get<double>();
}

std::string fmt2(const std::optional<double>& v) {
  if (!v) return "—";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *v);
  return buf;
}

}  // namespace

json to_json(const MetricsReport& r) {
  return {{"auc", optional_json(r.auc)},
          {"threshold", threshold_json(r.threshold)},
          {"threshold_source", r.threshold_source},
          {"tp", r.tp},
          {"fp", r.fp},
          {"fn", r.fn},
          {"tn", r.tn},
          {"accuracy", r.accuracy},
          {"sensitivity", optional_json(r.sensitivity)},
          {"specificity", optional_json(r.specificity)},
          {"ppv", optional_json(r.ppv)},
          {"npv", optional_json(r.npv)}};
}

MetricsReport metrics_from_json(const json& j) {
  MetricsReport r;
  try {
    r.auc = optional_from(j, "auc");
    r.threshold = threshold_from(j.at("threshold"));
    r.threshold_source = j.value("threshold_source", std::string());
    r.tp = j.at("tp").get<std::int64_t>();
    r.fp = j.at("fp").get<std::int64_t>();
    r.fn = j.at("fn").get<std::int64_t>();
    r.tn = j.at("tn").get<std::int64_t>();
    r.accuracy = j.at("accuracy").get<double>();
    r.sensitivity = optional_from(j, "sensitivity");
    r.specificity = optional_from(j, "specificity");
    r.ppv = optional_from(j, "ppv");
    r.npv = optional_from(j, "npv");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("metrics report: ") + e.what());
  }
  return r;
}

std::string ComparisonTable::markdown() const {
  std::string out =
      "| Model | AUC | Accuracy | FP | FN | Sensitivity | Specificity | PPV | NPV |\n"
      "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& [name, r] : rows) {
    out += "| " + name + " | " + fmt2(r.auc) + " | " + fmt2(r.accuracy) + " | " +
           std::to_string(r.fp) + " | " + std::to_string(r.fn) + " | " + fmt2(r.sensitivity) +
           " | " + fmt2(r.specificity) + " | " + fmt2(r.ppv) + " | " + fmt2(r.npv) + " |\n";
  }
  return out;
}

json ComparisonTable::to_json() const {
  json j = json::array();
  for (const auto& [name, r] : rows) j.push_back({{"model", name}, {"metrics", cogscreen::to_json(r)}});
  return j;
}

ComparisonTable ComparisonTable::from_json(const json& j) {
  ComparisonTable t;
  for (const auto& row : j) {
    t.rows.emplace_back(row.at("model").get<std::string>(), metrics_from_json(row.at("metrics")));
  }
  return t;
}

ComparisonTable compare_models(std::vector<std::pair<std::string, MetricsReport>> reports) {
  if (reports.empty()) throw DataError("compare_models needs at least one report");
  return ComparisonTable{std::move(reports)};
}

}  // namespace cogscreen
