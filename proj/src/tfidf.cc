#include "cogscreen/tfidf.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "cogscreen/error.h"

namespace cogscreen {

using nlohmann::json;

Vocabulary::Vocabulary(std::vector<std::string> terms) : terms_(std::move(terms)) {
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    if (!index_.emplace(terms_[i], static_cast<int>(i)).second) {
      throw DataError("duplicate vocabulary term '" + terms_[i] + "'");
    }
  }
}

int Vocabulary::find(std::string_view term) const {
  auto it = index_.find(std::string(term));
  return it == index_.end() ? -1 : it->second;
}

std::vector<int> TfIdfModel::selected_indices() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (selected[i]) out.push_back(static_cast<int>(i));
  }
  return out;
}

json to_json(const TfIdfModel& m) {
  json j;
  j["vocab"] = m.vocab.terms();
  j["idf"] = m.idf;
  j["corr"] = m.corr;
  std::vector<int> sel(m.selected.begin(), m.selected.end());
  j["selected"] = sel;
  j["threshold"] = m.threshold;
  j["n_docs"] = m.n_docs;
  j["min_df"] = m.options.min_df;
  j["correlation_basis"] = m.options.basis == CorrelationBasis::kTfIdf ? "tfidf" : "presence";
  return j;
}

TfIdfModel tfidf_from_json(const json& j) {
  TfIdfModel m;
  try {
    m.vocab = Vocabulary(j.at("vocab").get<std::vector<std::string>>());
    m.idf = j.at("idf").get<std::vector<double>>();
    m.corr = j.at("corr").get<std::vector<double>>();
    for (int s : j.at("selected").get<std::vector<int>>()) m.selected.push_back(s != 0);
    m.threshold = j.at("threshold").get<double>();
    m.n_docs = j.at("n_docs").get<std::size_t>();
    m.options.min_df = j.value("min_df", 2);
    m.options.basis = j.value("correlation_basis", std::string("tfidf")) == "presence"
                          ? CorrelationBasis::kPresence
                          : CorrelationBasis::kTfIdf;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("tfidf model: ") + e.what());
  }
  const auto n = m.vocab.size();
  if (m.idf.size() != n || m.corr.size() != n || m.selected.size() != n) {
    throw ConfigError("tfidf model: vocab/idf/corr/selected lengths differ");
  }
  return m;
}

std::vector<std::string_view> split_terms(std::string_view doc) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < doc.size()) {
    while (i < doc.size() && doc[i] == ' ') ++i;
    std::size_t j = i;
    while (j < doc.size() && doc[j] != ' ') ++j;
    if (j > i) out.push_back(doc.substr(i, j - i));
    i = j;
  }
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("pearson: length mismatch");
  const auto n = static_cast<double>(x.size());
  if (x.empty()) return 0.0;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0 || syy <= 0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

using Counts = std::vector<std::pair<int, double>>;

// Term counts restricted to the vocabulary, sorted by index.
Counts count_terms(std::string_view doc, const Vocabulary& vocab) {
  std::map<int, double> counts;
  for (auto t : split_terms(doc)) {
    if (int id = vocab.find(t); id >= 0) counts[id] += 1.0;
  }
  return {counts.begin(), counts.end()};
}

void normalize(std::vector<std::pair<int, double>>& v) {
  double ss = 0;
  for (const auto& [i, w] : v) ss += w * w;
  if (ss <= 0) return;
  const double inv = 1.0 / std::sqrt(ss);
  for (auto& [i, w] : v) w *= inv;
}

}  // namespace

TfIdfModel fit_tfidf(std::span<const std::string> docs, std::span<const int> labels,
                     const TfIdfOptions& options) {
  if (docs.size() != labels.size()) throw DataError("fit_tfidf: docs and labels differ in length");
  if (docs.size() < 2) throw DataError("fit_tfidf needs at least 2 documents");
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(labels.size())) {
    throw DataError("fit_tfidf needs both classes (correlation is undefined otherwise)");
  }

  std::map<std::string, std::size_t, std::less<>> df;
  for (const auto& doc : docs) {
    auto terms = split_terms(doc);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    for (auto t : terms) ++df[std::string(t)];
  }
  std::vector<std::string> terms;
  std::vector<double> idf;
  const auto n = static_cast<double>(docs.size());
  for (const auto& [t, d] : df) {
    if (static_cast<int>(d) < options.min_df) continue;
    terms.push_back(t);
    idf.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(d))) + 1.0);
  }

  TfIdfModel model;
  model.vocab = Vocabulary(std::move(terms));
  model.idf = std::move(idf);
  model.selected.assign(model.vocab.size(), true);
  model.n_docs = docs.size();
  model.options = options;

  // Sparse sufficient statistics for the point-biserial correlation.
  const auto v = model.vocab.size();
  std::vector<double> sx(v, 0.0), sxx(v, 0.0), sxy(v, 0.0);
  for (std::size_t d = 0; d < docs.size(); ++d) {
    Counts x = count_terms(docs[d], model.vocab);
    if (options.basis == CorrelationBasis::kTfIdf) {
      for (auto& [i, w] : x) w *= model.idf[static_cast<std::size_t>(i)];
      normalize(x);
    } else {
      for (auto& [i, w] : x) w = 1.0;
    }
    for (const auto& [i, w] : x) {
      const auto k = static_cast<std::size_t>(i);
      sx[k] += w;
      sxx[k] += w * w;
      sxy[k] += w * labels[d];
    }
  }
  const double p = static_cast<double>(positives);
  const double var_y = n * p - p * p;
  model.corr.assign(v, 0.0);
  for (std::size_t k = 0; k < v; ++k) {
    const double var_x = n * sxx[k] - sx[k] * sx[k];
    if (var_x <= 1e-12 * n * sxx[k] || var_x <= 0) continue;
    const double cov = n * sxy[k] - sx[k] * p;
    model.corr[k] = std::clamp(cov / std::sqrt(var_x * var_y), -1.0, 1.0);
  }
  return model;
}

DocVector transform(std::string_view doc, const TfIdfModel& model) {
  DocVector out;
  for (auto& [i, w] : count_terms(doc, model.vocab)) {
    const auto k = static_cast<std::size_t>(i);
    if (!model.selected[k]) continue;
    out.entries.emplace_back(i, w * model.idf[k]);
  }
  normalize(out.entries);
  return out;
}

TfIdfModel select_features(TfIdfModel model, double threshold) {
  std::size_t kept = 0;
  for (std::size_t k = 0; k < model.corr.size(); ++k) {
    model.selected[k] = std::abs(model.corr[k]) >= threshold;
    kept += model.selected[k];
  }
  if (kept == 0) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", threshold);
    throw ConfigError(std::string("no term has |corr| >= ") + buf + "; lower the threshold");
  }
  model.threshold = threshold;
  return model;
}

std::vector<RankedTerm> rank_terms(const TfIdfModel& model, std::size_t k) {
  std::vector<std::size_t> order(model.vocab.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ca = std::abs(model.corr[a]), cb = std::abs(model.corr[b]);
    if (ca != cb) return ca > cb;
    return model.vocab.term(a) < model.vocab.term(b);
  });
  order.resize(std::min(k, order.size()));
  std::vector<RankedTerm> out;
  for (std::size_t r = 0; r < order.size(); ++r) {
    out.push_back({r + 1, model.vocab.term(order[r]), model.corr[order[r]]});
  }
  return out;
}

std::string format_rank_table(std::span<const RankedTerm> ranked) {
  std::size_t width = 5;
  for (const auto& r : ranked) width = std::max(width, r.term.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%4s  %-*s  %8s\n", "Rank", static_cast<int>(width), "Terms", "CorrCoef");
  out += buf;
  for (const auto& r : ranked) {
    std::snprintf(buf, sizeof(buf), "%4zu  %-*s  %8.4f\n", r.rank, static_cast<int>(width),
                  r.term.c_str(), r.corr);
    out += buf;
  }
  return out;
}

}  // namespace cogscreen
