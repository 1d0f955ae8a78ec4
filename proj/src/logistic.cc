#include "cogscreen/logistic.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "cogscreen/error.h"
#include "cogscreen/metrics.h"

namespace cogscreen {

using nlohmann::json;

namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

void check_problem(const Matrix& x, const Vector& y) {
  if (x.rows() != y.size()) throw DataError("design matrix and labels differ in rows");
  if (x.rows() < 2) throw DataError("need at least 2 rows");
  if (!x.allFinite()) throw DataError("design matrix has non-finite entries");
  double pos = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) throw DataError("labels must be 0 or 1");
    pos += y[i];
  }
  if (pos == 0 || pos == static_cast<double>(y.size())) {
    throw DataError("labels contain a single class");
  }
}

double logit(double p) { return std::log(p / (1.0 - p)); }

// Loss and gradient from a single pass over the linear predictor.
double loss_with_gradient(const Matrix& x, const Vector& y, const Vector& w, double b, Vector* grad_w,
                          double* grad_b) {
  Vector r = (x * w).array() + b;
  double total = 0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double z = r[i];
    const double e = std::exp(-std::abs(z));
    total += std::max(z, 0.0) + std::log1p(e) - y[i] * z;
    r[i] = (z >= 0 ? 1.0 / (1.0 + e) : e / (1.0 + e)) - y[i];
  }
  const double n = static_cast<double>(y.size());
  *grad_w = x.transpose() * r / n;
  *grad_b = r.sum() / n;
  return total / n;
}

}  // namespace

Vector to_vector(std::span<const int> labels) {
  Vector y(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) y[static_cast<Eigen::Index>(i)] = labels[i];
  return y;
}

Standardization fit_standardization(const Matrix& x) {
  Standardization s;
  const double n = static_cast<double>(x.rows());
  s.mean = x.colwise().mean().transpose();
  s.sd.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - s.mean[j]).square().sum() / n;
    s.sd[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  return s;
}

Matrix standardize(const Matrix& x, const Standardization& s) {
  if (x.cols() != s.mean.size()) throw DataError("feature dimension mismatch");
  Matrix out = x.rowwise() - s.mean.transpose();
  out.array().rowwise() /= s.sd.transpose().array();
  // Constant columns standardize to exact zeros.
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (s.sd[j] == 1.0 && (x.col(j).array() == s.mean[j]).all()) out.col(j).setZero();
  }
  return out;
}

double smooth_loss(const Matrix& x, const Vector& y, const Vector& w, double b) {
  const Vector eta = (x * w).array() + b;
  double total = 0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) total += softplus(eta[i]) - y[i] * eta[i];
  return total / static_cast<double>(y.size());
}

void smooth_gradient(const Matrix& x, const Vector& y, const Vector& w, double b, Vector* grad_w,
                     double* grad_b) {
  Vector r = (x * w).array() + b;
  for (Eigen::Index i = 0; i < r.size(); ++i) r[i] = sigmoid(r[i]) - y[i];
  const double n = static_cast<double>(y.size());
  *grad_w = x.transpose() * r / n;
  *grad_b = r.sum() / n;
}

double l1_objective(const Matrix& x, const Vector& y, const Vector& w, double b, double lambda) {
  return smooth_loss(x, y, w, b) + lambda * w.lpNorm<1>();
}

double lambda_max(const Matrix& x, const Vector& y) {
  if (x.cols() == 0) return 0.0;
  const Vector centered = y.array() - y.mean();
  return (x.transpose() * centered).cwiseAbs().maxCoeff() / static_cast<double>(y.size());
}

std::vector<double> lambda_grid(double lmax, int count, double min_ratio) {
  if (count < 1) throw ConfigError("lambda grid needs at least one value");
  if (!(lmax > 0)) return std::vector<double>(static_cast<std::size_t>(count), 0.0);
  std::vector<double> grid;
  for (int i = 0; i < count; ++i) {
    const double frac = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    grid.push_back(lmax * std::pow(min_ratio, frac));
  }
  return grid;
}

L1Solution solve_l1_logistic(const Matrix& x, const Vector& y, double lambda, const SolverOptions& options,
                             const L1Solution* warm_start, std::vector<double>* trace) {
  check_problem(x, y);
  if (lambda < 0) throw ConfigError("lambda must be nonnegative");
  const Eigen::Index p = x.cols();
  L1Solution sol;
  sol.lambda = lambda;

  // At or above lambda_max the KKT conditions hold at the null model.
  if (lambda >= lambda_max(x, y)) {
    sol.weights = Vector::Zero(p);
    sol.intercept = logit(y.mean());
    sol.converged = true;
    if (trace) trace->push_back(l1_objective(x, y, sol.weights, sol.intercept, lambda));
    return sol;
  }

  Vector w = Vector::Zero(p);
  double b = logit(y.mean());
  if (warm_start && warm_start->weights.size() == p) {
    w = warm_start->weights;
    b = warm_start->intercept;
  }
  // Monotone accelerated proximal gradient: the extrapolated point only
  // supplies the prox step; the iterate moves only if the objective drops.
  double obj = l1_objective(x, y, w, b, lambda);
  Vector yw = w, w_prev = w, gw, zw(p);
  double yb = b, b_prev = b, gb = 0;
  double t = 1.0, step = 1.0;
  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    const double fy = loss_with_gradient(x, y, yw, yb, &gw, &gb);
    double zb = yb, fz = fy;
    for (;;) {
      for (Eigen::Index j = 0; j < p; ++j) zw[j] = soft_threshold(yw[j] - step * gw[j], step * lambda);
      zb = yb - step * gb;
      fz = smooth_loss(x, y, zw, zb);
      const Vector dw = zw - yw;
      const double db = zb - yb;
      const double model = fy + gw.dot(dw) + gb * db + (dw.squaredNorm() + db * db) / (2 * step);
      if (fz <= model + 1e-15 * std::abs(fy) || step < 1e-20) break;
      step *= 0.5;
    }
    const double change = std::max(p > 0 ? (zw - yw).cwiseAbs().maxCoeff() : 0.0, std::abs(zb - yb));
    const double z_obj = fz + lambda * zw.lpNorm<1>();
    w_prev = w;
    b_prev = b;
    bool accepted = z_obj <= obj;
    if (accepted) {
      w = zw;
      b = zb;
      obj = z_obj;
    }
    sol.iterations = iter;
    if (trace) trace->push_back(obj);
    if (change < options.tolerance) {
      sol.converged = true;
      break;
    }
    if (!accepted) {
      // Momentum overshot: restart from the current iterate.
      t = 1.0;
      yw = w;
      yb = b;
      continue;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    yw = w + ((t - 1.0) / t_next) * (w - w_prev);
    yb = b + ((t - 1.0) / t_next) * (b - b_prev);
    t = t_next;
    step *= 1.1;
  }
  sol.weights = std::move(w);
  sol.intercept = b;
  return sol;
}

std::vector<L1Solution> solve_l1_path(const Matrix& x, const Vector& y, std::span<const double> grid,
                                      const SolverOptions& options, bool stop_when_saturated) {
  std::vector<L1Solution> path;
  const double ybar = y.mean();
  const double null_dev = -(y.array() * std::log(ybar) + (1 - y.array()) * std::log(1 - ybar)).mean();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (i > 0 && grid[i] > grid[i - 1]) throw ConfigError("lambda grid must be descending");
    path.push_back(solve_l1_logistic(x, y, grid[i], options, path.empty() ? nullptr : &path.back()));
    if (stop_when_saturated) {
      const auto& s = path.back();
      const double dev = smooth_loss(x, y, s.weights, s.intercept);
      if (1.0 - dev / null_dev >= 0.999) break;
    }
  }
  return path;
}

LogisticModel make_model(const L1Solution& solution, Standardization stats,
                         std::vector<std::string> feature_names) {
  LogisticModel m;
  const auto p = static_cast<std::size_t>(solution.weights.size());
  if (feature_names.empty()) {
    for (std::size_t j = 0; j < p; ++j) feature_names.push_back("x" + std::to_string(j));
  }
  if (feature_names.size() != p) throw DataError("feature name count does not match weights");
  m.feature_names = std::move(feature_names);
  m.weights = solution.weights;
  m.intercept = solution.intercept;
  m.lambda = solution.lambda;
  m.stats = std::move(stats);
  return m;
}

LogisticModel fit_l1_logistic(const Matrix& x_raw, const Vector& y, double lambda,
                              std::vector<std::string> feature_names, const SolverOptions& options) {
  check_problem(x_raw, y);
  auto stats = fit_standardization(x_raw);
  const Matrix x = standardize(x_raw, stats);
  return make_model(solve_l1_logistic(x, y, lambda, options), std::move(stats), std::move(feature_names));
}

double predict_proba(const LogisticModel& m, std::span<const double> x_raw) {
  if (static_cast<Eigen::Index>(x_raw.size()) != m.weights.size()) {
    throw DataError("predict_proba: expected " + std::to_string(m.weights.size()) + " features, got " +
                    std::to_string(x_raw.size()));
  }
  double z = m.intercept;
  for (std::size_t j = 0; j < x_raw.size(); ++j) {
    const auto k = static_cast<Eigen::Index>(j);
    z += m.weights[k] * (x_raw[j] - m.stats.mean[k]) / m.stats.sd[k];
  }
  return sigmoid(z);
}

Vector predict_proba(const LogisticModel& m, const Matrix& x_raw) {
  if (x_raw.cols() != m.weights.size()) throw DataError("predict_proba: feature dimension mismatch");
  Vector z = (standardize(x_raw, m.stats) * m.weights).array() + m.intercept;
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = sigmoid(z[i]);
  return z;
}

json to_json(const LogisticModel& m) {
  json weights = json::object(), mean = json::object(), sd = json::object();
  for (std::size_t j = 0; j < m.feature_names.size(); ++j) {
    const auto k = static_cast<Eigen::Index>(j);
    weights[m.feature_names[j]] = m.weights[k];
    mean[m.feature_names[j]] = m.stats.mean[k];
    sd[m.feature_names[j]] = m.stats.sd[k];
  }
  return {{"feature_order", m.feature_names},
          {"weights", weights},
          {"intercept", m.intercept},
          {"lambda", m.lambda},
          {"standardization", {{"mean", mean}, {"sd", sd}}}};
}

LogisticModel logistic_from_json(const json& j) {
  LogisticModel m;
  try {
    m.feature_names = j.at("feature_order").get<std::vector<std::string>>();
    const auto p = static_cast<Eigen::Index>(m.feature_names.size());
    m.weights.resize(p);
    m.stats.mean.resize(p);
    m.stats.sd.resize(p);
    for (Eigen::Index k = 0; k < p; ++k) {
      const auto& name = m.feature_names[static_cast<std::size_t>(k)];
      m.weights[k] = j.at("weights").at(name).get<double>();
      m.stats.mean[k] = j.at("standardization").at("mean").at(name).get<double>();
      m.stats.sd[k] = j.at("standardization").at("sd").at(name).get<double>();
    }
    m.intercept = j.at("intercept").get<double>();
    m.lambda = j.at("lambda").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("logistic model: ") + e.what());
  }
  return m;
}

std::vector<int> stratified_folds(std::span<const int> labels, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("need at least 2 folds");
  std::vector<int> fold(labels.size(), 0);
  std::mt19937_64 rng(seed);
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) idx.push_back(i);
    }
    if (static_cast<int>(idx.size()) < k) {
      throw DataError("class " + std::to_string(cls) + " has fewer members than folds (" +
                      std::to_string(idx.size()) + " < " + std::to_string(k) + ")");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t r = 0; r < idx.size(); ++r) fold[idx[r]] = static_cast<int>(r % static_cast<std::size_t>(k));
  }
  return fold;
}

CvResult cv_select_lambda(const Matrix& x_raw, const Vector& y, int k, std::vector<double> grid,
                          std::uint64_t seed, const SolverOptions& options) {
  check_problem(x_raw, y);
  if (x_raw.rows() < k) throw DataError("fewer rows than folds");
  std::vector<int> labels(static_cast<std::size_t>(y.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(y[i]);

  CvResult result;
  result.fold_of = stratified_folds(labels, k, seed);
  if (grid.empty()) {
    const Matrix xs = standardize(x_raw, fit_standardization(x_raw));
    grid = lambda_grid(lambda_max(xs, y));
  }
  result.lambda_grid = grid;
  const auto g = grid.size();
  // oof[l] holds out-of-fold predictions for grid point l.
  std::vector<Vector> oof(g, Vector::Zero(y.size()));
  std::vector<std::vector<double>> fold_auc(static_cast<std::size_t>(k), std::vector<double>(g, 0.0));

#pragma omp parallel for schedule(dynamic, 1)
  for (int f = 0; f < k; ++f) {
    std::vector<Eigen::Index> tr, te;
    for (Eigen::Index i = 0; i < y.size(); ++i) (result.fold_of[static_cast<std::size_t>(i)] == f ? te : tr).push_back(i);
    const Matrix x_tr_raw = x_raw(tr, Eigen::all);
    const Matrix x_te_raw = x_raw(te, Eigen::all);
    const Vector y_tr = y(tr);
    const auto stats = fit_standardization(x_tr_raw);
    const Matrix x_tr = standardize(x_tr_raw, stats);
    const Matrix x_te = standardize(x_te_raw, stats);
    std::vector<int> y_te(te.size());
    for (std::size_t i = 0; i < te.size(); ++i) y_te[i] = labels[static_cast<std::size_t>(te[i])];
    const auto path = solve_l1_path(x_tr, y_tr, grid, options);
    for (std::size_t l = 0; l < g; ++l) {
      Vector z = (x_te * path[l].weights).array() + path[l].intercept;
      std::vector<double> s(te.size());
      for (std::size_t i = 0; i < te.size(); ++i) {
        s[i] = 1.0 / (1.0 + std::exp(-z[static_cast<Eigen::Index>(i)]));
        oof[l][te[i]] = s[i];
      }
      fold_auc[static_cast<std::size_t>(f)][l] = roc_auc(s, y_te);
    }
  }

  result.mean_auc.assign(g, 0.0);
  for (std::size_t l = 0; l < g; ++l) {
    for (int f = 0; f < k; ++f) result.mean_auc[l] += fold_auc[static_cast<std::size_t>(f)][l];
    result.mean_auc[l] /= k;
  }
  // Grid is descending, so the first maximum is the largest lambda.
  std::size_t best = 0;
  for (std::size_t l = 1; l < g; ++l) {
    if (result.mean_auc[l] > result.mean_auc[best]) best = l;
  }
  result.chosen_index = best;
  result.chosen_lambda = grid[best];
  result.oof_scores = oof[best];
  return result;
}

}  // namespace cogscreen
