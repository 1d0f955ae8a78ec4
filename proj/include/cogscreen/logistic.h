#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace cogscreen {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Per-column mean and population standard deviation. Constant columns keep
// sd = 1 so they standardize to zero.
struct Standardization {
  Vector mean;
  Vector sd;
};

Standardization fit_standardization(const Matrix& x);
Matrix standardize(const Matrix& x, const Standardization& stats);

struct SolverOptions {
  double tolerance = 1e-7;  // on the largest coefficient change per step
  int max_iterations = 10000;
};

struct L1Solution {
  Vector weights;
  double intercept = 0.0;
  double lambda = 0.0;
  int iterations = 0;
  bool converged = false;
};

// (1/n) * sum of logistic log-losses, and its gradient.
double smooth_loss(const Matrix& x, const Vector& y, const Vector& w, double b);
void smooth_gradient(const Matrix& x, const Vector& y, const Vector& w, double b, Vector* grad_w,
                     double* grad_b);
double l1_objective(const Matrix& x, const Vector& y, const Vector& w, double b, double lambda);

// Smallest lambda whose solution is all-zero: max_j |x_j^T (y - mean(y))| / n.
double lambda_max(const Matrix& x, const Vector& y);
// `count` log-spaced values from lambda_max down to lambda_max * min_ratio.
std::vector<double> lambda_grid(double lmax, int count = 50, double min_ratio = 1e-4);

// Accelerated proximal gradient (soft-thresholding, monotone FISTA) with
// backtracking on standardized columns; the intercept is not penalized.
// Stops when the prox step moves no coordinate by more than the tolerance.
// `trace`, when given, receives the objective after every iteration.
L1Solution solve_l1_logistic(const Matrix& x, const Vector& y, double lambda,
                             const SolverOptions& options = {}, const L1Solution* warm_start = nullptr,
                             std::vector<double>* trace = nullptr);

// Warm-started path over a descending grid. With `stop_when_saturated` the
// path ends early once the fit explains 99.9% of the null deviance.
std::vector<L1Solution> solve_l1_path(const Matrix& x, const Vector& y, std::span<const double> grid,
                                      const SolverOptions& options = {},
                                      bool stop_when_saturated = false);

struct LogisticModel {
  std::vector<std::string> feature_names;
  Vector weights;
  double intercept = 0.0;
  double lambda = 0.0;
  Standardization stats;
};

// Standardizes raw features, solves, and keeps the training statistics.
LogisticModel fit_l1_logistic(const Matrix& x_raw, const Vector& y, double lambda,
                              std::vector<std::string> feature_names = {},
                              const SolverOptions& options = {});
LogisticModel make_model(const L1Solution& solution, Standardization stats,
                         std::vector<std::string> feature_names);

double predict_proba(const LogisticModel& model, std::span<const double> x_raw);
Vector predict_proba(const LogisticModel& model, const Matrix& x_raw);

nlohmann::json to_json(const LogisticModel& model);
LogisticModel logistic_from_json(const nlohmann::json& j);

struct CvResult {
  std::vector<double> lambda_grid;
  std::vector<double> mean_auc;
  std::size_t chosen_index = 0;
  double chosen_lambda = 0.0;
  // Out-of-fold probabilities at the chosen lambda.
  Vector oof_scores;
  std::vector<int> fold_of;
};

// Each fold receives an equal share of each class, assigned in shuffled order.
std::vector<int> stratified_folds(std::span<const int> labels, int k, std::uint64_t seed);

// k-fold CV maximizing mean out-of-fold AUC; ties go to the larger lambda.
// An empty grid means lambda_grid(lambda_max(standardized x, y)).
// Folds run in parallel; results do not depend on the thread count.
CvResult cv_select_lambda(const Matrix& x_raw, const Vector& y, int k = 10,
                          std::vector<double> grid = {}, std::uint64_t seed = 0,
                          const SolverOptions& options = {});

Vector to_vector(std::span<const int> labels);

}  // namespace cogscreen
