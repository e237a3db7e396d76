#pragma once

#include <functional>
#include <vector>

#include "fetr/types.hpp"

namespace fetr {

/// X^T X and X^T Y, computed once per fit.
///
/// Shared data keeps a single Gram matrix; per-task data keeps X_i^T X_i for
/// every task. Column i of `xty` is X_i^T y_i in both cases.
struct QuadraticCache {
  bool shared = true;
  Index dim = 0;
  Index num_tasks = 0;
  std::vector<Matrix> grams;
  Matrix xty;
  double xty_norm = 0.0;
  Vector gram_eigs;  // every eigenvalue of every Gram block

  const Matrix& gram(Index task) const { return shared ? grams.front() : grams[static_cast<std::size_t>(task)]; }
};

QuadraticCache make_quadratic_cache(const MultitaskDataset& data);

/// Step size and contraction constants for fixed-step gradient descent.
struct StepSchedule {
  double lambda_l = 0.0;  // smallest Gram eigenvalue + eta l^2
  double lambda_u = 0.0;  // largest Gram eigenvalue + eta u^2
  double step = 0.0;      // 2 / (lambda_u + lambda_l)
  double kappa = 0.0;
  double gamma = 0.0;     // ((lambda_u - lambda_l) / (lambda_u + lambda_l))^2
};

StepSchedule step_schedule(const Vector& xtx_eigs, double eta, double lower, double upper);

/// h(W) = sum_i ||y_i - X_i w_i||^2 + eta tr(Sigma1 W Sigma2 W^T), residuals evaluated directly.
double w_subobjective(const Matrix& w, const MultitaskDataset& data, const Matrix& sigma1,
                      const Matrix& sigma2, double eta);

/// Gradient of h: 2(X^T X W - X^T Y) + 2 eta Sigma1 W Sigma2, column-wise for per-task data.
Matrix grad_h(const Matrix& w, const QuadraticCache& cache, const Matrix& sigma1,
              const Matrix& sigma2, double eta);
Matrix grad_h(const Matrix& w, const MultitaskDataset& data, const Matrix& sigma1,
              const Matrix& sigma2, double eta);

inline constexpr Index kDefaultClosedFormGuard = 4000;

/// vec(W) = (I_m (x) X^T X + eta Sigma2 (x) Sigma1)^{-1} vec(X^T Y).
/// Throws CapacityError if md exceeds `guard`, UnsupportedShapeError on per-task data.
WeightMatrix solve_w_closed(const QuadraticCache& cache, const Matrix& sigma1, const Matrix& sigma2,
                            double eta, Index guard = kDefaultClosedFormGuard);
WeightMatrix solve_w_closed(const MultitaskDataset& data, const Matrix& sigma1,
                            const Matrix& sigma2, double eta,
                            Index guard = kDefaultClosedFormGuard);

struct GdResult {
  WeightMatrix weights;
  int iterations = 0;
};

/// Called with the iterate index and W after every step (and once with W_0).
using GdObserver = std::function<void(int, const Matrix&)>;

/// Fixed-step gradient descent on h with the schedule's step applied to the
/// Hessian of h/2. Stops once ||grad h||_F <= rel_tol (1 + ||X^T Y||_F).
GdResult solve_w_gd(const QuadraticCache& cache, const Matrix& sigma1, const Matrix& sigma2,
                    double eta, const StepSchedule& schedule, const Matrix& w0, int max_iters,
                    double rel_tol, const GdObserver& observer = {});
GdResult solve_w_gd(const MultitaskDataset& data, const Matrix& sigma1, const Matrix& sigma2,
                    double eta, const StepSchedule& schedule, const Matrix& w0, int max_iters,
                    double rel_tol);

/// Solves X^T X W + eta Sigma1 W Sigma2 = X^T Y through the symmetrized
/// Sylvester system in W' = Sigma1^{1/2} W.
WeightMatrix solve_w_sylvester(const QuadraticCache& cache, const Matrix& sigma1,
                               const Matrix& sigma2, double eta);
WeightMatrix solve_w_sylvester(const MultitaskDataset& data, const Matrix& sigma1,
                               const Matrix& sigma2, double eta);

/// Largest md for which Auto prefers the closed form.
inline constexpr Index kAutoClosedFormLimit = 256;

/// Maps Auto onto a concrete solver for the given data shape.
WSolverKind resolve_w_solver(WSolverKind requested, bool shared, Index d, Index m, Index guard);

struct WSolveOptions {
  WSolverKind kind = WSolverKind::Auto;
  Index closed_form_guard = kDefaultClosedFormGuard;
  int gd_max_iters = 100000;
  double gd_rel_tol = 1e-10;
};

/// One W-block update with the requested solver; `warm_start` seeds gradient descent.
Matrix solve_w(const QuadraticCache& cache, const Matrix& sigma1, const Matrix& sigma2,
               double eta, double lower, double upper, const Matrix& warm_start,
               const WSolveOptions& options);

}  // namespace fetr
