#pragma once

#include <utility>

#include "fetr/trainer.hpp"
#include "fetr/types.hpp"

namespace fetr {

/// One fudged flip-flop update, both factors from the previous iterate:
///   Sigma1' = W Sigma2^{-1} W^T / m + eps I_d
///   Sigma2' = W^T Sigma1^{-1} W / d + eps I_m
/// Throws SolverError if an input covariance cannot be inverted.
std::pair<Matrix, Matrix> flip_flop_step(const Matrix& w, const Matrix& sigma1,
                                         const Matrix& sigma2, double epsilon);

struct FlipFlopOptions {
  double eta = 1.0;
  double epsilon = 1e-3;
  double lower = 1e-3;
  double upper = 1e3;
  int max_iters = 100;
  double tol = 1e-8;
  WSolverKind w_solver = WSolverKind::Auto;
  double time_budget_seconds = std::numeric_limits<double>::infinity();
};

/// Relative threshold on the smallest eigenvalue below which an unprojected
/// flip-flop update counts as singular.
inline constexpr double kSingularThreshold = 1e-10;

/// Alternates the W-block with flip-flop covariance steps, projecting both
/// covariances onto [l, u] after each step. If an unprojected update is
/// singular the fit stops with stop_reason "singular". The objective trace
/// is not guaranteed to be monotone.
FetrModel fit_mtfrl_flipflop(const MultitaskDataset& data, const FlipFlopOptions& options);

struct StepRule {
  double initial = 1e-2;
  int max_halvings = 30;
};

/// Gradients of the full objective with respect to each block.
struct ObjectiveGradients {
  Matrix w;
  Matrix sigma1;  // eta (W Sigma2 W^T - m Sigma1^{-1})
  Matrix sigma2;  // eta (W^T Sigma1 W - d Sigma2^{-1})
};

ObjectiveGradients objective_gradients(const Matrix& w, const Matrix& sigma1,
                                       const Matrix& sigma2, const MultitaskDataset& data,
                                       double eta);

/// Simultaneous projected gradient step on (W, Sigma1, Sigma2) with a
/// backtracking step that halves from step_rule.initial until the objective
/// decreases. Stops on the relative objective rule of `config`, after
/// max_outer_iters, on the time budget, or when no halving helps ("stalled").
FetrModel fit_projected_gd(const MultitaskDataset& data, const FetrConfig& config,
                           const StepRule& step_rule = {});

/// Result of a single projected-gradient attempt from a given point.
struct ProjectedStep {
  Matrix w;
  Matrix sigma1;
  Matrix sigma2;
  double objective = 0.0;
  bool decreased = false;
  int evaluations = 0;
};

ProjectedStep projected_gd_step(const Matrix& w, const Matrix& sigma1, const Matrix& sigma2,
                                const MultitaskDataset& data, const FetrConfig& config,
                                const StepRule& step_rule = {});

/// Independent ridge regression per task: w_i = (X_i^T X_i + lambda I)^{-1} X_i^T y_i.
WeightMatrix fit_ridge_stl(const MultitaskDataset& data, double ridge_lambda);

}  // namespace fetr
