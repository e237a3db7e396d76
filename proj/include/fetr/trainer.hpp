#pragma once

#include <vector>

#include "fetr/types.hpp"

namespace fetr {

struct FetrModel {
  WeightMatrix weights;
  CovariancePair covariances;
  FetrConfig config;
  TrainReport report;
};

/// sum_i ||y_i - X_i w_i||^2 + eta tr(Sigma1 W Sigma2 W^T) - eta (m log|Sigma1| + d log|Sigma2|).
/// Throws DomainError if either covariance is not positive definite.
double fetr_objective(const Matrix& w, const Matrix& sigma1, const Matrix& sigma2,
                      const MultitaskDataset& data, double eta);

/// The same expression with no spectrum bounds attached. Used to show that
/// the unconstrained problem is unbounded below.
double mtfrl_objective_unconstrained(const Matrix& w, const Matrix& sigma1, const Matrix& sigma2,
                                     const MultitaskDataset& data, double eta);

/// Block coordinate minimization W -> Sigma1 -> Sigma2 until the relative
/// objective change drops below config.rel_obj_tol. The trace holds the
/// initial objective plus one point per block.
///
/// Throws ConsistencyError if a block increases the objective beyond
/// round-off slack.
FetrModel fit_fetr(const MultitaskDataset& data, const FetrConfig& config);

/// Relative slack allowed when checking that the trace is nonincreasing.
inline constexpr double kMonotoneSlack = 1e-10;

/// X_new W (n x m).
Matrix predict(const Matrix& w, const Matrix& x_new);

/// X_new w_task for a single task.
Vector predict_task(const Matrix& w, Index task, const Matrix& x_new);

enum class MetricKind { MSE, NMSE };

struct MetricResult {
  std::vector<double> per_task;
  double aggregate = 0.0;  // mean over tasks
};

/// Per-task MSE, or MSE divided by the population variance of y_true.
/// Throws MetricError for NMSE on a task whose targets have zero variance.
MetricResult metrics(const std::vector<Vector>& y_true, const std::vector<Vector>& y_pred,
                     MetricKind kind);

/// Predictions for every task of `data` (test split) using W.
std::vector<Vector> predict_dataset(const Matrix& w, const MultitaskDataset& data);
std::vector<Vector> dataset_targets(const MultitaskDataset& data);

}  // namespace fetr
