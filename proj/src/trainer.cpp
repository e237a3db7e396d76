#include "fetr/trainer.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "fetr/cov_solver.hpp"
#include "fetr/errors.hpp"
#include "fetr/linalg.hpp"
#include "fetr/w_solvers.hpp"

namespace fetr {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double regularized_objective(const Matrix& w, const Matrix& sigma1, const Matrix& sigma2,
                             const MultitaskDataset& data, double eta) {
  const double d = static_cast<double>(data.dim());
  const double m = static_cast<double>(data.num_tasks());
  const double logdet1 = linalg::log_det_spd(sigma1);
  const double logdet2 = linalg::log_det_spd(sigma2);
  return w_subobjective(w, data, sigma1, sigma2, eta) - eta * (m * logdet1 + d * logdet2);
}

}  // namespace

double fetr_objective(const Matrix& w, const Matrix& sigma1, const Matrix& sigma2,
                      const MultitaskDataset& data, double eta) {
  return regularized_objective(w, sigma1, sigma2, data, eta);
}

double mtfrl_objective_unconstrained(const Matrix& w, const Matrix& sigma1, const Matrix& sigma2,
                                     const MultitaskDataset& data, double eta) {
  return regularized_objective(w, sigma1, sigma2, data, eta);
}

FetrModel fit_fetr(const MultitaskDataset& data, const FetrConfig& config) {
  config.validate();
  const Clock::time_point start = Clock::now();
  const QuadraticCache cache = make_quadratic_cache(data);
  const Index d = data.dim();
  const Index m = data.num_tasks();

  const CovariancePair init = CovariancePair::scaled_identity(d, m, config.lower, config.upper);
  Matrix sigma1 = init.sigma1();
  Matrix sigma2 = init.sigma2();
  Matrix w = Matrix::Zero(d, m);

  const WSolveOptions w_options{config.w_solver, config.closed_form_guard, config.gd_max_iters,
                                config.gd_rel_tol};

  TrainReport report;
  auto evaluate = [&] {
    ++report.objective_evaluations;
    return fetr_objective(w, sigma1, sigma2, data, config.eta);
  };
  double current = evaluate();
  report.objective_trace.push_back({0, Block::Init, seconds_since(start), current,
                                    report.objective_evaluations});

  auto record = [&](int iteration, Block block) {
    const double value = evaluate();
    if (!std::isfinite(value)) throw NumericError("objective became non-finite");
    if (value > current + kMonotoneSlack * (1.0 + std::abs(current))) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "objective increased in " << to_string(block) << " block of iteration " << iteration
          << ": " << current << " -> " << value;
      throw ConsistencyError(msg.str());
    }
    current = value;
    report.objective_trace.push_back(
        {iteration, block, seconds_since(start), value, report.objective_evaluations});
  };

  report.stop_reason = "max_iters";
  for (int iter = 1; iter <= config.max_outer_iters; ++iter) {
    const double previous = current;

    Clock::time_point t = Clock::now();
    w = solve_w(cache, sigma1, sigma2, config.eta, config.lower, config.upper, w, w_options);
    report.per_block_seconds.w += seconds_since(t);
    record(iter, Block::W);

    t = Clock::now();
    sigma1 = minimize_sigma1(w, sigma2, config.lower, config.upper);
    report.per_block_seconds.sigma1 += seconds_since(t);
    record(iter, Block::Sigma1);

    t = Clock::now();
    sigma2 = minimize_sigma2(w, sigma1, config.lower, config.upper);
    report.per_block_seconds.sigma2 += seconds_since(t);
    record(iter, Block::Sigma2);

    report.iterations = iter;
    if (std::abs(current - previous) <= config.rel_obj_tol * (1.0 + std::abs(previous))) {
      report.converged = true;
      report.stop_reason = "converged";
      break;
    }
    if (seconds_since(start) > config.time_budget_seconds) {
      report.stop_reason = "budget";
      break;
    }
  }

  return FetrModel{WeightMatrix(std::move(w)),
                   CovariancePair(std::move(sigma1), std::move(sigma2), config.lower, config.upper),
                   config, std::move(report)};
}

Matrix predict(const Matrix& w, const Matrix& x_new) {
  if (x_new.cols() != w.rows()) {
    throw DimensionError("predict: inputs have " + std::to_string(x_new.cols()) +
                         " features, model expects " + std::to_string(w.rows()));
  }
  return x_new * w;
}

Vector predict_task(const Matrix& w, Index task, const Matrix& x_new) {
  if (task < 0 || task >= w.cols()) throw DimensionError("predict: task index out of range");
  if (x_new.cols() != w.rows()) {
    throw DimensionError("predict: inputs have " + std::to_string(x_new.cols()) +
                         " features, model expects " + std::to_string(w.rows()));
  }
  return x_new * w.col(task);
}

std::vector<Vector> predict_dataset(const Matrix& w, const MultitaskDataset& data) {
  if (w.cols() != data.num_tasks()) throw DimensionError("predict: task count mismatch");
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(data.num_tasks()));
  for (Index i = 0; i < data.num_tasks(); ++i) out.push_back(predict_task(w, i, data.features(i)));
  return out;
}

std::vector<Vector> dataset_targets(const MultitaskDataset& data) {
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(data.num_tasks()));
  for (Index i = 0; i < data.num_tasks(); ++i) out.push_back(data.targets(i));
  return out;
}

MetricResult metrics(const std::vector<Vector>& y_true, const std::vector<Vector>& y_pred,
                     MetricKind kind) {
  if (y_true.size() != y_pred.size()) throw DimensionError("metrics: task count mismatch");
  if (y_true.empty()) throw EmptyDataError("metrics: no tasks");
  MetricResult out;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const Vector& truth = y_true[i];
    if (truth.size() != y_pred[i].size()) {
      throw DimensionError("metrics: task " + std::to_string(i) + " length mismatch");
    }
    if (truth.size() == 0) throw EmptyDataError("metrics: task " + std::to_string(i) + " is empty");
    double value = (truth - y_pred[i]).squaredNorm() / static_cast<double>(truth.size());
    if (kind == MetricKind::NMSE) {
      const double variance = (truth.array() - truth.mean()).square().mean();
      if (!(variance > 0.0)) {
        throw MetricError("NMSE undefined: task " + std::to_string(i) +
                          " targets have zero variance");
      }
      value /= variance;
    }
    out.per_task.push_back(value);
  }
  double total = 0.0;
  for (double v : out.per_task) total += v;
  out.aggregate = total / static_cast<double>(out.per_task.size());
  return out;
}

}  // namespace fetr
