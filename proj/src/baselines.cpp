#include "fetr/baselines.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "fetr/errors.hpp"
#include "fetr/linalg.hpp"
#include "fetr/w_solvers.hpp"

namespace fetr {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool numerically_singular(const Matrix& s) {
  const Vector values = linalg::sym_eig(s).values;
  const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
  return values.minCoeff() <= kSingularThreshold * scale;
}

}  // namespace

std::pair<Matrix, Matrix> flip_flop_step(const Matrix& w, const Matrix& sigma1,
                                         const Matrix& sigma2, double epsilon) {
  if (epsilon < 0.0) throw InvalidArgument("flip-flop fudge factor must be nonnegative");
  const Index d = w.rows();
  const Index m = w.cols();
  if (sigma1.rows() != d || sigma1.cols() != d || sigma2.rows() != m || sigma2.cols() != m) {
    throw DimensionError("flip_flop_step: covariance shapes do not match W");
  }
  const Matrix inv1 = linalg::spd_inverse(sigma1);
  const Matrix inv2 = linalg::spd_inverse(sigma2);
  Matrix next1 = w * inv2 * w.transpose() / static_cast<double>(m);
  Matrix next2 = w.transpose() * inv1 * w / static_cast<double>(d);
  next1.diagonal().array() += epsilon;
  next2.diagonal().array() += epsilon;
  return {linalg::symmetrize(next1), linalg::symmetrize(next2)};
}

FetrModel fit_mtfrl_flipflop(const MultitaskDataset& data, const FlipFlopOptions& options) {
  FetrConfig config;
  config.eta = options.eta;
  config.lower = options.lower;
  config.upper = options.upper;
  config.w_solver = options.w_solver;
  config.max_outer_iters = options.max_iters;
  config.rel_obj_tol = options.tol;
  config.time_budget_seconds = options.time_budget_seconds;
  config.validate();
  if (options.epsilon < 0.0) throw InvalidArgument("flip-flop fudge factor must be nonnegative");

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
  auto record = [&](int iteration, Block block) {
    ++report.objective_evaluations;
    const double value = fetr_objective(w, sigma1, sigma2, data, config.eta);
    if (!std::isfinite(value)) throw NumericError("flip-flop objective became non-finite");
    report.objective_trace.push_back(
        {iteration, block, seconds_since(start), value, report.objective_evaluations});
    return value;
  };
  double current = record(0, Block::Init);

  report.stop_reason = "max_iters";
  for (int iter = 1; iter <= config.max_outer_iters; ++iter) {
    const double previous = current;
    Clock::time_point t = Clock::now();
    w = solve_w(cache, sigma1, sigma2, config.eta, config.lower, config.upper, w, w_options);
    report.per_block_seconds.w += seconds_since(t);
    record(iter, Block::W);

    t = Clock::now();
    auto [raw1, raw2] = flip_flop_step(w, sigma1, sigma2, options.epsilon);
    report.per_block_seconds.sigma1 += seconds_since(t);
    report.iterations = iter;
    if (numerically_singular(raw1) || numerically_singular(raw2)) {
      report.stop_reason = "singular";
      current = report.objective_trace.back().objective;
      break;
    }
    t = Clock::now();
    sigma1 = linalg::project_bounded_spd(raw1, config.lower, config.upper);
    sigma2 = linalg::project_bounded_spd(raw2, config.lower, config.upper);
    report.per_block_seconds.sigma2 += seconds_since(t);
    current = record(iter, Block::Joint);

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

ObjectiveGradients objective_gradients(const Matrix& w, const Matrix& sigma1,
                                       const Matrix& sigma2, const MultitaskDataset& data,
                                       double eta) {
  const double d = static_cast<double>(data.dim());
  const double m = static_cast<double>(data.num_tasks());
  ObjectiveGradients g;
  g.w = grad_h(w, data, sigma1, sigma2, eta);
  g.sigma1 = eta * (w * sigma2 * w.transpose() - m * linalg::spd_inverse(sigma1));
  g.sigma2 = eta * (w.transpose() * sigma1 * w - d * linalg::spd_inverse(sigma2));
  return g;
}

namespace {

ProjectedStep projected_step_impl(const Matrix& w, const Matrix& sigma1, const Matrix& sigma2,
                                  double current, const QuadraticCache& cache,
                                  const MultitaskDataset& data, const FetrConfig& config,
                                  const StepRule& rule) {
  const double d = static_cast<double>(data.dim());
  const double m = static_cast<double>(data.num_tasks());
  const Matrix gw = grad_h(w, cache, sigma1, sigma2, config.eta);
  const Matrix g1 = config.eta * (w * sigma2 * w.transpose() - m * linalg::spd_inverse(sigma1));
  const Matrix g2 = config.eta * (w.transpose() * sigma1 * w - d * linalg::spd_inverse(sigma2));

  ProjectedStep out{w, sigma1, sigma2, current, false, 0};
  double step = rule.initial;
  for (int halving = 0; halving <= rule.max_halvings; ++halving, step *= 0.5) {
    Matrix w_next = w - step * gw;
    Matrix s1_next = linalg::project_bounded_spd(sigma1 - step * g1, config.lower, config.upper);
    Matrix s2_next = linalg::project_bounded_spd(sigma2 - step * g2, config.lower, config.upper);
    const double value = fetr_objective(w_next, s1_next, s2_next, data, config.eta);
    ++out.evaluations;
    if (!std::isfinite(value)) continue;
    if (value < current) {
      out.w = std::move(w_next);
      out.sigma1 = std::move(s1_next);
      out.sigma2 = std::move(s2_next);
      out.objective = value;
      out.decreased = true;
      break;
    }
  }
  return out;
}

}  // namespace

ProjectedStep projected_gd_step(const Matrix& w, const Matrix& sigma1, const Matrix& sigma2,
                                const MultitaskDataset& data, const FetrConfig& config,
                                const StepRule& step_rule) {
  const double current = fetr_objective(w, sigma1, sigma2, data, config.eta);
  ProjectedStep out = projected_step_impl(w, sigma1, sigma2, current, make_quadratic_cache(data),
                                          data, config, step_rule);
  ++out.evaluations;
  return out;
}

FetrModel fit_projected_gd(const MultitaskDataset& data, const FetrConfig& config,
                           const StepRule& step_rule) {
  config.validate();
  if (!(step_rule.initial > 0.0) || step_rule.max_halvings < 0) {
    throw InvalidArgument("invalid projected-gradient step rule");
  }
  const Clock::time_point start = Clock::now();
  const QuadraticCache cache = make_quadratic_cache(data);
  const Index d = data.dim();
  const Index m = data.num_tasks();
  const CovariancePair init = CovariancePair::scaled_identity(d, m, config.lower, config.upper);
  Matrix sigma1 = init.sigma1();
  Matrix sigma2 = init.sigma2();
  Matrix w = Matrix::Zero(d, m);

  TrainReport report;
  double current = fetr_objective(w, sigma1, sigma2, data, config.eta);
  report.objective_evaluations = 1;
  report.objective_trace.push_back({0, Block::Init, seconds_since(start), current, 1});

  report.stop_reason = "max_iters";
  for (int iter = 1; iter <= config.max_outer_iters; ++iter) {
    const Clock::time_point t = Clock::now();
    ProjectedStep next =
        projected_step_impl(w, sigma1, sigma2, current, cache, data, config, step_rule);
    report.per_block_seconds.w += seconds_since(t);
    report.objective_evaluations += next.evaluations;
    report.iterations = iter;
    if (!next.decreased) {
      report.stop_reason = "stalled";
      break;
    }
    const double previous = current;
    w = std::move(next.w);
    sigma1 = std::move(next.sigma1);
    sigma2 = std::move(next.sigma2);
    current = next.objective;
    if (!std::isfinite(current)) throw DivergenceError("projected gradient objective diverged");
    report.objective_trace.push_back(
        {iter, Block::Joint, seconds_since(start), current, report.objective_evaluations});

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

WeightMatrix fit_ridge_stl(const MultitaskDataset& data, double ridge_lambda) {
  if (ridge_lambda < 0.0) throw InvalidArgument("ridge lambda must be nonnegative");
  const Index d = data.dim();
  Matrix w(d, data.num_tasks());
  for (Index i = 0; i < data.num_tasks(); ++i) {
    const Matrix& x = data.features(i);
    Matrix system = x.transpose() * x;
    system.diagonal().array() += ridge_lambda;
    Eigen::LLT<Matrix> llt(system);
    if (llt.info() != Eigen::Success) {
      throw SolverError("ridge system for task " + std::to_string(i) + " is singular");
    }
    // LLT succeeds on numerically singular matrices too, so check the pivots.
    const Vector diag = Matrix(llt.matrixL()).diagonal();
    if (diag.minCoeff() <= 1e-10 * std::max(1.0, diag.maxCoeff())) {
      throw SolverError("ridge system for task " + std::to_string(i) + " is singular");
    }
    w.col(i) = llt.solve(x.transpose() * data.targets(i));
  }
  return WeightMatrix(std::move(w));
}

}  // namespace fetr
