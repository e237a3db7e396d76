#include "fetr/w_solvers.hpp"

#include <algorithm>
#include <cmath>

#include "fetr/errors.hpp"
#include "fetr/linalg.hpp"

namespace fetr {

namespace {

void check_shapes(const Matrix& w, Index d, Index m, const Matrix& sigma1, const Matrix& sigma2) {
  if (w.rows() != d || w.cols() != m) {
    throw DimensionError("W is " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                         ", expected " + std::to_string(d) + "x" + std::to_string(m));
  }
  if (sigma1.rows() != d || sigma1.cols() != d) throw DimensionError("sigma1 must be d x d");
  if (sigma2.rows() != m || sigma2.cols() != m) throw DimensionError("sigma2 must be m x m");
}

// X^T X W for either storage layout.
Matrix gram_times(const QuadraticCache& cache, const Matrix& w) {
  if (cache.shared) return cache.grams.front() * w;
  Matrix out(w.rows(), w.cols());
  for (Index i = 0; i < w.cols(); ++i) out.col(i) = cache.gram(i) * w.col(i);
  return out;
}

}  // namespace

QuadraticCache make_quadratic_cache(const MultitaskDataset& data) {
  QuadraticCache cache;
  cache.shared = data.shared_instances();
  cache.dim = data.dim();
  cache.num_tasks = data.num_tasks();
  if (cache.shared) {
    const Matrix& x = data.shared_features();
    Matrix gram = Matrix::Zero(cache.dim, cache.dim);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
    gram = gram.selfadjointView<Eigen::Lower>();
    cache.grams.push_back(std::move(gram));
    cache.xty = x.transpose() * data.shared_targets();
  } else {
    cache.xty.resize(cache.dim, cache.num_tasks);
    for (Index i = 0; i < cache.num_tasks; ++i) {
      const Matrix& x = data.features(i);
      Matrix gram = Matrix::Zero(cache.dim, cache.dim);
      gram.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
      gram = gram.selfadjointView<Eigen::Lower>();
      cache.grams.push_back(std::move(gram));
      cache.xty.col(i) = x.transpose() * data.targets(i);
    }
  }
  cache.xty_norm = cache.xty.norm();
  cache.gram_eigs.resize(static_cast<Index>(cache.grams.size()) * cache.dim);
  for (std::size_t k = 0; k < cache.grams.size(); ++k) {
    cache.gram_eigs.segment(static_cast<Index>(k) * cache.dim, cache.dim) =
        linalg::sym_eig(cache.grams[k]).values;
  }
  return cache;
}

StepSchedule step_schedule(const Vector& xtx_eigs, double eta, double lower, double upper) {
  if (xtx_eigs.size() == 0) throw InvalidArgument("step_schedule needs at least one eigenvalue");
  if (!(eta > 0.0)) throw InvalidArgument("step_schedule: eta must be positive");
  if (!(lower > 0.0) || !(upper > lower)) {
    throw InvalidArgument("step_schedule: bounds must satisfy 0 < l < u");
  }
  // Round-off can push a zero Gram eigenvalue slightly negative.
  const double smallest = std::max(0.0, xtx_eigs.minCoeff());
  const double largest = std::max(0.0, xtx_eigs.maxCoeff());
  StepSchedule s;
  s.lambda_l = smallest + eta * lower * lower;
  s.lambda_u = largest + eta * upper * upper;
  s.step = 2.0 / (s.lambda_u + s.lambda_l);
  s.kappa = s.lambda_u / s.lambda_l;
  const double ratio = (s.lambda_u - s.lambda_l) / (s.lambda_u + s.lambda_l);
  s.gamma = ratio * ratio;
  return s;
}

double w_subobjective(const Matrix& w, const MultitaskDataset& data, const Matrix& sigma1,
                      const Matrix& sigma2, double eta) {
  check_shapes(w, data.dim(), data.num_tasks(), sigma1, sigma2);
  double loss = 0.0;
  if (data.shared_instances()) {
    loss = (data.shared_targets() - data.shared_features() * w).squaredNorm();
  } else {
    for (Index i = 0; i < data.num_tasks(); ++i) {
      loss += (data.targets(i) - data.features(i) * w.col(i)).squaredNorm();
    }
  }
  return loss + eta * (sigma1 * w * sigma2).cwiseProduct(w).sum();
}

Matrix grad_h(const Matrix& w, const QuadraticCache& cache, const Matrix& sigma1,
              const Matrix& sigma2, double eta) {
  check_shapes(w, cache.dim, cache.num_tasks, sigma1, sigma2);
  return 2.0 * (gram_times(cache, w) - cache.xty) + (2.0 * eta) * (sigma1 * w * sigma2);
}

Matrix grad_h(const Matrix& w, const MultitaskDataset& data, const Matrix& sigma1,
              const Matrix& sigma2, double eta) {
  return grad_h(w, make_quadratic_cache(data), sigma1, sigma2, eta);
}

WeightMatrix solve_w_closed(const QuadraticCache& cache, const Matrix& sigma1, const Matrix& sigma2,
                            double eta, Index guard) {
  if (!cache.shared) {
    throw UnsupportedShapeError("closed-form W solver requires tasks to share instances");
  }
  const Index d = cache.dim;
  const Index m = cache.num_tasks;
  check_shapes(Matrix::Zero(d, m), d, m, sigma1, sigma2);
  if (d * m > guard) {
    throw CapacityError("closed-form W solver: md = " + std::to_string(d * m) +
                        " exceeds guard " + std::to_string(guard));
  }
  Matrix system = eta * linalg::kron(sigma2, sigma1);
  for (Index j = 0; j < m; ++j) system.block(j * d, j * d, d, d) += cache.grams.front();
  Eigen::LLT<Matrix> llt(system);
  Vector solution;
  if (llt.info() == Eigen::Success) {
    solution = llt.solve(linalg::vec(cache.xty));
  } else {
    Eigen::LDLT<Matrix> ldlt(system);
    if (ldlt.info() != Eigen::Success) throw SolverError("closed-form W system is singular");
    solution = ldlt.solve(linalg::vec(cache.xty));
  }
  return WeightMatrix(linalg::unvec(solution, d, m));
}

WeightMatrix solve_w_closed(const MultitaskDataset& data, const Matrix& sigma1,
                            const Matrix& sigma2, double eta, Index guard) {
  if (!data.shared_instances()) {
    throw UnsupportedShapeError("closed-form W solver requires tasks to share instances");
  }
  return solve_w_closed(make_quadratic_cache(data), sigma1, sigma2, eta, guard);
}

GdResult solve_w_gd(const QuadraticCache& cache, const Matrix& sigma1, const Matrix& sigma2,
                    double eta, const StepSchedule& schedule, const Matrix& w0, int max_iters,
                    double rel_tol, const GdObserver& observer) {
  check_shapes(w0, cache.dim, cache.num_tasks, sigma1, sigma2);
  if (!(schedule.step > 0.0) || !std::isfinite(schedule.step)) {
    throw InvalidArgument("gradient descent step must be positive and finite");
  }
  if (!w0.allFinite()) throw NumericError("initial W has non-finite entries");

  const double threshold = rel_tol * (1.0 + cache.xty_norm);
  // The schedule bounds the Hessian of h/2, so the step applies to grad(h)/2.
  const double step = 0.5 * schedule.step;
  Matrix w = w0;
  if (observer) observer(0, w);
  int iter = 0;
  for (; iter < max_iters; ++iter) {
    const Matrix g = grad_h(w, cache, sigma1, sigma2, eta);
    const double gnorm = g.norm();
    if (!std::isfinite(gnorm)) {
      throw DivergenceError("gradient descent diverged after " + std::to_string(iter) +
                            " iterations");
    }
    if (gnorm <= threshold) break;
    w -= step * g;
    if (observer) observer(iter + 1, w);
  }
  if (!w.allFinite()) throw DivergenceError("gradient descent produced non-finite weights");
  return {WeightMatrix(std::move(w)), iter};
}

GdResult solve_w_gd(const MultitaskDataset& data, const Matrix& sigma1, const Matrix& sigma2,
                    double eta, const StepSchedule& schedule, const Matrix& w0, int max_iters,
                    double rel_tol) {
  return solve_w_gd(make_quadratic_cache(data), sigma1, sigma2, eta, schedule, w0, max_iters,
                    rel_tol);
}

WeightMatrix solve_w_sylvester(const QuadraticCache& cache, const Matrix& sigma1,
                               const Matrix& sigma2, double eta) {
  if (!cache.shared) {
    throw UnsupportedShapeError("Sylvester W solver requires tasks to share instances");
  }
  check_shapes(Matrix::Zero(cache.dim, cache.num_tasks), cache.dim, cache.num_tasks, sigma1,
               sigma2);
  const EigenDecomp eig1 = linalg::sym_eig(sigma1);
  if (eig1.values.minCoeff() <= 0.0) throw DomainError("sigma1 is not positive definite");
  const Matrix inv_sqrt =
      linalg::symmetrize(linalg::spectral_map(eig1, [](double v) { return 1.0 / std::sqrt(v); }));
  const Matrix a = linalg::symmetrize(inv_sqrt * cache.grams.front() * inv_sqrt);
  const Matrix b = eta * linalg::symmetrize(sigma2);
  const Matrix c = inv_sqrt * cache.xty;
  const Matrix w_prime = linalg::sylvester_solve_spd(a, b, c);
  return WeightMatrix(inv_sqrt * w_prime);
}

WeightMatrix solve_w_sylvester(const MultitaskDataset& data, const Matrix& sigma1,
                               const Matrix& sigma2, double eta) {
  if (!data.shared_instances()) {
    throw UnsupportedShapeError("Sylvester W solver requires tasks to share instances");
  }
  return solve_w_sylvester(make_quadratic_cache(data), sigma1, sigma2, eta);
}

WSolverKind resolve_w_solver(WSolverKind requested, bool shared, Index d, Index m, Index guard) {
  if (requested != WSolverKind::Auto) return requested;
  if (!shared) return WSolverKind::GradientDescent;
  if (d * m <= std::min(kAutoClosedFormLimit, guard)) return WSolverKind::ClosedForm;
  return WSolverKind::Sylvester;
}

Matrix solve_w(const QuadraticCache& cache, const Matrix& sigma1, const Matrix& sigma2,
               double eta, double lower, double upper, const Matrix& warm_start,
               const WSolveOptions& options) {
  const WSolverKind kind = resolve_w_solver(options.kind, cache.shared, cache.dim,
                                            cache.num_tasks, options.closed_form_guard);
  switch (kind) {
    case WSolverKind::ClosedForm:
      return solve_w_closed(cache, sigma1, sigma2, eta, options.closed_form_guard).matrix();
    case WSolverKind::Sylvester:
      return solve_w_sylvester(cache, sigma1, sigma2, eta).matrix();
    case WSolverKind::GradientDescent:
    case WSolverKind::Auto: {
      const StepSchedule schedule = step_schedule(cache.gram_eigs, eta, lower, upper);
      return solve_w_gd(cache, sigma1, sigma2, eta, schedule, warm_start, options.gd_max_iters,
                        options.gd_rel_tol)
          .weights.matrix();
    }
  }
  throw InvalidArgument("unknown W solver");
}

}  // namespace fetr
