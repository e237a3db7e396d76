#include "fetr/cov_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fetr/errors.hpp"
#include "fetr/linalg.hpp"

namespace fetr {

double cov_subobjective(const Matrix& sigma, const Matrix& s, double c) {
  if (sigma.rows() != s.rows() || sigma.cols() != s.cols()) {
    throw DimensionError("cov_subobjective: shape mismatch");
  }
  return sigma.cwiseProduct(s.transpose()).sum() - c * linalg::log_det_spd(sigma);
}

Matrix minimize_cov(const Matrix& s, double c, double lower, double upper) {
  if (!(lower > 0.0) || !(upper > lower)) {
    throw InvalidArgument("minimize_cov: bounds must satisfy 0 < l < u");
  }
  const EigenDecomp eig = linalg::sym_eig(s);
  const Matrix out = linalg::spectral_map(eig, [c, lower, upper](double nu) {
    const double ratio = nu > 0.0 ? c / nu : std::numeric_limits<double>::infinity();
    return linalg::hard_threshold(ratio, lower, upper);
  });
  return linalg::symmetrize(out);
}

Matrix minimize_sigma1(const Matrix& w, const Matrix& sigma2, double lower, double upper) {
  if (sigma2.rows() != w.cols() || sigma2.cols() != w.cols()) {
    throw DimensionError("minimize_sigma1: sigma2 must be m x m");
  }
  const Matrix s = w * sigma2 * w.transpose();
  return minimize_cov(s, static_cast<double>(w.cols()), lower, upper);
}

Matrix minimize_sigma2(const Matrix& w, const Matrix& sigma1, double lower, double upper) {
  if (sigma1.rows() != w.rows() || sigma1.cols() != w.rows()) {
    throw DimensionError("minimize_sigma2: sigma1 must be d x d");
  }
  const Matrix s = w.transpose() * sigma1 * w;
  return minimize_cov(s, static_cast<double>(w.rows()), lower, upper);
}

double matching_weight(const Vector& lambda, const Vector& nu, const std::vector<int>& permutation) {
  if (lambda.size() != nu.size() || static_cast<Index>(permutation.size()) != lambda.size()) {
    throw DimensionError("matching_weight: length mismatch");
  }
  double w = 0.0;
  for (std::size_t i = 0; i < permutation.size(); ++i) {
    w += lambda(static_cast<Index>(i)) * nu(permutation[i]);
  }
  return w;
}

MatchingInstance brute_force_min_matching(const Vector& lambda, const Vector& nu) {
  if (lambda.size() != nu.size()) throw DimensionError("matching needs equal-length vectors");
  if (lambda.size() > kMaxBruteForceMatching) {
    throw CapacityError("brute-force matching supports k <= " +
                        std::to_string(kMaxBruteForceMatching));
  }
  std::vector<int> perm(static_cast<std::size_t>(lambda.size()));
  std::iota(perm.begin(), perm.end(), 0);
  MatchingInstance best{lambda, nu, perm, matching_weight(lambda, nu, perm)};
  // next_permutation walks in lexicographic order, so strict improvement keeps
  // the smallest permutation among ties.
  while (std::next_permutation(perm.begin(), perm.end())) {
    const double w = matching_weight(lambda, nu, perm);
    if (w < best.weight) {
      best.weight = w;
      best.permutation = perm;
    }
  }
  return best;
}

std::vector<InversePair> inverse_pairs(const std::vector<int>& permutation) {
  std::vector<InversePair> out;
  const int k = static_cast<int>(permutation.size());
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      if (permutation[static_cast<std::size_t>(i)] > permutation[static_cast<std::size_t>(j)]) {
        out.push_back({i, j});
      }
    }
  }
  return out;
}

std::vector<int> rematch_inverse_pair(std::vector<int> permutation, const InversePair& pair) {
  std::swap(permutation.at(static_cast<std::size_t>(pair.first)),
            permutation.at(static_cast<std::size_t>(pair.second)));
  return permutation;
}

Matrix oracle_cov_minimize(const Matrix& s, double c, double lower, double upper,
                           const OracleOptions& options) {
  const Index k = s.rows();
  double step = options.step;
  if (!(step > 0.0)) {
    const double norm = linalg::sym_eig(s).values.cwiseAbs().maxCoeff();
    // S = 0 has no curvature scale; the gradient -c Sigma^{-1} then pushes to u.
    step = norm > 0.0 ? 1e-3 * c / norm : 1e-3 * c * upper * upper;
  }
  Matrix sigma = 0.5 * (lower + upper) * Matrix::Identity(k, k);
  for (int it = 0; it < options.iters; ++it) {
    const Matrix inv = linalg::spd_inverse(sigma);
    sigma = linalg::project_bounded_spd(sigma - step * (s - c * inv), lower, upper);
  }
  return sigma;
}

}  // namespace fetr
