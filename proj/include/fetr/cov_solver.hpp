#pragma once

#include <vector>

#include "fetr/types.hpp"

namespace fetr {

/// tr(Sigma S) - c log|Sigma|. Throws DomainError unless Sigma is positive definite.
double cov_subobjective(const Matrix& sigma, const Matrix& s, double c);

/// Exact minimizer of tr(Sigma S) - c log|Sigma| over l I <= Sigma <= u I.
///
/// Eigendecompose S = V diag(nu) V^T and set Sigma = V diag(T(c / nu_i)) V^T
/// with T the clamp into [l, u]; nu_i = 0 (or round-off negatives) give u.
Matrix minimize_cov(const Matrix& s, double c, double lower, double upper);

/// Feature precision update: S = W Sigma2 W^T, c = m.
Matrix minimize_sigma1(const Matrix& w, const Matrix& sigma2, double lower, double upper);

/// Task precision update: S = W^T Sigma1 W, c = d.
Matrix minimize_sigma2(const Matrix& w, const Matrix& sigma1, double lower, double upper);

/// A perfect matching between lambda_i and nu_{permutation[i]}.
struct MatchingInstance {
  Vector lambda;
  Vector nu;
  std::vector<int> permutation;
  double weight = 0.0;
};

/// sum_i lambda_i nu_{perm[i]}
double matching_weight(const Vector& lambda, const Vector& nu, const std::vector<int>& permutation);

inline constexpr Index kMaxBruteForceMatching = 8;

/// Enumerates all k! matchings; ties go to the lexicographically smallest
/// permutation. Throws CapacityError for k > 8.
MatchingInstance brute_force_min_matching(const Vector& lambda, const Vector& nu);

/// Index pair (i, j), i < j, with perm[i] > perm[j]; with lambda sorted
/// descending and nu ascending this is a crossing in the matching.
struct InversePair {
  int first = -1;
  int second = -1;
};

std::vector<InversePair> inverse_pairs(const std::vector<int>& permutation);

/// Swaps the partners of an inverse pair, uncrossing it.
std::vector<int> rematch_inverse_pair(std::vector<int> permutation, const InversePair& pair);

struct OracleOptions {
  int iters = 20000;
  // Non-positive selects 1e-3 c / ||S||_2.
  double step = 0.0;
};

/// Projected gradient descent on tr(Sigma S) - c log|Sigma| from ((l+u)/2) I.
/// Slow and independent of the closed form; meant for verification only.
Matrix oracle_cov_minimize(const Matrix& s, double c, double lower, double upper,
                           const OracleOptions& options = {});

}  // namespace fetr
