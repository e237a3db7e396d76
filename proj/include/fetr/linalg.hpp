#pragma once

#include <functional>

#include "fetr/types.hpp"

namespace fetr::linalg {

/// Eigenvalues within this distance of a clamp bound are snapped onto it.
inline constexpr double kClampSnap = 1e-12;

/// (S + S^T) / 2
Matrix symmetrize(const Matrix& s);

/// Symmetric eigendecomposition of (S + S^T)/2, eigenvalues ascending.
/// Throws NumericError on non-finite input.
EigenDecomp sym_eig(const Matrix& s);

/// V f(diag) V^T for a decomposition.
Matrix reconstruct(const EigenDecomp& eig);
Matrix spectral_map(const EigenDecomp& eig, const std::function<double(double)>& f);

/// max(l, min(u, x)); +inf maps to u.
double hard_threshold(double x, double lower, double upper);

/// Frobenius-nearest matrix to S with spectrum in [l, u].
Matrix project_bounded_spd(const Matrix& s, double lower, double upper);

/// Solves A W + W B = C for symmetric A (PSD) and B (PD) by diagonalizing both
/// sides. Throws SolverError when some alpha_i + beta_j vanishes.
Matrix sylvester_solve_spd(const Matrix& a, const Matrix& b, const Matrix& c);

/// S^{1/2} and S^{-1/2} of a symmetric positive definite matrix.
Matrix spd_sqrt(const Matrix& s);
Matrix spd_inv_sqrt(const Matrix& s);

/// log|S| as a sum of log-eigenvalues; throws DomainError unless S is PD.
double log_det_spd(const Matrix& s);

/// Inverse of a symmetric positive definite matrix; throws SolverError if
/// the smallest eigenvalue is not positive relative to the largest.
Matrix spd_inverse(const Matrix& s);

Matrix kron(const Matrix& a, const Matrix& b);

/// Column-stacking vec and its inverse.
Vector vec(const Matrix& a);
Matrix unvec(const Vector& v, Index rows, Index cols);

}  // namespace fetr::linalg
