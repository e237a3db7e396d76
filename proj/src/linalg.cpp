#include "fetr/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fetr/errors.hpp"

namespace fetr::linalg {

Matrix symmetrize(const Matrix& s) { return 0.5 * (s + s.transpose()); }

EigenDecomp sym_eig(const Matrix& s) {
  if (s.rows() != s.cols()) throw DimensionError("sym_eig expects a square matrix");
  if (!s.allFinite()) throw NumericError("sym_eig: input has non-finite entries");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(s));
  if (solver.info() != Eigen::Success) throw NumericError("sym_eig: eigensolver did not converge");
  // Eigen already returns ascending eigenvalues.
  return {solver.eigenvectors(), solver.eigenvalues()};
}

Matrix reconstruct(const EigenDecomp& eig) {
  return eig.vectors * eig.values.asDiagonal() * eig.vectors.transpose();
}

Matrix spectral_map(const EigenDecomp& eig, const std::function<double(double)>& f) {
  Vector mapped = eig.values.unaryExpr(f);
  return eig.vectors * mapped.asDiagonal() * eig.vectors.transpose();
}

double hard_threshold(double x, double lower, double upper) {
  if (x < lower) return lower;
  if (x > upper) return upper;
  return x;
}

Matrix project_bounded_spd(const Matrix& s, double lower, double upper) {
  const EigenDecomp eig = sym_eig(s);
  return symmetrize(spectral_map(eig, [lower, upper](double v) {
    double t = hard_threshold(v, lower, upper);
    if (std::abs(t - lower) <= kClampSnap) t = lower;
    if (std::abs(t - upper) <= kClampSnap) t = upper;
    return t;
  }));
}

Matrix sylvester_solve_spd(const Matrix& a, const Matrix& b, const Matrix& c) {
  if (a.rows() != a.cols() || b.rows() != b.cols()) {
    throw DimensionError("sylvester_solve_spd: coefficient matrices must be square");
  }
  if (c.rows() != a.rows() || c.cols() != b.rows()) {
    throw DimensionError("sylvester_solve_spd: right-hand side has the wrong shape");
  }
  const EigenDecomp ea = sym_eig(a);
  const EigenDecomp eb = sym_eig(b);
  // In the joint eigenbasis the operator acts elementwise by alpha_i + beta_j.
  Matrix rotated = ea.vectors.transpose() * c * eb.vectors;
  const double scale = std::max({1.0, ea.values.cwiseAbs().maxCoeff(), eb.values.cwiseAbs().maxCoeff()});
  for (Index j = 0; j < rotated.cols(); ++j) {
    for (Index i = 0; i < rotated.rows(); ++i) {
      const double denom = ea.values(i) + eb.values(j);
      if (std::abs(denom) <= std::numeric_limits<double>::epsilon() * scale) {
        throw SolverError("sylvester_solve_spd: spectra of A and -B overlap");
      }
      rotated(i, j) /= denom;
    }
  }
  return ea.vectors * rotated * eb.vectors.transpose();
}

Matrix spd_sqrt(const Matrix& s) {
  const EigenDecomp eig = sym_eig(s);
  if (eig.values.size() > 0 && eig.values.minCoeff() <= 0.0) {
    throw DomainError("spd_sqrt: matrix is not positive definite");
  }
  return symmetrize(spectral_map(eig, [](double v) { return std::sqrt(v); }));
}

Matrix spd_inv_sqrt(const Matrix& s) {
  const EigenDecomp eig = sym_eig(s);
  if (eig.values.size() > 0 && eig.values.minCoeff() <= 0.0) {
    throw DomainError("spd_inv_sqrt: matrix is not positive definite");
  }
  return symmetrize(spectral_map(eig, [](double v) { return 1.0 / std::sqrt(v); }));
}

double log_det_spd(const Matrix& s) {
  const EigenDecomp eig = sym_eig(s);
  if (eig.values.size() > 0 && eig.values.minCoeff() <= 0.0) {
    throw DomainError("log-determinant of a matrix that is not positive definite");
  }
  return eig.values.array().log().sum();
}

Matrix spd_inverse(const Matrix& s) {
  const EigenDecomp eig = sym_eig(s);
  if (eig.values.size() == 0) return s;
  const double hi = std::max(eig.values.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  if (eig.values.minCoeff() <= 1e-14 * hi) {
    throw SolverError("matrix is singular or not positive definite (smallest eigenvalue " +
                      std::to_string(eig.values.minCoeff()) + ")");
  }
  return symmetrize(spectral_map(eig, [](double v) { return 1.0 / v; }));
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

Vector vec(const Matrix& a) { return Eigen::Map<const Vector>(a.data(), a.size()); }

Matrix unvec(const Vector& v, Index rows, Index cols) {
  if (v.size() != rows * cols) throw DimensionError("unvec: size mismatch");
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

}  // namespace fetr::linalg
