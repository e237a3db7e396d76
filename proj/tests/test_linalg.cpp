#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "fetr/errors.hpp"
#include "fetr/linalg.hpp"
#include "oracles.hpp"

using namespace fetr;
using namespace fetr::linalg;

TEST_CASE("sym_eig on a diagonal matrix") {
  const Matrix s = Vector((Vector(2) << 3.0, 1.0).finished()).asDiagonal();
  const EigenDecomp e = sym_eig(s);
  CHECK(e.values(0) == doctest::Approx(1.0));
  CHECK(e.values(1) == doctest::Approx(3.0));
  // Column-permuted identity up to sign.
  CHECK(std::abs(e.vectors(1, 0)) == doctest::Approx(1.0));
  CHECK(std::abs(e.vectors(0, 1)) == doctest::Approx(1.0));
}

TEST_CASE("sym_eig on the identity") {
  const EigenDecomp e = sym_eig(Matrix::Identity(4, 4));
  for (Index i = 0; i < 4; ++i) CHECK(e.values(i) == doctest::Approx(1.0));
}

TEST_CASE("sym_eig reconstructs random symmetric matrices") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix g = oracle::gaussian(rng, 5, 5);
    const Matrix s = g + g.transpose();
    const EigenDecomp e = sym_eig(s);
    CHECK((e.vectors.transpose() * e.vectors - Matrix::Identity(5, 5)).norm() <= 1e-9);
    CHECK((reconstruct(e) - s).norm() <= 1e-9 * s.norm());
    for (Index i = 1; i < 5; ++i) CHECK(e.values(i - 1) <= e.values(i));
  }
}

TEST_CASE("sym_eig rejects non-finite input") {
  Matrix s = Matrix::Identity(2, 2);
  s(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(sym_eig(s), NumericError);
}

TEST_CASE("hard_threshold") {
  CHECK(hard_threshold(50.0, 0.01, 100.0) == 50.0);
  CHECK(hard_threshold(0.001, 0.01, 100.0) == 0.01);
  CHECK(hard_threshold(std::numeric_limits<double>::infinity(), 0.01, 100.0) == 100.0);
}

TEST_CASE("project_bounded_spd") {
  const Matrix a = Vector((Vector(2) << 0.5, 2.0).finished()).asDiagonal();
  const Matrix pa = project_bounded_spd(a, 1.0, 3.0);
  CHECK((pa - Matrix(Vector((Vector(2) << 1.0, 2.0).finished()).asDiagonal())).norm() <= 1e-12);

  const Matrix b = Vector((Vector(2) << -1.0, 10.0).finished()).asDiagonal();
  const Matrix pb = project_bounded_spd(b, 1.0, 3.0);
  CHECK((pb - Matrix(Vector((Vector(2) << 1.0, 3.0).finished()).asDiagonal())).norm() <= 1e-12);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix s = oracle::bounded_spd(rng, 4, 0.1, 10.0);
    CHECK((project_bounded_spd(s, 0.1, 10.0) - s).norm() <= 1e-9 * s.norm());
  }
}

TEST_CASE("project_bounded_spd is nearest among random feasible points") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix g = oracle::gaussian(rng, 3, 3, 3.0);
    const Matrix s = g + g.transpose();
    const Matrix p = project_bounded_spd(s, 0.5, 2.0);
    const double best = (p - s).norm();
    for (int k = 0; k < 200; ++k) {
      CHECK(best <= (oracle::bounded_spd(rng, 3, 0.5, 2.0) - s).norm() + 1e-12);
    }
  }
}

TEST_CASE("sylvester_solve_spd hand examples") {
  const Matrix w = sylvester_solve_spd(Matrix::Identity(2, 2), Matrix::Identity(2, 2),
                                       2.0 * Matrix::Identity(2, 2));
  CHECK((w - Matrix::Identity(2, 2)).norm() <= 1e-12);

  const Matrix a = Vector((Vector(2) << 1.0, 2.0).finished()).asDiagonal();
  const Matrix b = Matrix::Constant(1, 1, 3.0);
  const Matrix c = (Matrix(2, 1) << 4.0, 5.0).finished();
  const Matrix w2 = sylvester_solve_spd(a, b, c);
  CHECK(w2(0, 0) == doctest::Approx(1.0));
  CHECK(w2(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("sylvester_solve_spd recovers a planted solution and matches the Kronecker solve") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    std::uniform_int_distribution<int> dim(1, 8);
    const Index d = dim(rng);
    const Index m = dim(rng);
    const Matrix ga = oracle::gaussian(rng, d, d + 2);
    const Matrix a = ga * ga.transpose();  // PSD
    const Matrix b = oracle::bounded_spd(rng, m, 0.1, 10.0);
    const Matrix planted = oracle::gaussian(rng, d, m);
    const Matrix c = a * planted + planted * b;
    const Matrix w = sylvester_solve_spd(a, b, c);
    CHECK((w - planted).norm() <= 1e-8 * (1.0 + planted.norm()));
    CHECK((a * w + w * b - c).norm() <= 1e-8 * (1.0 + c.norm()));
    CHECK((w - oracle::sylvester_kron(a, b, c)).norm() <= 1e-8 * (1.0 + w.norm()));
  }
}

TEST_CASE("sylvester_solve_spd reports overlapping spectra") {
  const Matrix a = Matrix::Identity(2, 2);
  const Matrix b = -Matrix::Identity(2, 2);
  CHECK_THROWS_AS(sylvester_solve_spd(a, b, Matrix::Ones(2, 2)), SolverError);
}

TEST_CASE("vec identities") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int> dim(1, 5);
    const Index p = dim(rng), q = dim(rng), r = dim(rng), s = dim(rng);
    const Matrix a = oracle::gaussian(rng, p, q);
    // ||A||_F = ||vec(A)||_2
    CHECK(a.norm() == doctest::Approx(vec(a).norm()).epsilon(1e-14));
    // vec(ABC) = (C^T (x) A) vec(B)
    const Matrix b = oracle::gaussian(rng, q, r);
    const Matrix c = oracle::gaussian(rng, r, s);
    const Vector lhs = vec(a * b * c);
    const Vector rhs = kron(c.transpose(), a) * vec(b);
    CHECK((lhs - rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));
    CHECK(unvec(vec(b), q, r) == b);
    CHECK((kron(a, b) - oracle::kron(a, b)).norm() == 0.0);
  }
}

TEST_CASE("Kronecker spectrum is the set of pairwise products") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix ga = oracle::gaussian(rng, 3, 3);
    const Matrix gb = oracle::gaussian(rng, 4, 4);
    const Matrix a = ga + ga.transpose();
    const Matrix b = gb + gb.transpose();
    const Vector ea = sym_eig(a).values;
    const Vector eb = sym_eig(b).values;
    std::vector<double> products;
    for (Index i = 0; i < ea.size(); ++i)
      for (Index j = 0; j < eb.size(); ++j) products.push_back(ea(i) * eb(j));
    std::sort(products.begin(), products.end());
    const Vector ek = sym_eig(kron(a, b)).values;
    for (std::size_t k = 0; k < products.size(); ++k) {
      CHECK(ek(static_cast<Index>(k)) == doctest::Approx(products[k]).epsilon(1e-9).scale(1.0));
    }
  }
}

TEST_CASE("square roots and log-determinant") {
  std::mt19937_64 rng(10);
  const Matrix s = oracle::bounded_spd(rng, 4, 0.01, 100.0);
  const Matrix r = spd_sqrt(s);
  CHECK((r * r - s).norm() <= 1e-9 * s.norm());
  const Matrix ir = spd_inv_sqrt(s);
  CHECK((ir * s * ir - Matrix::Identity(4, 4)).norm() <= 1e-9);
  CHECK(log_det_spd(s) == doctest::Approx(std::log(s.determinant())).epsilon(1e-10));
  CHECK((spd_inverse(s) * s - Matrix::Identity(4, 4)).norm() <= 1e-8);
  CHECK_THROWS_AS(log_det_spd(-Matrix::Identity(2, 2)), DomainError);
  CHECK_THROWS_AS(spd_inverse(Matrix::Zero(2, 2) + Vector((Vector(2) << 1.0, 0.0).finished()).asDiagonal().toDenseMatrix()), SolverError);
}
