#include <doctest.h>

#include "coordfit/error.hpp"
#include "coordfit/linalg.hpp"
#include "coordfit/network.hpp"
#include "support/oracles.hpp"

using namespace coordfit;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

}  // namespace

TEST_SUITE("linalg") {
  TEST_CASE("mat_mul examples") {
    Rng rng(1);
    const Matrix m = oracle::random_matrix(rng, 3, 4);
    CHECK(mat_mul(Matrix::Identity(3, 3), m) == m);
    CHECK(mat_mul(m, Matrix::Zero(4, 2)) == Matrix::Zero(3, 2));
    CHECK(mat_mul(mat({{1, 2}, {3, 4}}), mat({{5}, {6}})) == mat({{17}, {39}}));
  }

  TEST_CASE("mat_mul rejects mismatched shapes") {
    try {
      mat_mul(Matrix::Zero(2, 3), Matrix::Zero(2, 3));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::DimensionMismatch);
    }
  }

  TEST_CASE("frobenius_norm examples") {
    CHECK(frobenius_norm(Matrix::Zero(2, 2)) == 0.0);
    CHECK(frobenius_norm(Matrix::Identity(3, 3)) == doctest::Approx(1.7320508075688772).epsilon(1e-15));
    CHECK(frobenius_norm(mat({{3, 4}})) == doctest::Approx(5.0).epsilon(1e-15));
  }

  TEST_CASE("svd examples") {
    const auto d = svd(mat({{3, 0}, {0, 2}}));
    CHECK(d.singular_values(0) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(d.singular_values(1) == doctest::Approx(2.0).epsilon(1e-14));

    // A^T A = [[25, 20], [20, 25]] has eigenvalues 45 and 5.
    const auto s = svd(mat({{3, 0}, {4, 5}}));
    CHECK(s.singular_values(0) == doctest::Approx(std::sqrt(45.0)).epsilon(1e-12));
    CHECK(s.singular_values(1) == doctest::Approx(std::sqrt(5.0)).epsilon(1e-12));

    const auto z = svd(Matrix::Zero(2, 2));
    CHECK(z.singular_values(0) == 0.0);
    CHECK(z.singular_values(1) == 0.0);
    CHECK((z.left_vectors.transpose() * z.left_vectors - Matrix::Identity(2, 2)).norm() < 1e-12);
  }

  TEST_CASE("svd rejects empty and non-finite input") {
    CHECK_THROWS_AS(svd(Matrix(0, 3)), Error);
    Matrix m = Matrix::Ones(2, 2);
    m(0, 1) = std::nan("");
    try {
      svd(m);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::NonFinite);
    }
  }

  TEST_CASE("svd reports non-convergence when sweeps run out") {
    Rng rng(3);
    const Matrix m = oracle::random_matrix(rng, 12, 12);
    try {
      svd(m, true, 1);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::NoConvergence);
    }
  }

  TEST_CASE("svd invariants on random shapes") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
      const auto rows = static_cast<Eigen::Index>(1 + rng.below(32));
      const auto cols = static_cast<Eigen::Index>(1 + rng.below(32));
      Matrix m = oracle::random_matrix(rng, rows, cols);
      if (trial % 5 == 0 && cols > 1) m.col(cols - 1) = m.col(0) * 2.0;  // rank deficient
      const auto d = svd(m);
      const Eigen::Index k = std::min(rows, cols);
      REQUIRE(d.singular_values.size() == k);
      for (Eigen::Index i = 0; i < k; ++i) {
        CHECK(d.singular_values(i) >= 0.0);
        if (i > 0) CHECK(d.singular_values(i) <= d.singular_values(i - 1));
      }
      CHECK((d.left_vectors.transpose() * d.left_vectors - Matrix::Identity(k, k)).norm() < 1e-10);
      CHECK((d.right_vectors.transpose() * d.right_vectors - Matrix::Identity(k, k)).norm() < 1e-10);
      const Matrix recon = d.left_vectors * d.singular_values.asDiagonal() * d.right_vectors.transpose();
      CHECK((recon - m).norm() <= 1e-8 * m.norm());
      for (Eigen::Index j = 0; j < k; ++j) {
        const auto u = d.left_vectors.col(j);
        Eigen::Index first = 0;
        while (first < u.size() && std::abs(u(first)) < 1e-14) ++first;
        if (first < u.size()) CHECK(u(first) > 0.0);
      }
    }
  }

  TEST_CASE("svd singular values match the Gram eigen oracle") {
    Rng rng(12);
    for (int trial = 0; trial < 500; ++trial) {
      const auto rows = static_cast<Eigen::Index>(1 + rng.below(32));
      const auto cols = static_cast<Eigen::Index>(1 + rng.below(32));
      const Matrix m = oracle::random_matrix(rng, rows, cols);
      const Vector got = svd(m, false).singular_values;
      const Vector want = oracle::gram_singular_values(m);
      for (Eigen::Index i = 0; i < got.size(); ++i) CHECK(oracle::close(got(i), want(i), 1e-8));
    }
  }

  TEST_CASE("svd is deterministic including signs") {
    Rng rng(4);
    const Matrix m = oracle::random_matrix(rng, 9, 5);
    const auto a = svd(m);
    const auto b = svd(m);
    CHECK(a.left_vectors == b.left_vectors);
    CHECK(a.right_vectors == b.right_vectors);
  }

  TEST_CASE("operator_norm examples and bound") {
    CHECK(operator_norm(Matrix::Identity(4, 4)) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(operator_norm(mat({{2, 0}, {0, 1}})) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(operator_norm(mat({{3, 0}, {4, 5}})) == doctest::Approx(6.7082039324993690).epsilon(1e-12));
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
      const Matrix m = oracle::random_matrix(rng, 1 + rng.below(10), 1 + rng.below(10));
      CHECK(operator_norm(m) <= frobenius_norm(m) * (1.0 + 1e-14));
    }
  }

  TEST_CASE("affine Lipschitz constant is the operator norm") {
    Rng rng(6);
    const Matrix a = oracle::random_matrix(rng, 7, 5);
    const double op = operator_norm(a);
    for (int pair = 0; pair < 1000; ++pair) {
      const Vector x1 = oracle::random_matrix(rng, 5, 1);
      const Vector x2 = oracle::random_matrix(rng, 5, 1);
      CHECK((a * (x1 - x2)).norm() / (x1 - x2).norm() <= op * (1.0 + 1e-12));
    }
  }

  TEST_CASE("pinv_solve examples") {
    const Matrix v = mat({{1.5}, {-2}, {3}});
    CHECK((pinv_solve(Matrix::Identity(3, 3), v) - v).norm() < 1e-14);
    CHECK((pinv_solve(mat({{2, 0}, {0, 4}}), mat({{2}, {8}})) - mat({{1}, {2}})).norm() < 1e-14);
    CHECK((pinv_solve(mat({{1, 1}, {1, 1}}), mat({{2}, {2}})) - mat({{1}, {1}})).norm() < 1e-13);
    CHECK_THROWS_AS(pinv_solve(Matrix::Identity(3, 3), Matrix::Zero(2, 1)), Error);
  }

  TEST_CASE("pinv_solve recovers x for full column rank") {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
      const auto cols = static_cast<Eigen::Index>(1 + rng.below(10));
      const auto rows = cols + static_cast<Eigen::Index>(rng.below(10));
      const Matrix a = oracle::random_matrix(rng, rows, cols);
      const Matrix x = oracle::random_matrix(rng, cols, 2);
      const Matrix got = pinv_solve(a, Matrix(a * x));
      CHECK((got - x).norm() <= 1e-8 * x.norm());
    }
  }
}
