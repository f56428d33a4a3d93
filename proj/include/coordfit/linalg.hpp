#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#if defined(__SSE__) || defined(__x86_64__)
#include <xmmintrin.h>
#define COORDFIT_HAVE_MXCSR 1
#endif

#include "coordfit/error.hpp"

namespace coordfit {

/// Sets flush-to-zero and denormals-are-zero for the current thread while in
/// scope (x86 only; a no-op elsewhere). Products of the tiny tails of
/// exponential activations otherwise run an order of magnitude slower.
class ScopedFlushDenormals {
 public:
#ifdef COORDFIT_HAVE_MXCSR
  ScopedFlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~ScopedFlushDenormals() { _mm_setcsr(saved_); }
#else
  ScopedFlushDenormals() = default;
#endif
  ScopedFlushDenormals(const ScopedFlushDenormals&) = delete;
  ScopedFlushDenormals& operator=(const ScopedFlushDenormals&) = delete;

 private:
#ifdef COORDFIT_HAVE_MXCSR
  unsigned saved_;
#endif
};

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

inline std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().allFinite();
}

/// Checked product. Throws DimensionMismatch when the inner dimensions differ.
template <typename DerivedA, typename DerivedB>
auto mat_mul(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.cols() != b.rows()) {
    throw Error(ErrorKind::DimensionMismatch,
                "mat_mul " + shape_string(a.rows(), a.cols()) + " * " +
                    shape_string(b.rows(), b.cols()));
  }
  MatrixX<Scalar> out(a.rows(), b.cols());
  out.noalias() = a * b;
  return out;
}

template <typename Derived>
typename Derived::Scalar frobenius_norm(const Eigen::MatrixBase<Derived>& m) {
  return m.norm();
}

template <typename Scalar>
struct SvdResult {
  VectorX<Scalar> singular_values;  // non-increasing, length min(rows, cols)
  MatrixX<Scalar> left_vectors;     // rows x k, empty in values-only mode
  MatrixX<Scalar> right_vectors;    // cols x k, empty in values-only mode

  bool has_vectors() const { return left_vectors.size() > 0 || right_vectors.size() > 0; }
};

namespace detail {

// Replaces the listed columns of `basis` by unit vectors orthogonal to every
// other column. Used for the left vectors of exactly-zero singular values.
template <typename Scalar>
void complete_orthonormal(MatrixX<Scalar>& basis, const std::vector<Eigen::Index>& missing) {
  std::vector<bool> filled(basis.cols(), true);
  for (auto j : missing) filled[j] = false;
  Eigen::Index candidate = 0;
  for (auto j : missing) {
    for (; candidate < basis.rows(); ++candidate) {
      VectorX<Scalar> v = VectorX<Scalar>::Unit(basis.rows(), candidate);
      for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index k = 0; k < basis.cols(); ++k) {
          if (filled[k]) v -= basis.col(k).dot(v) * basis.col(k);
        }
      }
      const Scalar n = v.norm();
      if (n > Scalar(0.5)) {
        basis.col(j) = v / n;
        filled[j] = true;
        ++candidate;
        break;
      }
    }
  }
}

// One-sided (Hestenes) Jacobi on the columns of `work`; `right` accumulates
// the rotations when non-null. Returns the number of sweeps used.
template <typename Scalar>
int hestenes_jacobi(MatrixX<Scalar>& work, MatrixX<Scalar>* right, int max_sweeps) {
  using std::abs;
  using std::sqrt;
  const Eigen::Index n = work.cols();
  const Scalar tol =
      std::numeric_limits<Scalar>::epsilon() * sqrt(static_cast<Scalar>(std::max<Eigen::Index>(work.rows(), 1)));
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    bool rotated = false;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const Scalar alpha = work.col(p).squaredNorm();
        const Scalar beta = work.col(q).squaredNorm();
        const Scalar gamma = work.col(p).dot(work.col(q));
        if (gamma == Scalar(0) || alpha == Scalar(0) || beta == Scalar(0)) continue;
        if (abs(gamma) <= tol * sqrt(alpha) * sqrt(beta)) continue;
        rotated = true;
        const Scalar zeta = (beta - alpha) / (Scalar(2) * gamma);
        const Scalar t = (zeta >= 0 ? Scalar(1) : Scalar(-1)) / (abs(zeta) + sqrt(Scalar(1) + zeta * zeta));
        const Scalar c = Scalar(1) / sqrt(Scalar(1) + t * t);
        const Scalar s = c * t;
        for (Eigen::Index i = 0; i < work.rows(); ++i) {
          const Scalar wp = work(i, p);
          const Scalar wq = work(i, q);
          work(i, p) = c * wp - s * wq;
          work(i, q) = s * wp + c * wq;
        }
        if (right != nullptr) {
          for (Eigen::Index i = 0; i < right->rows(); ++i) {
            const Scalar vp = (*right)(i, p);
            const Scalar vq = (*right)(i, q);
            (*right)(i, p) = c * vp - s * vq;
            (*right)(i, q) = s * vp + c * vq;
          }
        }
      }
    }
    if (!rotated) return sweep;
  }
  throw Error(ErrorKind::NoConvergence,
              "svd: Jacobi did not converge in " + std::to_string(max_sweeps) + " sweeps");
}

// Flips (u_j, v_j) pairs so the first nonzero entry of each u_j is positive.
template <typename Scalar>
void fix_signs(MatrixX<Scalar>& left, MatrixX<Scalar>& right) {
  for (Eigen::Index j = 0; j < left.cols(); ++j) {
    for (Eigen::Index i = 0; i < left.rows(); ++i) {
      if (left(i, j) == Scalar(0)) continue;
      if (left(i, j) < Scalar(0)) {
        left.col(j) *= Scalar(-1);
        right.col(j) *= Scalar(-1);
      }
      break;
    }
  }
}

}  // namespace detail

/// Thin singular value decomposition.
///
/// Tall inputs are first reduced with a Householder QR so the Jacobi sweeps
/// run on a square triangular factor. Sign convention: the first nonzero
/// component of every left vector is non-negative.
template <typename Derived>
SvdResult<typename Derived::Scalar> svd(const Eigen::MatrixBase<Derived>& m, bool want_vectors = true,
                                        int max_sweeps = 60) {
  using Scalar = typename Derived::Scalar;
  using Mat = MatrixX<Scalar>;
  if (m.rows() < 1 || m.cols() < 1) {
    throw Error(ErrorKind::InvalidArgument, "svd of empty matrix " + shape_string(m.rows(), m.cols()));
  }
  if (!m.allFinite()) throw Error(ErrorKind::NonFinite, "svd input has non-finite entries");

  if (m.rows() < m.cols()) {
    SvdResult<Scalar> t = svd(Mat(m.transpose()), want_vectors, max_sweeps);
    std::swap(t.left_vectors, t.right_vectors);
    if (want_vectors) detail::fix_signs(t.left_vectors, t.right_vectors);
    return t;
  }

  const Eigen::Index k = m.cols();
  Mat work;
  Mat q_thin;
  if (m.rows() > m.cols()) {
    Eigen::HouseholderQR<Mat> qr(m.eval());
    work = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();
    if (want_vectors) q_thin = qr.householderQ() * Mat::Identity(m.rows(), k);
  } else {
    work = m;
  }

  Mat right;
  if (want_vectors) right = Mat::Identity(k, k);
  detail::hestenes_jacobi<Scalar>(work, want_vectors ? &right : nullptr, max_sweeps);

  VectorX<Scalar> norms(k);
  for (Eigen::Index j = 0; j < k; ++j) norms(j) = work.col(j).norm();
  std::vector<Eigen::Index> order(k);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return norms(a) > norms(b); });

  SvdResult<Scalar> out;
  out.singular_values.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) out.singular_values(j) = norms(order[j]);
  if (!want_vectors) return out;

  Mat u(k, k);
  Mat v(k, k);
  std::vector<Eigen::Index> missing;
  for (Eigen::Index j = 0; j < k; ++j) {
    const Scalar s = norms(order[j]);
    v.col(j) = right.col(order[j]);
    if (s > Scalar(0) && std::isfinite(static_cast<double>(Scalar(1) / s))) {
      u.col(j) = work.col(order[j]) / s;
    } else {
      u.col(j).setZero();
      missing.push_back(j);
    }
  }
  if (!missing.empty()) detail::complete_orthonormal(u, missing);

  out.left_vectors = q_thin.size() > 0 ? Mat(q_thin * u) : u;
  out.right_vectors = std::move(v);
  detail::fix_signs(out.left_vectors, out.right_vectors);
  return out;
}

/// Largest singular value; the Lipschitz constant of x -> m x.
template <typename Derived>
typename Derived::Scalar operator_norm(const Eigen::MatrixBase<Derived>& m) {
  return svd(m, false).singular_values(0);
}

/// Minimum-norm least-squares solution of a x = y. Singular values at or
/// below rcond * sigma_max are treated as zero.
template <typename DerivedA, typename DerivedY>
MatrixX<typename DerivedA::Scalar> pinv_solve(const Eigen::MatrixBase<DerivedA>& a,
                                              const Eigen::MatrixBase<DerivedY>& y,
                                              typename DerivedA::Scalar rcond = 1e-12) {
  using Scalar = typename DerivedA::Scalar;
  if (a.rows() != y.rows()) {
    throw Error(ErrorKind::DimensionMismatch,
                "pinv_solve a=" + shape_string(a.rows(), a.cols()) + " y=" + shape_string(y.rows(), y.cols()));
  }
  const auto dec = svd(a, true);
  const Scalar cutoff = rcond * dec.singular_values(0);
  VectorX<Scalar> inv(dec.singular_values.size());
  for (Eigen::Index i = 0; i < inv.size(); ++i) {
    const Scalar s = dec.singular_values(i);
    inv(i) = (s > cutoff && s > Scalar(0)) ? Scalar(1) / s : Scalar(0);
  }
  MatrixX<Scalar> uty = dec.left_vectors.transpose() * y;
  return dec.right_vectors * (inv.asDiagonal() * uty);
}

}  // namespace coordfit
