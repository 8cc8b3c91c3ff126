// SPDX-License-Identifier: Apache-2.0
//
// Dense complex matrices and the small set of linear-algebra operations the
// estimation pipeline needs. Factorizations (QR, Cholesky) come from Eigen;
// no inverse is ever formed explicitly.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "risce/rng.hpp"

namespace risce::num {

using cxd = std::complex<double>;

/// Raised when a factorization meets a (numerically) singular or indefinite
/// matrix; carries a condition estimate where one is available.
class SingularMatrixError : public std::runtime_error {
  public:
    SingularMatrixError(const std::string& what, double condition_estimate)
        : std::runtime_error(what), condition_(condition_estimate) {}
    double condition_estimate() const { return condition_; }

  private:
    double condition_;
};

/// Dense complex matrix, row-major.
class ComplexMatrix {
  public:
    ComplexMatrix() = default;
    ComplexMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), v_(rows * cols, cxd(0.0, 0.0)) {
        if (rows == 0 || cols == 0)
            throw std::invalid_argument("ComplexMatrix: rows and cols must be >= 1");
    }

    static ComplexMatrix identity(std::size_t n) {
        ComplexMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = cxd(1.0, 0.0);
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return v_.size(); }

    cxd& operator()(std::size_t r, std::size_t c) { return v_[r * cols_ + c]; }
    const cxd& operator()(std::size_t r, std::size_t c) const { return v_[r * cols_ + c]; }

    cxd* data() { return v_.data(); }
    const cxd* data() const { return v_.data(); }

    bool same_shape(const ComplexMatrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    friend bool operator==(const ComplexMatrix& a, const ComplexMatrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.v_ == b.v_;
    }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<cxd> v_;
};

namespace detail {

using EMat = Eigen::Matrix<cxd, Eigen::Dynamic, Eigen::Dynamic>;
using MapRM =
    Eigen::Map<const Eigen::Matrix<cxd, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MapRMw = Eigen::Map<Eigen::Matrix<cxd, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline MapRM map(const ComplexMatrix& a) {
    return MapRM(a.data(), static_cast<Eigen::Index>(a.rows()),
                 static_cast<Eigen::Index>(a.cols()));
}

inline ComplexMatrix from_eigen(const EMat& e) {
    ComplexMatrix out(static_cast<std::size_t>(e.rows()), static_cast<std::size_t>(e.cols()));
    MapRMw(out.data(), e.rows(), e.cols()) = e;
    return out;
}

inline std::string shape_str(const ComplexMatrix& a) {
    return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

}  // namespace detail

/// c[i][j] = sum_l a[i][l] * b[l][j].
inline ComplexMatrix matmul(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: inner dimensions disagree: " +
                                    detail::shape_str(a) + " * " + detail::shape_str(b));
    return detail::from_eigen(detail::map(a) * detail::map(b));
}

inline ComplexMatrix conj_transpose(const ComplexMatrix& a) {
    ComplexMatrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = std::conj(a(i, j));
    return out;
}

inline double fro_norm_sq(const ComplexMatrix& a) {
    // Entries are visited diagonal first, then mirror pairs (i,j)/(j,i)
    // summed together before joining the accumulator. Transposing the input
    // only swaps the operands of commutative additions, so the norm of A and
    // A^H round identically and the values are exactly equal.
    const std::size_t m = a.rows(), n = a.cols();
    const std::size_t lo_dim = std::min(m, n);
    const std::size_t hi_dim = std::max(m, n);
    double s = 0.0;
    for (std::size_t i = 0; i < lo_dim; ++i) {
        s += std::norm(a(i, i));
        for (std::size_t j = i + 1; j < hi_dim; ++j) {
            const bool upper = j < n;  // position (i, j)
            const bool lower = j < m;  // position (j, i)
            if (upper && lower)
                s += std::norm(a(i, j)) + std::norm(a(j, i));
            else if (upper)
                s += std::norm(a(i, j));
            else
                s += std::norm(a(j, i));
        }
    }
    return s;
}

inline ComplexMatrix add(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("add: shape mismatch: " + detail::shape_str(a) + " vs " +
                                    detail::shape_str(b));
    ComplexMatrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
    return out;
}

inline ComplexMatrix sub(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("sub: shape mismatch: " + detail::shape_str(a) + " vs " +
                                    detail::shape_str(b));
    ComplexMatrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
    return out;
}

inline ComplexMatrix scale(const ComplexMatrix& a, cxd s) {
    ComplexMatrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= s;
    return out;
}

/// Moore-Penrose left inverse of a tall full-column-rank matrix, via
/// column-pivoted Householder QR. left_pinv(a) * a == I_n.
inline ComplexMatrix left_pinv(const ComplexMatrix& a) {
    if (a.rows() < a.cols())
        throw std::invalid_argument("left_pinv: matrix must have rows >= cols, got " +
                                    detail::shape_str(a));
    const detail::EMat e = detail::map(a);
    Eigen::ColPivHouseholderQR<detail::EMat> qr(e);
    const auto& r = qr.matrixR();
    const std::size_t n = a.cols();
    const double rmax = std::abs(r(0, 0));
    const double rmin = std::abs(r(static_cast<Eigen::Index>(n) - 1,
                                   static_cast<Eigen::Index>(n) - 1));
    if (!(rmin > 1e-10 * rmax)) {
        const double cond = rmin > 0.0 ? rmax / rmin : std::numeric_limits<double>::infinity();
        throw SingularMatrixError(
            "left_pinv: rank-deficient matrix (condition estimate " + std::to_string(cond) + ")",
            cond);
    }
    return detail::from_eigen(
        qr.solve(detail::EMat::Identity(e.rows(), e.rows())));
}

/// Solves a * x = b for Hermitian positive definite a (Cholesky).
inline ComplexMatrix solve_hermitian(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (a.rows() != a.cols())
        throw std::invalid_argument("solve_hermitian: matrix not square: " +
                                    detail::shape_str(a));
    if (a.cols() != b.rows())
        throw std::invalid_argument("solve_hermitian: shape mismatch: " + detail::shape_str(a) +
                                    " vs rhs " + detail::shape_str(b));
    double linf = 0.0, skew = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) {
            linf = std::max(linf, std::abs(a(i, j)));
            skew = std::max(skew, std::abs(a(i, j) - std::conj(a(j, i))));
        }
    if (skew > 1e-10 * std::max(1.0, linf))
        throw std::invalid_argument("solve_hermitian: matrix is not Hermitian (max asymmetry " +
                                    std::to_string(skew) + ")");
    Eigen::LLT<detail::EMat> llt(detail::map(a).eval());
    if (llt.info() != Eigen::Success)
        throw SingularMatrixError("solve_hermitian: matrix is not positive definite", 0.0);
    return detail::from_eigen(llt.solve(detail::map(b).eval()));
}

/// General square solve (column-pivoted QR) for the non-Hermitian inner
/// systems of the double-link LMMSE form.
inline ComplexMatrix solve_general(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (a.rows() != a.cols())
        throw std::invalid_argument("solve_general: matrix not square: " + detail::shape_str(a));
    if (a.cols() != b.rows())
        throw std::invalid_argument("solve_general: shape mismatch: " + detail::shape_str(a) +
                                    " vs rhs " + detail::shape_str(b));
    Eigen::ColPivHouseholderQR<detail::EMat> qr(detail::map(a).eval());
    const auto& r = qr.matrixR();
    const std::size_t n = a.cols();
    const double rmax = std::abs(r(0, 0));
    const double rmin = std::abs(r(static_cast<Eigen::Index>(n) - 1,
                                   static_cast<Eigen::Index>(n) - 1));
    if (!(rmin > 1e-13 * rmax)) {
        const double cond = rmin > 0.0 ? rmax / rmin : std::numeric_limits<double>::infinity();
        throw SingularMatrixError(
            "solve_general: singular matrix (condition estimate " + std::to_string(cond) + ")",
            cond);
    }
    return detail::from_eigen(qr.solve(detail::map(b).eval()));
}

/// i.i.d. circularly symmetric complex Gaussian entries, zero mean,
/// variance sigma2 per complex entry (sigma2/2 per real component).
inline ComplexMatrix sample_cn(std::size_t rows, std::size_t cols, double sigma2,
                               RngStream& rng) {
    if (sigma2 < 0.0) throw std::invalid_argument("sample_cn: variance must be >= 0");
    ComplexMatrix out(rows, cols);
    const double s = std::sqrt(sigma2 / 2.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto [re, im] = rng.next_gaussian_pair();
        out.data()[i] = cxd(s * re, s * im);
    }
    return out;
}

}  // namespace risce::num
