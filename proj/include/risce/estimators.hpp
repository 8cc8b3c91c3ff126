// SPDX-License-Identifier: Apache-2.0
//
// LS and LMMSE estimators for the single- and double-reflection links, the
// empirical correlation estimator feeding LMMSE, and the NMSE metric.

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "risce/numerics.hpp"
#include "risce/parallel.hpp"

namespace risce::est {

using num::ComplexMatrix;
using num::cxd;

/// Second-moment matrix R = E[H^H H] of a channel family, estimated from
/// clean draws. Validated Hermitian PSD on construction.
class CorrelationMatrix {
  public:
    CorrelationMatrix(ComplexMatrix r, std::size_t sample_count)
        : r_(std::move(r)), sample_count_(sample_count) {
        if (r_.rows() != r_.cols())
            throw std::invalid_argument("CorrelationMatrix: matrix must be square");
        const auto e = num::detail::map(r_);
        const double herm_gap = (e - e.adjoint()).cwiseAbs().maxCoeff();
        if (herm_gap > 1e-10 * std::max(1.0, e.cwiseAbs().maxCoeff()))
            throw std::invalid_argument("CorrelationMatrix: matrix is not Hermitian");
        Eigen::SelfAdjointEigenSolver<num::detail::EMat> es(e, Eigen::EigenvaluesOnly);
        const double trace = e.trace().real();
        if (es.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, trace))
            throw std::invalid_argument("CorrelationMatrix: matrix is not PSD");
    }

    const ComplexMatrix& matrix() const { return r_; }
    std::size_t dim() const { return r_.rows(); }
    std::size_t sample_count() const { return sample_count_; }

  private:
    ComplexMatrix r_;
    std::size_t sample_count_;
};

/// Regularizer fed to the LMMSE inner systems. paper_trace keeps the
/// literal expected trace of the noise block; per_entry is the per-sample
/// variance that makes the estimator a proper Bayesian shrinker.
enum class NoiseConvention { paper_trace, per_entry };

struct NoiseScalar {
    double value = 0.0;
    NoiseConvention convention = NoiseConvention::paper_trace;
};

inline NoiseScalar make_noise_scalar(double sigma2, std::size_t noise_rows,
                                     std::size_t noise_cols, NoiseConvention conv) {
    if (sigma2 < 0.0) throw std::invalid_argument("make_noise_scalar: sigma2 must be >= 0");
    NoiseScalar out;
    out.convention = conv;
    out.value = conv == NoiseConvention::paper_trace
                    ? static_cast<double>(noise_rows * noise_cols) * sigma2
                    : sigma2;
    return out;
}

/// H_hat = Y Phi^H (Phi Phi^H)^{-1}. With the DFT schedule the inner Gram
/// is I * I_N, but the general solve is kept so arbitrary schedules work.
inline ComplexMatrix ls_single(const ComplexMatrix& y, const ComplexMatrix& phi) {
    if (y.cols() != phi.cols())
        throw std::invalid_argument("ls_single: Y and Phi must share the slot dimension");
    const ComplexMatrix gram = num::matmul(phi, num::conj_transpose(phi));  // N x N
    const ComplexMatrix yph = num::matmul(y, num::conj_transpose(phi));     // M x N
    // Right-division by the Hermitian Gram: (X G^{-1})^H = G^{-1} X^H.
    const ComplexMatrix solved = num::solve_hermitian(gram, num::conj_transpose(yph));
    return num::conj_transpose(solved);
}

/// H_hat = Y (Phi^H R Phi + v I)^{-1} Phi^H R, the row-wise LMMSE filter.
inline ComplexMatrix lmmse_single(const ComplexMatrix& y, const ComplexMatrix& phi,
                                  const CorrelationMatrix& r, const NoiseScalar& v) {
    if (y.cols() != phi.cols())
        throw std::invalid_argument("lmmse_single: Y and Phi must share the slot dimension");
    if (r.dim() != phi.rows())
        throw std::invalid_argument("lmmse_single: R must be N x N for an N x I schedule");
    if (v.value < 0.0) throw std::invalid_argument("lmmse_single: noise scalar must be >= 0");
    const ComplexMatrix phr = num::matmul(num::conj_transpose(phi), r.matrix());  // I x N
    ComplexMatrix inner = num::matmul(phr, phi);                                  // I x I
    for (std::size_t i = 0; i < inner.rows(); ++i) inner(i, i) += v.value;
    const ComplexMatrix filt = num::solve_hermitian(inner, phr);  // I x N
    return num::matmul(y, filt);
}

/// H3_hat = (H2k^H H2k)^{-1} H2k^H Y3, i.e. left-pseudoinverse applied to
/// the swept observation block.
inline ComplexMatrix ls_double(const ComplexMatrix& h2k, const ComplexMatrix& y3) {
    if (h2k.rows() < h2k.cols())
        throw std::invalid_argument("ls_double: need M >= N for a full-column-rank H2k");
    if (y3.rows() != h2k.rows() || y3.cols() != h2k.cols())
        throw std::invalid_argument("ls_double: Y3 must be M x N");
    return num::matmul(num::left_pinv(h2k), y3);
}

/// H3_hat = R (R + (H2k^H H2k)^{-1} v)^{-1} pinv(H2k) Y3. Factoring out
/// G^{-1} = (H2k^H H2k)^{-1} turns the middle inverse into the solve
/// (G R + v I)^{-1} G P with P the LS solution, so G is never inverted
/// explicitly. The inner matrix is not Hermitian, hence the general solve.
inline ComplexMatrix lmmse_double(const ComplexMatrix& h2k, const ComplexMatrix& y3,
                                  const CorrelationMatrix& r, const NoiseScalar& v) {
    if (r.dim() != h2k.cols())
        throw std::invalid_argument("lmmse_double: R must be N x N");
    if (v.value < 0.0) throw std::invalid_argument("lmmse_double: noise scalar must be >= 0");
    const ComplexMatrix p = ls_double(h2k, y3);
    const ComplexMatrix g = num::matmul(num::conj_transpose(h2k), h2k);  // N x N
    ComplexMatrix inner = num::matmul(g, r.matrix());
    for (std::size_t i = 0; i < inner.rows(); ++i) inner(i, i) += v.value;
    const ComplexMatrix z = num::solve_general(inner, num::matmul(g, p));
    return num::matmul(r.matrix(), z);
}

/// R = (1/T) sum_t H_t^H H_t over clean channel draws.
inline CorrelationMatrix empirical_correlation(const std::vector<ComplexMatrix>& samples) {
    if (samples.empty())
        throw std::invalid_argument("empirical_correlation: need at least one sample");
    const std::size_t n = samples.front().cols();
    ComplexMatrix acc(n, n);
    for (const auto& h : samples) {
        if (!h.same_shape(samples.front()))
            throw std::invalid_argument("empirical_correlation: samples must share one shape");
        const ComplexMatrix g = num::matmul(num::conj_transpose(h), h);
        acc = num::add(acc, g);
    }
    return CorrelationMatrix(num::scale(acc, cxd(1.0 / static_cast<double>(samples.size()), 0.0)),
                             samples.size());
}

/// Batch NMSE: mean over samples of |H - H_hat|_F^2 / |H|_F^2. Per-sample
/// ratios are computed in parallel but summed in index order so the result
/// does not depend on the thread count.
inline double nmse(const std::vector<ComplexMatrix>& estimates,
                   const std::vector<ComplexMatrix>& labels) {
    if (estimates.size() != labels.size() || estimates.empty())
        throw std::invalid_argument("nmse: batches must be nonempty and equally sized");
    std::vector<double> ratio(estimates.size());
    std::vector<char> bad(estimates.size(), 0);
    parallel_for(estimates.size(), [&](std::size_t t) {
        if (!estimates[t].same_shape(labels[t])) {
            bad[t] = 1;
            return;
        }
        const double denom = num::fro_norm_sq(labels[t]);
        if (denom <= 0.0) {
            bad[t] = 2;
            return;
        }
        ratio[t] = num::fro_norm_sq(num::sub(labels[t], estimates[t])) / denom;
    });
    double s = 0.0;
    for (std::size_t t = 0; t < estimates.size(); ++t) {
        if (bad[t] == 1) throw std::invalid_argument("nmse: estimate/label shape mismatch");
        if (bad[t] == 2) throw std::invalid_argument("nmse: zero-norm label rejected");
        s += ratio[t];
    }
    return s / static_cast<double>(estimates.size());
}

}  // namespace risce::est
