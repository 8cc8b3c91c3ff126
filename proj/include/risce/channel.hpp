// SPDX-License-Identifier: Apache-2.0
//
// Statistical generation of the five constituent links of the double-RIS
// system (Rician fading with distance path loss) and assembly of the
// cascaded matrices H1k, H2k, H3k.

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "risce/numerics.hpp"
#include "risce/rng.hpp"

namespace risce::chan {

using num::ComplexMatrix;
using num::cxd;

/// Raised by assemble_cascaded when an h_k2 entry is (numerically) zero and
/// diag(h_k2)^{-1} would blow up; callers resample the channel set.
class DegenerateChannelError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Fading statistics of one constituent link.
struct LinkSpec {
    double rician_factor = 0.0;      // gamma >= 0; 0 is Rayleigh
    double distance_m = 10.0;        // d > 0
    double pathloss_exponent = 2.0;  // alpha > 0
    double departure_rad = 0.0;      // LoS angle at the transmitting side
    double arrival_rad = 0.0;        // LoS angle at the receiving side

    void validate() const {
        if (rician_factor < 0.0) throw std::invalid_argument("LinkSpec: rician_factor must be >= 0");
        if (!(distance_m > 0.0)) throw std::invalid_argument("LinkSpec: distance must be > 0");
        if (!(pathloss_exponent > 0.0))
            throw std::invalid_argument("LinkSpec: pathloss_exponent must be > 0");
    }
};

/// System geometry plus per-link fading parameters. Defaults follow the
/// evaluation setup: M=64, N=32, beta0=-15 dB at d0=10 m, Rician factors
/// {0,10,10,0,10} and distances {16,90,80,16,90} m for {h_k1,h_k2,D,N2,N1}.
struct SystemConfig {
    std::size_t bs_antennas = 64;   // M
    std::size_t ris_elements = 32;  // N per surface
    std::size_t users = 1;          // K
    double beta0_db = -15.0;        // reference path loss
    double d0_m = 10.0;             // reference distance

    LinkSpec h_k1{0.0, 16.0, 2.0, 0.35, -0.60};
    LinkSpec h_k2{10.0, 90.0, 2.3, 1.10, 0.20};
    LinkSpec d_ris{10.0, 80.0, 2.3, -0.40, 0.90};
    LinkSpec n1{10.0, 90.0, 2.3, -1.20, 0.50};
    LinkSpec n2{0.0, 16.0, 2.0, 0.70, -1.00};

    void validate() const {
        if (bs_antennas < 1 || ris_elements < 1 || users < 1)
            throw std::invalid_argument("SystemConfig: M, N, K must all be >= 1");
        if (!(d0_m > 0.0)) throw std::invalid_argument("SystemConfig: d0 must be > 0");
        h_k1.validate();
        h_k2.validate();
        d_ris.validate();
        n1.validate();
        n2.validate();
    }
};

/// One realization of all five links (path loss already applied).
struct ChannelSet {
    ComplexMatrix h_k1;  // N x 1, user -> RIS1
    ComplexMatrix h_k2;  // N x 1, user -> RIS2
    ComplexMatrix d;     // N x N, RIS1 -> RIS2
    ComplexMatrix n1;    // M x N, RIS1 -> BS
    ComplexMatrix n2;    // M x N, RIS2 -> BS
};

/// The three cascaded matrices the estimators target.
struct CascadedChannels {
    ComplexMatrix h1k;  // M x N = N1 diag(h_k1)
    ComplexMatrix h2k;  // M x N = N2 diag(h_k2)
    ComplexMatrix h3k;  // N x N, column n = diag(h_k2)^{-1} d_n h_k1[n]
};

/// Reflection coefficients of one RIS; |theta_n| <= 1, all-zero means OFF.
class RISPhase {
  public:
    explicit RISPhase(std::vector<cxd> coeffs) : theta_(std::move(coeffs)) {
        for (const cxd& t : theta_)
            if (std::abs(t) > 1.0 + 1e-12)
                throw std::invalid_argument("RISPhase: |theta_n| must be <= 1");
    }

    static RISPhase off(std::size_t n) { return RISPhase(std::vector<cxd>(n, cxd(0, 0))); }
    static RISPhase on(std::size_t n) { return RISPhase(std::vector<cxd>(n, cxd(1, 0))); }
    static RISPhase one_hot(std::size_t n, std::size_t index) {
        std::vector<cxd> v(n, cxd(0, 0));
        v.at(index) = cxd(1, 0);
        return RISPhase(std::move(v));
    }
    /// theta_n = amplitude * exp(i phase_n).
    static RISPhase from_phases(double amplitude, const std::vector<double>& phases) {
        if (amplitude < 0.0 || amplitude > 1.0)
            throw std::invalid_argument("RISPhase: amplitude must be in [0,1]");
        std::vector<cxd> v(phases.size());
        for (std::size_t i = 0; i < phases.size(); ++i)
            v[i] = std::polar(amplitude, phases[i]);
        return RISPhase(std::move(v));
    }

    std::size_t size() const { return theta_.size(); }
    const cxd& operator[](std::size_t i) const { return theta_[i]; }

  private:
    std::vector<cxd> theta_;
};

/// beta = 10^(beta0_db/10) * (d/d0)^(-alpha).
inline double path_loss_linear(double d, double alpha, double beta0_db, double d0) {
    if (!(d > 0.0)) throw std::invalid_argument("path_loss_linear: distance must be > 0");
    if (!(d0 > 0.0)) throw std::invalid_argument("path_loss_linear: d0 must be > 0");
    return std::pow(10.0, beta0_db / 10.0) * std::pow(d / d0, -alpha);
}

namespace detail {

// Unit-modulus LoS component: outer product of half-wavelength ULA steering
// vectors at the link's arrival (rows) and departure (columns) angles.
inline cxd los_entry(std::size_t r, std::size_t c, const LinkSpec& spec) {
    const double pi = 3.141592653589793238462643383280;
    const double phase = pi * (static_cast<double>(r) * std::sin(spec.arrival_rad) -
                               static_cast<double>(c) * std::sin(spec.departure_rad));
    return std::polar(1.0, phase);
}

}  // namespace detail

/// H = sqrt(beta) * [ sqrt(g/(g+1)) Hbar + sqrt(1/(g+1)) Htilde ],
/// Htilde iid CN(0,1), Hbar deterministic unit-modulus, so E|H_ij|^2 = beta.
inline ComplexMatrix sample_rician(std::size_t rows, std::size_t cols, const LinkSpec& spec,
                                   double beta0_db, double d0, RngStream& rng) {
    spec.validate();
    const double beta = path_loss_linear(spec.distance_m, spec.pathloss_exponent, beta0_db, d0);
    const double g = spec.rician_factor;
    // An infinite factor means a purely deterministic link; the diffuse draw
    // still happens so the stream position does not depend on gamma.
    const double w_los = std::isinf(g) ? 1.0 : std::sqrt(g / (g + 1.0));
    const double w_nlos = std::isinf(g) ? 0.0 : std::sqrt(1.0 / (g + 1.0));
    const double amp = std::sqrt(beta);

    ComplexMatrix h = num::sample_cn(rows, cols, 1.0, rng);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            h(r, c) = amp * (w_los * detail::los_entry(r, c, spec) + w_nlos * h(r, c));
    return h;
}

/// Draws all five links for user k. The draw order is fixed
/// (h_k1, h_k2, D, N1, N2) and the stream is derived from (rng, k), so the
/// same inputs reproduce the set bit for bit.
inline ChannelSet sample_channel_set(const SystemConfig& cfg, std::size_t user,
                                     const RngStream& rng) {
    cfg.validate();
    RngStream s = rng.derive(user);
    const std::size_t m = cfg.bs_antennas, n = cfg.ris_elements;
    ChannelSet cs;
    cs.h_k1 = sample_rician(n, 1, cfg.h_k1, cfg.beta0_db, cfg.d0_m, s);
    cs.h_k2 = sample_rician(n, 1, cfg.h_k2, cfg.beta0_db, cfg.d0_m, s);
    cs.d = sample_rician(n, n, cfg.d_ris, cfg.beta0_db, cfg.d0_m, s);
    cs.n1 = sample_rician(m, n, cfg.n1, cfg.beta0_db, cfg.d0_m, s);
    cs.n2 = sample_rician(m, n, cfg.n2, cfg.beta0_db, cfg.d0_m, s);
    return cs;
}

/// H1k = N1 diag(h_k1), H2k = N2 diag(h_k2),
/// H3k(m,n) = D(m,n) h_k1[n] / h_k2[m].
inline CascadedChannels assemble_cascaded(const ChannelSet& cs) {
    const std::size_t m = cs.n1.rows();
    const std::size_t n = cs.h_k1.rows();
    for (std::size_t i = 0; i < n; ++i)
        if (std::abs(cs.h_k2(i, 0)) < 1e-300)
            throw DegenerateChannelError("assemble_cascaded: h_k2[" + std::to_string(i) +
                                         "] is numerically zero; resample the channel set");

    CascadedChannels out{ComplexMatrix(m, n), ComplexMatrix(m, n), ComplexMatrix(n, n)};
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            out.h1k(r, c) = cs.n1(r, c) * cs.h_k1(c, 0);
            out.h2k(r, c) = cs.n2(r, c) * cs.h_k2(c, 0);
        }
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c)
            out.h3k(r, c) = cs.d(r, c) * cs.h_k1(c, 0) / cs.h_k2(r, 0);
    return out;
}

/// h_k = N2 Phi2 D Phi1 h_k1 + N2 Phi2 h_k2 + N1 Phi1 h_k1 (M x 1).
inline ComplexMatrix effective_channel(const ChannelSet& cs, const RISPhase& theta1,
                                       const RISPhase& theta2) {
    const std::size_t m = cs.n1.rows();
    const std::size_t n = cs.h_k1.rows();
    if (theta1.size() != n || theta2.size() != n)
        throw std::invalid_argument("effective_channel: phase vector length must equal N");

    // Phi1 h_k1 and Phi2 (D Phi1 h_k1 + h_k2) without materializing diagonals.
    std::vector<cxd> p1(n), inner(n);
    for (std::size_t i = 0; i < n; ++i) p1[i] = theta1[i] * cs.h_k1(i, 0);
    for (std::size_t r = 0; r < n; ++r) {
        cxd acc(0, 0);
        for (std::size_t c = 0; c < n; ++c) acc += cs.d(r, c) * p1[c];
        inner[r] = theta2[r] * (acc + cs.h_k2(r, 0));
    }
    ComplexMatrix h(m, 1);
    for (std::size_t r = 0; r < m; ++r) {
        cxd acc(0, 0);
        for (std::size_t c = 0; c < n; ++c)
            acc += cs.n2(r, c) * inner[c] + cs.n1(r, c) * p1[c];
        h(r, 0) = acc;
    }
    return h;
}

}  // namespace risce::chan
