// SPDX-License-Identifier: Apache-2.0
//
// Training reflection schedules and noisy received-signal synthesis for the
// single- and double-reflection estimation phases. Pilot symbols are fixed
// at 1; the inactive RIS is OFF during single-reflection training.

#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <stdexcept>

#include "risce/channel.hpp"
#include "risce/numerics.hpp"
#include "risce/rng.hpp"

namespace risce::pilot {

using num::ComplexMatrix;
using num::cxd;

/// Reflection matrix for one single-reflection training phase. Rows of the
/// I-point DFT, so rank(Phi) = N, |Phi_nt| = 1 and Phi Phi^H = I * I_N.
class SingleLinkSchedule {
  public:
    SingleLinkSchedule(int link_id, ComplexMatrix phi)
        : link_id_(link_id), phi_(std::move(phi)) {
        if (link_id != 1 && link_id != 2)
            throw std::invalid_argument("SingleLinkSchedule: link_id must be 1 or 2");
    }

    int link_id() const { return link_id_; }
    std::size_t elements() const { return phi_.rows(); }    // N
    std::size_t slot_count() const { return phi_.cols(); }  // I
    const ComplexMatrix& phi() const { return phi_; }

  private:
    int link_id_;
    ComplexMatrix phi_;
};

/// Double-reflection schedule: RIS2 full-ON, RIS1 swept one element per slot.
class DoubleLinkSchedule {
  public:
    explicit DoubleLinkSchedule(std::size_t elements) : n_(elements) {
        if (elements < 1) throw std::invalid_argument("DoubleLinkSchedule: N must be >= 1");
    }

    std::size_t elements() const { return n_; }
    std::size_t slot_count() const { return n_; }
    chan::RISPhase theta2() const { return chan::RISPhase::on(n_); }
    chan::RISPhase theta1(std::size_t slot) const { return chan::RISPhase::one_hot(n_, slot); }

  private:
    std::size_t n_;
};

/// How the noise level is referenced. "transmit" follows SNR = P/sigma^2
/// literally; "receive" scales sigma^2 to the average clean received power
/// of the link so effect sizes survive compounded path loss.
enum class SnrMode { transmit, receive };

struct NoiseSpec {
    double snr_db = 0.0;
    SnrMode mode = SnrMode::transmit;
    double pilot_power = 1.0;  // P, linear
};

/// Phi = first N rows of the I-point DFT matrix, entries exp(-2*pi*i*n*t/I).
inline SingleLinkSchedule build_single_schedule(int link_id, std::size_t elements,
                                                std::size_t slots) {
    if (slots < elements)
        throw std::invalid_argument(
            "build_single_schedule: need I >= N so that rank(Phi) = N (got I = " +
            std::to_string(slots) + ", N = " + std::to_string(elements) + ")");
    ComplexMatrix phi(elements, slots);
    const double step = -2.0 * 3.141592653589793238462643383280 / static_cast<double>(slots);
    for (std::size_t n = 0; n < elements; ++n)
        for (std::size_t t = 0; t < slots; ++t)
            phi(n, t) = std::polar(1.0, step * static_cast<double>(n * t));
    return SingleLinkSchedule(link_id, std::move(phi));
}

/// sigma^2 for a given SNR. Receive mode needs the link's average clean
/// received power per entry.
inline double noise_variance(const NoiseSpec& spec,
                             std::optional<double> avg_rx_power = std::nullopt) {
    const double att = std::pow(10.0, -spec.snr_db / 10.0);
    if (spec.mode == SnrMode::transmit) return spec.pilot_power * att;
    if (!avg_rx_power.has_value() || !(*avg_rx_power > 0.0))
        throw std::invalid_argument(
            "noise_variance: receive mode requires a positive avg_rx_power");
    return *avg_rx_power * att;
}

/// Y = H * Phi + W, W iid CN(0, sigma2). The other RIS is OFF by construction.
inline ComplexMatrix synthesize_single_rx(const ComplexMatrix& h,
                                          const SingleLinkSchedule& sched, double sigma2,
                                          RngStream& rng) {
    if (h.cols() != sched.elements())
        throw std::invalid_argument("synthesize_single_rx: H columns must equal N");
    ComplexMatrix y = num::matmul(h, sched.phi());
    const ComplexMatrix w = num::sample_cn(y.rows(), y.cols(), sigma2, rng);
    return num::add(y, w);
}

/// Y3 = H2k * H3k + W3 after the N-slot sweep; assumes perfect cancellation
/// of the single-reflection pilots.
inline ComplexMatrix synthesize_double_rx(const ComplexMatrix& h2k, const ComplexMatrix& h3k,
                                          double sigma2, RngStream& rng) {
    if (h2k.rows() < h2k.cols())
        throw std::invalid_argument(
            "synthesize_double_rx: need M >= N so that rank(H2k) = N can hold (got M = " +
            std::to_string(h2k.rows()) + ", N = " + std::to_string(h2k.cols()) + ")");
    if (h3k.rows() != h2k.cols() || h3k.cols() != h2k.cols())
        throw std::invalid_argument("synthesize_double_rx: H3k must be N x N");
    ComplexMatrix y = num::matmul(h2k, h3k);
    const ComplexMatrix w = num::sample_cn(y.rows(), y.cols(), sigma2, rng);
    return num::add(y, w);
}

}  // namespace risce::pilot
