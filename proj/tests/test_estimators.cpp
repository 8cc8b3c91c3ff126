// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "risce/estimators.hpp"
#include "risce/pilot.hpp"
#include "helpers.hpp"

using risce::RngStream;
using risce::est::CorrelationMatrix;
using risce::est::NoiseConvention;
using risce::est::NoiseScalar;
using risce::num::ComplexMatrix;
using risce::num::cxd;
using testutil::max_abs_diff;
using testutil::random_matrix;
using testutil::rel_diff;

namespace {

/// Row prior h = g C with g iid CN(0,1); the exact row correlation is C^H C.
struct RowPrior {
    ComplexMatrix c;       // N x N mixing matrix
    ComplexMatrix r0;      // C^H C
    ComplexMatrix draw(std::size_t rows, RngStream& rng) const {
        return risce::num::matmul(risce::num::sample_cn(rows, c.rows(), 1.0, rng), c);
    }
};

RowPrior make_row_prior(std::size_t n, RngStream& rng) {
    ComplexMatrix c = random_matrix(n, n, rng);
    for (std::size_t i = 0; i < n; ++i) c(i, i) += 2.0;  // keep it well conditioned
    return {c, risce::num::matmul(risce::num::conj_transpose(c), c)};
}

/// Column prior h_c = C g_c; exact per-column covariance is C C^H.
ComplexMatrix draw_column_prior(const ComplexMatrix& c, std::size_t cols, RngStream& rng) {
    return risce::num::matmul(c, risce::num::sample_cn(c.rows(), cols, 1.0, rng));
}

}  // namespace

TEST_CASE("correlation wrapper validates psd structure", "[estimators]") {
    CHECK_NOTHROW(CorrelationMatrix(ComplexMatrix::identity(3), 1));
    CHECK_NOTHROW(CorrelationMatrix(ComplexMatrix(3, 3), 1));  // zero matrix is PSD

    auto asym = ComplexMatrix::identity(3);
    asym(0, 1) = cxd(1, 0);
    CHECK_THROWS_AS(CorrelationMatrix(asym, 1), std::invalid_argument);

    auto indef = ComplexMatrix::identity(3);
    indef(2, 2) = cxd(-1, 0);
    CHECK_THROWS_AS(CorrelationMatrix(indef, 1), std::invalid_argument);
}

TEST_CASE("noise scalar conventions", "[estimators]") {
    const auto t = risce::est::make_noise_scalar(0.25, 4, 8, NoiseConvention::paper_trace);
    CHECK(t.value == 8.0);
    const auto p = risce::est::make_noise_scalar(0.25, 4, 8, NoiseConvention::per_entry);
    CHECK(p.value == 0.25);
    CHECK_THROWS_AS(risce::est::make_noise_scalar(-1.0, 4, 8, NoiseConvention::per_entry),
                    std::invalid_argument);
}

TEST_CASE("ls single recovers the channel without noise", "[estimators]") {
    RngStream r(41, 0);
    const auto h = random_matrix(5, 4, r);
    const auto sched = risce::pilot::build_single_schedule(1, 4, 8);
    const auto y = risce::num::matmul(h, sched.phi());
    const auto est = risce::est::ls_single(y, sched.phi());
    CHECK(rel_diff(est, h) < 1e-9);

    SECTION("dft closed form matches the general solve") {
        const auto yn = risce::num::add(y, risce::num::sample_cn(5, 8, 0.3, r));
        const auto general = risce::est::ls_single(yn, sched.phi());
        auto closed = risce::num::matmul(yn, risce::num::conj_transpose(sched.phi()));
        closed = risce::num::scale(closed, cxd(1.0 / 8.0, 0));
        CHECK(max_abs_diff(general, closed) < 1e-10);
    }
    SECTION("rank-deficient schedules raise the singular error") {
        ComplexMatrix flat(2, 4);
        for (std::size_t t = 0; t < 4; ++t) {
            flat(0, t) = cxd(1, 0);
            flat(1, t) = cxd(1, 0);
        }
        CHECK_THROWS_AS(risce::est::ls_single(random_matrix(3, 4, r), flat),
                        risce::num::SingularMatrixError);
    }
}

TEST_CASE("ls single residual energy and unbiasedness", "[estimators][slow]") {
    RngStream r(42, 0);
    const std::size_t m = 4, n = 3, slots = 6;
    const auto h = random_matrix(m, n, r);
    const auto sched = risce::pilot::build_single_schedule(1, n, slots);
    const auto clean = risce::num::matmul(h, sched.phi());
    const double sigma2 = 0.8;

    double energy = 0.0;
    ComplexMatrix bias(m, n);
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
        RngStream s = r.derive(static_cast<std::uint64_t>(t));
        const auto y = risce::num::add(clean, risce::num::sample_cn(m, slots, sigma2, s));
        const auto err = risce::num::sub(risce::est::ls_single(y, sched.phi()), h);
        energy += risce::num::fro_norm_sq(err);
        bias = risce::num::add(bias, err);
    }
    const double expected = double(m * n) * sigma2 / double(slots);
    CHECK_THAT(energy / trials, Catch::Matchers::WithinRel(expected, 0.02));

    // Each averaged residual entry has standard error sqrt(sigma2/slots/trials)
    // per complex component.
    const double se = std::sqrt(sigma2 / double(slots) / double(trials) / 2.0);
    for (std::size_t i = 0; i < bias.size(); ++i) {
        CHECK(std::abs(bias.data()[i].real() / trials) < 3.5 * se);
        CHECK(std::abs(bias.data()[i].imag() / trials) < 3.5 * se);
    }
}

TEST_CASE("ls estimates are linear in the observation", "[estimators]") {
    RngStream r(43, 0);
    const auto sched = risce::pilot::build_single_schedule(1, 3, 5);
    const auto y1 = random_matrix(4, 5, r);
    const auto y2 = random_matrix(4, 5, r);
    const cxd alpha(0.7, -1.2);

    auto mix = risce::num::add(risce::num::scale(y1, alpha), y2);
    const auto lhs = risce::est::ls_single(mix, sched.phi());
    const auto rhs = risce::num::add(
        risce::num::scale(risce::est::ls_single(y1, sched.phi()), alpha),
        risce::est::ls_single(y2, sched.phi()));
    CHECK(max_abs_diff(lhs, rhs) < 1e-10);
}

TEST_CASE("lmmse single collapses to ls and to zero in its limits", "[estimators]") {
    RngStream r(44, 0);
    const std::size_t n = 4;
    const auto sched = risce::pilot::build_single_schedule(1, n, n);  // square case
    const auto prior = make_row_prior(n, r);
    const CorrelationMatrix rmat(prior.r0, 1);

    const auto h = prior.draw(5, r);
    const auto y = risce::num::add(risce::num::matmul(h, sched.phi()),
                                   risce::num::sample_cn(5, n, 0.2, r));

    const auto ls = risce::est::ls_single(y, sched.phi());
    const auto lmmse0 = risce::est::lmmse_single(y, sched.phi(), rmat, NoiseScalar{0.0});
    CHECK(max_abs_diff(lmmse0, ls) < 1e-8);

    double tr = 0.0;
    for (std::size_t i = 0; i < n; ++i) tr += prior.r0(i, i).real();
    const auto huge = risce::est::lmmse_single(y, sched.phi(), rmat, NoiseScalar{1e15 * tr});
    for (std::size_t i = 0; i < huge.size(); ++i) CHECK(std::abs(huge.data()[i]) < 1e-10);
}

TEST_CASE("lmmse single dominates ls under the matched prior", "[estimators][slow]") {
    RngStream r(45, 0);
    const std::size_t m = 4, n = 4, slots = 4;
    const auto sched = risce::pilot::build_single_schedule(1, n, slots);
    const auto prior = make_row_prior(n, r);
    const CorrelationMatrix rmat(prior.r0, 1);
    const double sigma2 = 1.0;
    const auto vth = risce::est::make_noise_scalar(sigma2, m, slots,
                                                   NoiseConvention::per_entry);

    double mse_ls = 0.0, mse_lmmse = 0.0;
    const int trials = 2000;
    for (int t = 0; t < trials; ++t) {
        RngStream s = r.derive(static_cast<std::uint64_t>(t));
        const auto h = prior.draw(m, s);
        const auto y = risce::num::add(risce::num::matmul(h, sched.phi()),
                                       risce::num::sample_cn(m, slots, sigma2, s));
        mse_ls += risce::num::fro_norm_sq(
            risce::num::sub(risce::est::ls_single(y, sched.phi()), h));
        mse_lmmse += risce::num::fro_norm_sq(
            risce::num::sub(risce::est::lmmse_single(y, sched.phi(), rmat, vth), h));
    }
    CHECK(mse_lmmse <= mse_ls * 1.01);
}

TEST_CASE("ls double recovers the cascade and its orthonormal shortcut", "[estimators]") {
    RngStream r(46, 0);
    const auto h2k = random_matrix(6, 4, r);
    const auto h3k = random_matrix(4, 4, r);
    const auto y3 = risce::num::matmul(h2k, h3k);
    CHECK(rel_diff(risce::est::ls_double(h2k, y3), h3k) < 1e-9);

    SECTION("orthonormal columns reduce the pinv to the adjoint") {
        const double s = 1.0 / std::sqrt(2.0);
        ComplexMatrix q(8, 4);
        for (std::size_t i = 0; i < 4; ++i) {
            q(i, i) = cxd(s, 0);
            q(i + 4, i) = cxd(0, s);
        }
        const auto y = random_matrix(8, 4, r);
        CHECK(max_abs_diff(risce::est::ls_double(q, y),
                           risce::num::matmul(risce::num::conj_transpose(q), y)) < 1e-12);
    }
    SECTION("wide h2k is rejected") {
        CHECK_THROWS_AS(risce::est::ls_double(random_matrix(3, 4, r), h3k),
                        std::invalid_argument);
    }
    SECTION("rank-deficient h2k raises the singular error") {
        ComplexMatrix flat(6, 2);
        for (std::size_t i = 0; i < 6; ++i) {
            flat(i, 0) = cxd(1, 0);
            flat(i, 1) = cxd(2, 0);
        }
        ComplexMatrix y(6, 2);
        CHECK_THROWS_AS(risce::est::ls_double(flat, y), risce::num::SingularMatrixError);
    }
}

TEST_CASE("ls double residual energy tracks the colored covariance", "[estimators][slow]") {
    RngStream r(47, 0);
    const std::size_t m = 6, n = 4;
    const auto h2k = random_matrix(m, n, r);
    const auto h3k = random_matrix(n, n, r);
    const auto clean = risce::num::matmul(h2k, h3k);
    const double sigma2 = 0.5;

    const auto gram = risce::num::matmul(risce::num::conj_transpose(h2k), h2k);
    const auto ginv = risce::num::solve_hermitian(gram, ComplexMatrix::identity(n));
    double tr = 0.0;
    for (std::size_t i = 0; i < n; ++i) tr += ginv(i, i).real();

    double energy = 0.0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
        RngStream s = r.derive(static_cast<std::uint64_t>(t));
        const auto y3 = risce::num::add(clean, risce::num::sample_cn(m, n, sigma2, s));
        energy += risce::num::fro_norm_sq(
            risce::num::sub(risce::est::ls_double(h2k, y3), h3k));
    }
    CHECK_THAT(energy / trials, Catch::Matchers::WithinRel(sigma2 * double(n) * tr, 0.03));
}

TEST_CASE("lmmse double collapses to ls and to zero in its limits", "[estimators]") {
    RngStream r(48, 0);
    const std::size_t n = 4;
    const auto h2k = random_matrix(6, n, r);
    auto cmix = random_matrix(n, n, r);
    for (std::size_t i = 0; i < n; ++i) cmix(i, i) += 2.0;
    const auto sigma_col = risce::num::matmul(cmix, risce::num::conj_transpose(cmix));
    const CorrelationMatrix rmat(sigma_col, 1);

    const auto h3k = draw_column_prior(cmix, n, r);
    const auto y3 = risce::num::add(risce::num::matmul(h2k, h3k),
                                    risce::num::sample_cn(6, n, 0.2, r));

    const auto ls = risce::est::ls_double(h2k, y3);
    CHECK(max_abs_diff(risce::est::lmmse_double(h2k, y3, rmat, NoiseScalar{0.0}), ls) < 1e-8);

    double tr = 0.0;
    for (std::size_t i = 0; i < n; ++i) tr += sigma_col(i, i).real();
    const auto huge = risce::est::lmmse_double(h2k, y3, rmat, NoiseScalar{1e15 * tr});
    for (std::size_t i = 0; i < huge.size(); ++i) CHECK(std::abs(huge.data()[i]) < 1e-10);
}

TEST_CASE("lmmse double dominates ls under the matched prior", "[estimators][slow]") {
    RngStream r(49, 0);
    const std::size_t m = 6, n = 4;
    const auto h2k = random_matrix(m, n, r);
    auto cmix = random_matrix(n, n, r);
    for (std::size_t i = 0; i < n; ++i) cmix(i, i) += 2.0;
    const auto sigma_col = risce::num::matmul(cmix, risce::num::conj_transpose(cmix));
    const CorrelationMatrix rmat(sigma_col, 1);
    const double sigma2 = 1.0;
    const auto vth = risce::est::make_noise_scalar(sigma2, m, n, NoiseConvention::per_entry);

    double mse_ls = 0.0, mse_lmmse = 0.0;
    const int trials = 2000;
    for (int t = 0; t < trials; ++t) {
        RngStream s = r.derive(static_cast<std::uint64_t>(t));
        const auto h3k = draw_column_prior(cmix, n, s);
        const auto y3 = risce::num::add(risce::num::matmul(h2k, h3k),
                                        risce::num::sample_cn(m, n, sigma2, s));
        mse_ls += risce::num::fro_norm_sq(
            risce::num::sub(risce::est::ls_double(h2k, y3), h3k));
        mse_lmmse += risce::num::fro_norm_sq(
            risce::num::sub(risce::est::lmmse_double(h2k, y3, rmat, vth), h3k));
    }
    CHECK(mse_lmmse <= mse_ls * 1.01);
}

TEST_CASE("empirical correlation matches its closed forms", "[estimators][slow]") {
    CHECK_THROWS_AS(risce::est::empirical_correlation({}), std::invalid_argument);

    const auto single = risce::est::empirical_correlation({ComplexMatrix::identity(3)});
    CHECK(max_abs_diff(single.matrix(), ComplexMatrix::identity(3)) == 0.0);
    CHECK(single.sample_count() == 1);

    const auto zero = risce::est::empirical_correlation({ComplexMatrix(3, 3) ,
                                                         ComplexMatrix(3, 3)});
    CHECK(risce::num::fro_norm_sq(zero.matrix()) == 0.0);

    RngStream r(50, 0);
    std::vector<ComplexMatrix> draws;
    draws.reserve(10000);
    const std::size_t m = 8, n = 4;
    for (int t = 0; t < 10000; ++t) draws.push_back(risce::num::sample_cn(m, n, 1.0, r));
    const auto emp = risce::est::empirical_correlation(draws);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j)
                CHECK_THAT(emp.matrix()(i, j).real(),
                           Catch::Matchers::WithinRel(double(m), 0.05));
            else
                CHECK(std::abs(emp.matrix()(i, j)) < 0.05 * double(m));
        }
}

TEST_CASE("nmse metric identities", "[estimators]") {
    RngStream r(51, 0);
    const auto h = random_matrix(4, 4, r);
    CHECK(risce::est::nmse({h}, {h}) == 0.0);
    CHECK_THAT(risce::est::nmse({ComplexMatrix(4, 4)}, {h}),
               Catch::Matchers::WithinRel(1.0, 1e-12));
    CHECK_THAT(risce::est::nmse({risce::num::scale(h, cxd(2, 0))}, {h}),
               Catch::Matchers::WithinRel(1.0, 1e-12));

    SECTION("zero labels and mismatches are rejected") {
        CHECK_THROWS_AS(risce::est::nmse({h}, {ComplexMatrix(4, 4)}), std::invalid_argument);
        CHECK_THROWS_AS(risce::est::nmse({h}, {random_matrix(3, 3, r)}),
                        std::invalid_argument);
        CHECK_THROWS_AS(risce::est::nmse({}, {}), std::invalid_argument);
    }
    SECTION("batch value is the mean of per-sample ratios") {
        const auto h2 = random_matrix(4, 4, r);
        const auto e1 = random_matrix(4, 4, r);
        const auto e2 = random_matrix(4, 4, r);
        const double batch = risce::est::nmse({e1, e2}, {h, h2});
        const double split =
            0.5 * (risce::est::nmse({e1}, {h}) + risce::est::nmse({e2}, {h2}));
        CHECK_THAT(batch, Catch::Matchers::WithinRel(split, 1e-12));
    }
    SECTION("invariant under simultaneous unitary rotation") {
        const auto sched = risce::pilot::build_single_schedule(1, 4, 4);
        auto u = sched.phi();
        u = risce::num::scale(u, cxd(0.5, 0));  // 4-point DFT over 2 is unitary
        const auto est = random_matrix(4, 4, r);
        const double base = risce::est::nmse({est}, {h});
        const double rotated = risce::est::nmse({risce::num::matmul(u, est)},
                                                {risce::num::matmul(u, h)});
        CHECK_THAT(rotated, Catch::Matchers::WithinAbs(base, 1e-10));
    }
}
