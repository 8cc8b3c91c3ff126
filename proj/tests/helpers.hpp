// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>

#include "risce/numerics.hpp"

namespace testutil {

using risce::num::ComplexMatrix;
using risce::num::cxd;

inline double max_abs_diff(const ComplexMatrix& a, const ComplexMatrix& b) {
    REQUIRE(a.same_shape(b));
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

/// Frobenius-relative distance |a - b|_F / max(|b|_F, tiny).
inline double rel_diff(const ComplexMatrix& a, const ComplexMatrix& b) {
    const double denom = std::sqrt(risce::num::fro_norm_sq(b));
    const double num = std::sqrt(risce::num::fro_norm_sq(risce::num::sub(a, b)));
    return num / std::max(denom, 1e-300);
}

inline bool bit_identical(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.data()[i] != b.data()[i]) return false;
    return true;
}

/// Random complex matrix with iid CN(0,1) entries for generic algebra tests.
inline ComplexMatrix random_matrix(std::size_t rows, std::size_t cols, risce::RngStream& rng) {
    return risce::num::sample_cn(rows, cols, 1.0, rng);
}

}  // namespace testutil
