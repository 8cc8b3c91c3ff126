// SPDX-License-Identifier: Apache-2.0
//
// Central-difference verification of tape gradients. Build functions run in
// 64-bit mode; the production nets use 32-bit tensors, so graphs under test
// must be written against the element type of the tape they are given.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "risce/nn/tape.hpp"
#include "risce/nn/tensor.hpp"

namespace risce::nn {

/// Compares the tape gradient of a scalar-valued graph against central
/// finite differences at `point` and returns the worst relative error,
/// max over coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
///
/// `build` receives a fresh tape plus the node holding the point and must
/// return the scalar root; everything else it needs comes via capture.
template <typename BuildFn>
double grad_check(BuildFn&& build, const Tensor<double>& point, double step = 1e-5) {
    Tape<double> tape;
    const auto x = tape.input(point);
    const auto root = build(tape, x);
    if (tape.value(root).numel() != 1)
        throw std::invalid_argument("grad_check: build function must return a scalar node");
    tape.backward(root);
    const Tensor<double> analytic = tape.grad(x);

    const auto eval = [&](const Tensor<double>& p) {
        Tape<double> t;
        const auto xx = t.input(p);
        return t.value(build(t, xx)).v[0];
    };

    Tensor<double> p = point;
    double worst = 0.0;
    for (std::size_t i = 0; i < p.v.size(); ++i) {
        const double orig = p.v[i];
        p.v[i] = orig + step;
        const double fp = eval(p);
        p.v[i] = orig - step;
        const double fm = eval(p);
        p.v[i] = orig;
        const double numeric = (fp - fm) / (2.0 * step);
        const double a = analytic.v[i];
        const double err =
            std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace risce::nn
