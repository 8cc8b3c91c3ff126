// SPDX-License-Identifier: Apache-2.0
//
// Adam with decoupled weight decay. Moment buffers live beside the
// hyperparameters so a training loop owns exactly one state object per
// parameter set.

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "risce/nn/tensor.hpp"

namespace risce::nn {

template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    Parameter(std::string n, Tensor<T> init)
        : name(std::move(n)), value(std::move(init)), grad(value.shape) {}

    void zero_grad() { grad.v.assign(grad.v.size(), T(0)); }
};

template <typename T>
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    std::size_t step_count = 0;
    std::vector<Tensor<T>> m;  // first moments, one per parameter
    std::vector<Tensor<T>> v;  // second moments
};

/// One optimizer step over all parameters. Decay is decoupled: it shrinks
/// the weight directly by lr*wd*w and never enters the moment estimates.
template <typename T>
void adam_step(std::vector<Parameter<T>>& params, AdamState<T>& st) {
    if (st.m.empty()) {
        for (const Parameter<T>& p : params) {
            st.m.emplace_back(p.value.shape);
            st.v.emplace_back(p.value.shape);
        }
    }
    if (st.m.size() != params.size())
        throw std::invalid_argument("adam_step: state holds " + std::to_string(st.m.size()) +
                                    " moment buffers for " + std::to_string(params.size()) +
                                    " parameters");
    st.step_count += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter<T>& p = params[i];
        if (!p.value.same_shape(st.m[i]))
            throw std::invalid_argument("adam_step: parameter " + p.name +
                                        " changed shape after the first step");
        Tensor<T>& m = st.m[i];
        Tensor<T>& v = st.v[i];
        for (std::size_t j = 0; j < p.value.v.size(); ++j) {
            const double g = static_cast<double>(p.grad.v[j]);
            const double mj = st.beta1 * static_cast<double>(m.v[j]) + (1.0 - st.beta1) * g;
            const double vj =
                st.beta2 * static_cast<double>(v.v[j]) + (1.0 - st.beta2) * g * g;
            m.v[j] = static_cast<T>(mj);
            v.v[j] = static_cast<T>(vj);
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            double w = static_cast<double>(p.value.v[j]);
            w -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
            w -= st.lr * st.weight_decay * static_cast<double>(p.value.v[j]);
            p.value.v[j] = static_cast<T>(w);
        }
    }
}

}  // namespace risce::nn
