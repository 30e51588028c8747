#pragma once

#include "rgmap/nnet/conv.hpp"

#include <cmath>
#include <vector>

namespace rgmap::nnet {

struct AdamState {
    std::vector<RArray> m, v;
    long t = 0;
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    AdamState() = default;
    explicit AdamState(double learning_rate) : lr(learning_rate) {}
};

/// One bias-corrected Adam step. Moments are created on first use.
inline void adam_step(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads,
                      AdamState& st) {
    if (params.size() != grads.size()) throw ShapeError("adam_step: parameter/gradient count mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
        require_same_shape(params[k].value->shape(), grads[k].value->shape(), "adam_step");
        if (!all_finite(grads[k].value->flat()))
            throw NetError("adam_step: non-finite gradient in " + params[k].name + " at step " +
                           std::to_string(st.t + 1));
    }
    if (st.m.empty()) {
        for (const auto& p : params) {
            st.m.emplace_back(p.value->shape());
            st.v.emplace_back(p.value->shape());
        }
    }
    if (st.m.size() != params.size()) throw ShapeError("adam_step: optimizer state has another layout");
    ++st.t;
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
    for (std::size_t k = 0; k < params.size(); ++k) {
        RArray& p = *params[k].value;
        const RArray& g = *grads[k].value;
        RArray& m = st.m[k];
        RArray& v = st.v[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
            v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
            const double mh = m[i] / c1, vh = v[i] / c2;
            p[i] -= st.lr * mh / (std::sqrt(vh) + st.eps);
        }
    }
}

} // namespace rgmap::nnet
