#pragma once

// Classical ADMM reconstruction. Each iteration forms the data residual
// d = A m - y, solves the penalized least-squares M-update by CG, shrinks
// m + beta in the sparsifying domain, and takes a dual step.

#include "rgmap/acquisition/operator.hpp"
#include "rgmap/recon/cg.hpp"
#include "rgmap/recon/config.hpp"
#include "rgmap/recon/sparsify.hpp"

#include <string>

namespace rgmap::recon {

struct ADMMState {
    ContrastImageSet m;
    ContrastImageSet z;
    ContrastImageSet beta;
    CArray d; // n_coils x n_tsl x ny x nx
    int iteration = 0;
};

class ReconError : public Error {
public:
    using Error::Error;
};

inline acq::MeasurementOperator make_operator(const acq::KSpaceData& y, const acq::CoilProfile& coils) {
    acq::MeasurementOperator op{coils, y.mask};
    op.validate();
    op.check_kspace(y.y.shape());
    return op;
}

inline std::vector<double> tsl_or_index(const acq::KSpaceData& y) {
    if (!y.tsl_ms.empty()) return y.tsl_ms;
    std::vector<double> t(y.n_tsl());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
    return t;
}

/// A^H y.
inline ContrastImageSet zero_filled(const acq::KSpaceData& y, const acq::CoilProfile& coils) {
    return acq::adjoint(make_operator(y, coils), y);
}

inline ADMMState admm_init(const acq::KSpaceData& y, const acq::CoilProfile& coils) {
    ADMMState s;
    s.m = zero_filled(y, coils);
    s.z = s.m;
    s.beta = ContrastImageSet(CArray(s.m.images.shape()), s.m.tsl_ms);
    s.d = CArray(y.y.shape());
    return s;
}

/// Solves (A^H A + eta I) delta = rhs by CG and returns the result.
inline CArray solve_shifted_normal(const acq::MeasurementOperator& op, double eta, const CArray& rhs,
                                   int iters, double tol, int iteration) {
    CArray delta(rhs.shape());
    CArray tmp;
    const auto apply_h = [&](const CArray& v, CArray& out) {
        op.apply_normal(v, tmp);
        if (out.shape() != v.shape()) out = CArray(v.shape());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = tmp[i] + eta * v[i];
    };
    const CgResult r = conjugate_gradient(apply_h, rhs, delta, iters, tol);
    if (r.diverged || !all_finite(delta.flat()))
        throw ReconError("ADMM iteration " + std::to_string(iteration) +
                         ": conjugate gradient diverged (non-finite residual)");
    return delta;
}

/// beta += eta (m - z).
inline void dual_update(CArray& beta, const CArray& m, const CArray& z, double eta) {
    require_same_shape(beta.shape(), m.shape(), "dual_update");
    require_same_shape(z.shape(), m.shape(), "dual_update");
    for (std::size_t i = 0; i < beta.size(); ++i) beta[i] += eta * (m[i] - z[i]);
}

inline ADMMState admm_step(const ADMMState& state, const acq::MeasurementOperator& op,
                           const acq::KSpaceData& y, const ReconConfig& cfg) {
    cfg.validate();
    op.check_image(state.m.images.shape());
    require_same_shape(state.z.images.shape(), state.m.images.shape(), "admm_step");
    require_same_shape(state.beta.images.shape(), state.m.images.shape(), "admm_step");
    op.check_kspace(y.y.shape());

    if (cfg.reg_relative) throw Error("admm_step: reg_weight must be resolved to an absolute level");

    ADMMState next = state;
    next.iteration = state.iteration + 1;
    const std::size_t n = state.m.images.size();

    // Data residual d = A m - y.
    op.apply(state.m.images, next.d);
    for (std::size_t i = 0; i < next.d.size(); ++i) next.d[i] -= y.y[i];

    // M-update: minimize 1/2 |A m - y|^2 + eta/2 |m - z + beta|^2, written as a
    // correction to the previous m so that A^H d enters explicitly.
    CArray atd;
    op.apply_adjoint(next.d, atd);
    CArray rhs(state.m.images.shape());
    for (std::size_t i = 0; i < n; ++i)
        rhs[i] = -(atd[i] + cfg.eta * (state.m.images[i] - state.z.images[i] + state.beta.images[i]));
    const CArray delta = solve_shifted_normal(op, cfg.eta, rhs, cfg.cg_iters, cfg.cg_tol, next.iteration);
    for (std::size_t i = 0; i < n; ++i) next.m.images[i] = state.m.images[i] + delta[i];

    // Z-update: shrink m + beta.
    for (std::size_t i = 0; i < n; ++i) next.z.images[i] = next.m.images[i] + state.beta.images[i];
    if (cfg.reg_weight > 0.0) shrink_stack(next.z.images, cfg.transform, cfg.reg_weight / cfg.eta);

    dual_update(next.beta.images, next.m.images, next.z.images, cfg.eta);
    return next;
}

inline double max_abs(const CArray& a) {
    double m = 0.0;
    for (const cplx& v : a.vec()) m = std::max(m, std::abs(v));
    return m;
}

/// Runs n_iters ADMM iterations from the zero-filled image and returns m.
inline ContrastImageSet admm_reconstruct(const acq::KSpaceData& y, const acq::CoilProfile& coils,
                                         const acq::SamplingMask& mask, const ReconConfig& cfg) {
    cfg.validate();
    if (cfg.mode != Mode::Classical)
        throw ReconError("admm_reconstruct: learned mode needs a trained model");
    acq::KSpaceData data = y;
    data.mask = mask;
    const auto op = make_operator(data, coils);
    ADMMState s = admm_init(data, coils);
    ReconConfig run = cfg;
    if (cfg.reg_relative) {
        run.reg_weight = cfg.reg_weight * max_abs(s.m.images);
        run.reg_relative = false;
    }
    for (int it = 0; it < cfg.n_iters; ++it) s = admm_step(s, op, data, run);
    return s.m;
}

/// Least-squares (CG-SENSE) solution of A m = y from a zero start.
inline ContrastImageSet cg_sense(const acq::KSpaceData& y, const acq::CoilProfile& coils, int iters,
                                 double tol) {
    const auto op = make_operator(y, coils);
    CArray rhs;
    op.apply_adjoint(y.y, rhs);
    CArray x(rhs.shape());
    const auto apply_h = [&](const CArray& v, CArray& out) { op.apply_normal(v, out); };
    conjugate_gradient(apply_h, rhs, x, iters, tol);
    return ContrastImageSet(std::move(x), tsl_or_index(y));
}

/// |mask * (A m - y)| / |y|.
inline double data_consistency_residual(const acq::MeasurementOperator& op, const CArray& m,
                                        const acq::KSpaceData& y) {
    CArray am;
    op.apply(m, am);
    double num = 0.0;
    for (std::size_t i = 0; i < am.size(); ++i) num += std::norm(am[i] - y.y[i]);
    const double den = norm2(y.y.flat());
    return den > 0.0 ? std::sqrt(num) / den : std::sqrt(num);
}

} // namespace rgmap::recon
