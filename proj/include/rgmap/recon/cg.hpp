#pragma once

#include "rgmap/core/array.hpp"

#include <cmath>
#include <functional>

namespace rgmap::recon {

struct CgResult {
    int iterations = 0;
    double rel_residual = 0.0;
    bool diverged = false;
};

/// Conjugate gradient for H x = b with H Hermitian positive (semi)definite.
/// `x` holds the starting guess on entry.
inline CgResult conjugate_gradient(const std::function<void(const CArray&, CArray&)>& apply_h,
                                   const CArray& b, CArray& x, int max_iters, double tol) {
    require_same_shape(b.shape(), x.shape(), "conjugate_gradient");
    CgResult res;
    const std::size_t n = b.size();
    CArray r(b.shape()), p(b.shape()), hp(b.shape());
    apply_h(x, hp);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - hp[i];
    p = r;
    const double bnorm = norm2(b.flat());
    double rr = norm2_sq(r.flat());
    if (!std::isfinite(bnorm) || !std::isfinite(rr)) {
        res.diverged = true;
        return res;
    }
    if (bnorm == 0.0 && rr == 0.0) return res;
    const double scale = bnorm > 0.0 ? bnorm : 1.0;
    res.rel_residual = std::sqrt(rr) / scale;
    for (int it = 0; it < max_iters && res.rel_residual > tol; ++it) {
        apply_h(p, hp);
        const double php = inner(p.flat(), hp.flat()).real();
        if (!std::isfinite(php) || !std::isfinite(rr)) {
            res.diverged = true;
            return res;
        }
        if (php <= 0.0) break;
        const double alpha = rr / php;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * hp[i];
        }
        const double rr_new = norm2_sq(r.flat());
        const double beta = rr_new / rr;
        rr = rr_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
        res.iterations = it + 1;
        res.rel_residual = std::sqrt(rr) / scale;
        if (!std::isfinite(rr)) {
            res.diverged = true;
            return res;
        }
    }
    return res;
}

} // namespace rgmap::recon
