#pragma once

#include "rgmap/core/types.hpp"

#include <cmath>
#include <numbers>

namespace rgmap::acq {

/// Receive sensitivities, n_coils x ny x nx, sum-of-squares normalized.
struct CoilProfile {
    CArray sens;

    CoilProfile() = default;
    explicit CoilProfile(CArray s) : sens(std::move(s)) {
        if (sens.ndim() != 3) throw ShapeError("CoilProfile: expected n_coils x ny x nx");
    }

    std::size_t n_coils() const { return sens.dim(0); }
    std::size_t ny() const { return sens.dim(1); }
    std::size_t nx() const { return sens.dim(2); }

    /// Largest deviation of sum_c |s_c|^2 from one.
    double sos_deviation() const {
        const std::size_t np = ny() * nx();
        double worst = 0.0;
        for (std::size_t p = 0; p < np; ++p) {
            double s = 0.0;
            for (std::size_t c = 0; c < n_coils(); ++c) s += std::norm(sens[c * np + p]);
            worst = std::max(worst, std::abs(s - 1.0));
        }
        return worst;
    }
};

/// Smooth synthetic coil array: Gaussian-like magnitude lobes around the
/// field of view with a low-order harmonic ripple and a linear phase per coil.
inline CoilProfile make_coils(std::size_t n_coils, std::size_t ny, std::size_t nx, Seed seed) {
    if (n_coils < 1) throw Error("make_coils: need at least one coil");
    if (n_coils == 1) return CoilProfile(CArray({1, ny, nx}, cplx(1.0, 0.0)));

    Rng rng(seed);
    const std::size_t np = ny * nx;
    CArray sens({n_coils, ny, nx});
    for (std::size_t c = 0; c < n_coils; ++c) {
        const double jitter = rng.uniform(-0.3, 0.3) * std::numbers::pi / static_cast<double>(n_coils);
        const double theta = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(n_coils) + jitter;
        const double rho = rng.uniform(0.9, 1.2);
        const double xc = rho * std::cos(theta), yc = rho * std::sin(theta);
        const double width = rng.uniform(0.7, 1.0);
        const double u = rng.uniform(-1.0, 1.0), v = rng.uniform(-1.0, 1.0), psi = rng.uniform(0.0, 6.283);
        const double ripple = rng.uniform(0.05, 0.15);
        const double ph0 = rng.uniform(-std::numbers::pi, std::numbers::pi);
        const double gx = rng.uniform(-0.8, 0.8), gy = rng.uniform(-0.8, 0.8);
        for (std::size_t iy = 0; iy < ny; ++iy) {
            const double y = 2.0 * (static_cast<double>(iy) + 0.5) / static_cast<double>(ny) - 1.0;
            for (std::size_t ix = 0; ix < nx; ++ix) {
                const double x = 2.0 * (static_cast<double>(ix) + 0.5) / static_cast<double>(nx) - 1.0;
                const double d2 = (x - xc) * (x - xc) + (y - yc) * (y - yc);
                double mag = std::exp(-d2 / (2.0 * width * width));
                mag *= 1.0 + ripple * std::cos(std::numbers::pi * (u * x + v * y) + psi);
                const double ph = ph0 + gx * x + gy * y;
                sens[c * np + iy * nx + ix] = std::polar(mag, ph);
            }
        }
    }
    for (std::size_t p = 0; p < np; ++p) {
        double s = 0.0;
        for (std::size_t c = 0; c < n_coils; ++c) s += std::norm(sens[c * np + p]);
        const double inv = 1.0 / std::sqrt(s);
        for (std::size_t c = 0; c < n_coils; ++c) sens[c * np + p] *= inv;
    }
    return CoilProfile(std::move(sens));
}

/// out[p] = sum_c conj(sens_c[p]) * per_coil_c[p].
inline ComplexImage coil_combine(const CArray& per_coil, const CoilProfile& coils) {
    require_same_shape(per_coil.shape(), coils.sens.shape(), "coil_combine");
    const std::size_t np = coils.ny() * coils.nx();
    CArray out({coils.ny(), coils.nx()});
    for (std::size_t c = 0; c < coils.n_coils(); ++c)
        for (std::size_t p = 0; p < np; ++p)
            out[p] += std::conj(coils.sens[c * np + p]) * per_coil[c * np + p];
    return ComplexImage(std::move(out));
}

} // namespace rgmap::acq
