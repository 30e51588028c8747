#pragma once

// Closed-form generation of intermediate contrasts from two acquired ones by
// inverting the mono-exponential model pixel by pixel.

#include "rgmap/core/types.hpp"

#include <cmath>

namespace rgmap::gen {

struct AnalyticResult {
    RArray images;   // n_out x ny x nx
    MaskArray valid; // ny x nx; 0 where the inversion was undefined (output 0 there)
};

/// Relative pixel floor below which the logarithm is not taken.
inline constexpr double kAnalyticFloor = 1e-6;

/// img_a, img_b: ny x nx magnitudes at t_a < t_b. `floor` is absolute; use
/// kAnalyticFloor * max(img_a) for the default.
inline AnalyticResult analytic_generate(const RArray& img_a, const RArray& img_b, double t_a, double t_b,
                                        const std::vector<double>& t_out, double floor) {
    require_same_shape(img_a.shape(), img_b.shape(), "analytic_generate");
    if (img_a.ndim() != 2) throw ShapeError("analytic_generate: expected 2-D images");
    if (!(t_a < t_b)) throw Error("analytic_generate: need t_a < t_b");
    for (double t : t_out)
        if (!(t >= 0.0 && t <= 10.0 * t_b))
            throw Error("analytic_generate: output time " + std::to_string(t) + " ms outside [0, " +
                        std::to_string(10.0 * t_b) + "] ms");
    const std::size_t ny = img_a.dim(0), nx = img_a.dim(1), np = ny * nx;
    AnalyticResult out{RArray({t_out.size(), ny, nx}), MaskArray({ny, nx})};
    for (std::size_t p = 0; p < np; ++p) {
        const double a = img_a[p], b = img_b[p];
        if (a < 0.0 || b < 0.0) throw Error("analytic_generate: magnitudes must be nonnegative");
        if (!(a > floor && b > floor) || !(a > b)) continue;
        const double T = (t_b - t_a) / std::log(a / b);
        const double s0 = a * std::exp(t_a / T);
        for (std::size_t k = 0; k < t_out.size(); ++k) out.images[k * np + p] = s0 * std::exp(-t_out[k] / T);
        out.valid[p] = 1;
    }
    return out;
}

inline double max_value(const RArray& a) {
    double m = 0.0;
    for (double v : a.vec()) m = std::max(m, v);
    return m;
}

} // namespace rgmap::gen
