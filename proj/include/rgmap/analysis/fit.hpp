#pragma once

// Mono-exponential T1rho fitting: S(t) = S0 exp(-t / T1rho).

#include "rgmap/core/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>

namespace rgmap::analysis {

struct FitConfig {
    double t1rho_min = 1.0;
    double t1rho_max = 1000.0;
    double intensity_floor = 0.05; // fraction of the series maximum
    int max_lm_iters = 50;
    double lm_tol = 1e-10;
    double lm_lambda0 = 1e-3;

    void validate() const {
        if (!(t1rho_min > 0.0 && t1rho_min < t1rho_max)) throw Error("FitConfig: need 0 < t1rho_min < t1rho_max");
        if (!(intensity_floor >= 0.0)) throw Error("FitConfig: intensity_floor must be nonnegative");
        if (max_lm_iters < 1) throw Error("FitConfig: max_lm_iters must be >= 1");
        if (!(lm_tol > 0.0) || !(lm_lambda0 > 0.0)) throw Error("FitConfig: lm_tol and lm_lambda0 must be positive");
    }
};

struct PixelFit {
    double s0 = 0.0;
    double t1rho_ms = 0.0;
    double residual = 0.0; // sum of squared residuals
    bool converged = false;
    bool valid = false;
};

struct TwoPoint {
    double s0;
    double t1rho_ms;
};

/// Closed-form inversion from two samples; nullopt when s1 <= s2 or s2 <= 0.
inline std::optional<TwoPoint> two_point_fit(double s1, double s2, double t1, double t2) {
    if (!(t1 < t2)) throw Error("two_point_fit: need t1 < t2");
    if (!(s2 > 0.0) || !(s1 > s2)) return std::nullopt;
    const double T = (t2 - t1) / std::log(s1 / s2);
    return TwoPoint{s1 * std::exp(t1 / T), T};
}

inline double monoexp_cost(std::span<const double> s, std::span<const double> t, double s0, double T) {
    double c = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double r = s0 * std::exp(-t[i] / T) - s[i];
        c += r * r;
    }
    return c;
}

/// Levenberg-Marquardt on (S0, T1rho), started from a log-linear regression.
/// `floor` is the absolute intensity below which samples are considered noise.
inline PixelFit fit_monoexp_pixel(std::span<const double> s, std::span<const double> t, const FitConfig& cfg,
                                  double floor) {
    if (s.size() != t.size() || s.size() < 2) throw Error("fit_monoexp_pixel: need >= 2 matching samples");
    PixelFit out;
    if (std::all_of(s.begin(), s.end(), [&](double v) { return v < floor; })) return out;

    // Log-linear start.
    const double lf = std::max(floor, std::numeric_limits<double>::min());
    double mt = 0.0, ml = 0.0;
    const double n = static_cast<double>(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        mt += t[i];
        ml += std::log(std::max(s[i], lf));
    }
    mt /= n;
    ml /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        sxy += (t[i] - mt) * (std::log(std::max(s[i], lf)) - ml);
        sxx += (t[i] - mt) * (t[i] - mt);
    }
    const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
    double T = slope < 0.0 ? -1.0 / slope : cfg.t1rho_max;
    T = std::clamp(T, cfg.t1rho_min, cfg.t1rho_max);
    double s0 = std::exp(ml - slope * mt);
    if (!(slope < 0.0)) s0 = std::exp(ml);

    double cost = monoexp_cost(s, t, s0, T);
    double lambda = cfg.lm_lambda0;
    for (int it = 0; it < cfg.max_lm_iters; ++it) {
        // Normal equations of the Gauss-Newton model, Marquardt-scaled.
        double a00 = 0.0, a01 = 0.0, a11 = 0.0, g0 = 0.0, g1 = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const double e = std::exp(-t[i] / T);
            const double j0 = e, j1 = s0 * e * t[i] / (T * T);
            const double r = s0 * e - s[i];
            a00 += j0 * j0;
            a01 += j0 * j1;
            a11 += j1 * j1;
            g0 += j0 * r;
            g1 += j1 * r;
        }
        bool step_taken = false;
        while (!step_taken) {
            const double b00 = a00 * (1.0 + lambda), b11 = a11 * (1.0 + lambda);
            const double det = b00 * b11 - a01 * a01;
            if (!(std::abs(det) > 0.0) || !std::isfinite(det)) {
                lambda *= 10.0;
                if (lambda > 1e16) break;
                continue;
            }
            const double d0 = (b11 * g0 - a01 * g1) / det;
            const double d1 = (b00 * g1 - a01 * g0) / det;
            const double ns0 = s0 - d0;
            const double nT = std::clamp(T - d1, cfg.t1rho_min, cfg.t1rho_max);
            const double step = std::max(std::abs(ns0 - s0) / std::max(std::abs(s0), 1e-300),
                                         std::abs(nT - T) / T);
            const double nc = monoexp_cost(s, t, ns0, nT);
            if (nc <= cost) {
                s0 = ns0;
                T = nT;
                cost = nc;
                lambda = std::max(lambda / 10.0, 1e-12);
                step_taken = true;
            } else {
                lambda *= 10.0;
            }
            if (step < cfg.lm_tol) {
                out.converged = true;
                break;
            }
            if (lambda > 1e16) break;
        }
        if (out.converged || !step_taken) break;
    }
    out.s0 = s0;
    out.t1rho_ms = T;
    out.residual = cost;
    out.valid = out.converged && std::isfinite(s0) && std::isfinite(T);
    return out;
}

/// Pixel-wise fit of a magnitude series (n_tsl x ny x nx). Pixels whose
/// samples are all below intensity_floor * max(series), or whose fit did not
/// converge, are masked with S0 = T1rho = 0. Two-contrast series use the
/// closed form.
inline ParamMap fit_map(const RArray& series, const std::vector<double>& tsl_ms, const FitConfig& cfg) {
    cfg.validate();
    if (series.ndim() != 3 || series.dim(0) != tsl_ms.size())
        throw ShapeError("fit_map: series shape " + shape_str(series.shape()) + " does not match " +
                         std::to_string(tsl_ms.size()) + " spin-lock times");
    if (tsl_ms.size() < 2) throw Error("fit_map: need at least two contrasts");
    ContrastImageSet::validate_tsl(tsl_ms);
    const std::size_t nt = series.dim(0), ny = series.dim(1), nx = series.dim(2), np = ny * nx;
    double vmax = 0.0;
    for (double v : series.vec()) vmax = std::max(vmax, v);
    const double floor = cfg.intensity_floor * vmax;
    ParamMap out(ny, nx);
    std::vector<double> s(nt);
    for (std::size_t p = 0; p < np; ++p) {
        for (std::size_t i = 0; i < nt; ++i) s[i] = series[i * np + p];
        if (std::all_of(s.begin(), s.end(), [&](double v) { return v < floor; })) {
            out.invalidate(p);
            continue;
        }
        if (nt == 2) {
            const auto tp = two_point_fit(s[0], s[1], tsl_ms[0], tsl_ms[1]);
            if (!tp || !(tp->t1rho_ms >= cfg.t1rho_min && tp->t1rho_ms <= cfg.t1rho_max)) {
                out.invalidate(p);
                continue;
            }
            out.s0[p] = tp->s0;
            out.t1rho_ms[p] = tp->t1rho_ms;
            out.valid_mask[p] = 1;
            continue;
        }
        const PixelFit f = fit_monoexp_pixel(s, tsl_ms, cfg, floor);
        if (!f.valid) {
            out.invalidate(p);
            out.residual[p] = f.residual;
            continue;
        }
        out.s0[p] = f.s0;
        out.t1rho_ms[p] = f.t1rho_ms;
        out.residual[p] = f.residual;
        out.valid_mask[p] = 1;
    }
    return out;
}

inline ParamMap fit_map(const ContrastImageSet& series, const FitConfig& cfg) {
    return fit_map(series.magnitudes(), series.tsl_ms, cfg);
}

} // namespace rgmap::analysis
