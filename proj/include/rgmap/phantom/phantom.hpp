#pragma once

#include "rgmap/core/types.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace rgmap::phantom {

/// Ellipse in fractional grid coordinates ([0, 1] along each axis).
struct EllipseRegion {
    double cx = 0.5;
    double cy = 0.5;
    double rx = 0.25;
    double ry = 0.25;
    double angle_deg = 0.0;
    double s0 = 1.0;
    double t1rho_ms = 40.0;

    bool operator==(const EllipseRegion&) const = default;

    /// Pixel-center containment test.
    bool contains(double x, double y) const {
        const double th = angle_deg * std::numbers::pi / 180.0;
        const double dx = x - cx;
        const double dy = y - cy;
        const double u = std::cos(th) * dx + std::sin(th) * dy;
        const double v = -std::sin(th) * dx + std::cos(th) * dy;
        return (u / rx) * (u / rx) + (v / ry) * (v / ry) <= 1.0;
    }
};

struct PhantomSpec {
    std::size_t ny = 64;
    std::size_t nx = 64;
    std::vector<EllipseRegion> regions; // later regions overwrite earlier ones

    bool operator==(const PhantomSpec&) const = default;

    void validate() const {
        if (ny < 8 || nx < 8) throw Error("PhantomSpec: grid must be at least 8x8");
        if (regions.empty()) throw Error("PhantomSpec: at least one region required");
        for (std::size_t i = 0; i < regions.size(); ++i) {
            const auto& r = regions[i];
            const std::string at = "PhantomSpec: region " + std::to_string(i) + ": ";
            if (!(r.s0 > 0.0)) throw Error(at + "s0 must be positive");
            if (!(r.t1rho_ms >= 1.0 && r.t1rho_ms <= 1000.0))
                throw Error(at + "t1rho_ms must lie in [1, 1000]");
            if (!(r.rx > 0.0 && r.ry > 0.0)) throw Error(at + "semi-axes must be positive");
        }
    }
};

struct Truth {
    ParamMap params;
    LabelArray labels; // 0 = background, k = regions[k-1]
};

enum class PhaseMode { Zero, SmoothQuadratic };

inline Truth rasterize(const PhantomSpec& spec) {
    spec.validate();
    Truth out{ParamMap(spec.ny, spec.nx), LabelArray({spec.ny, spec.nx}, 0)};
    for (std::size_t iy = 0; iy < spec.ny; ++iy) {
        const double y = (static_cast<double>(iy) + 0.5) / static_cast<double>(spec.ny);
        for (std::size_t ix = 0; ix < spec.nx; ++ix) {
            const double x = (static_cast<double>(ix) + 0.5) / static_cast<double>(spec.nx);
            const std::size_t p = iy * spec.nx + ix;
            for (std::size_t k = spec.regions.size(); k-- > 0;) {
                if (spec.regions[k].contains(x, y)) {
                    out.labels[p] = static_cast<std::int32_t>(k + 1);
                    out.params.s0[p] = spec.regions[k].s0;
                    out.params.t1rho_ms[p] = spec.regions[k].t1rho_ms;
                    out.params.valid_mask[p] = 1;
                    break;
                }
            }
        }
    }
    return out;
}

/// Unit-modulus smooth phase used by PhaseMode::SmoothQuadratic.
inline double smooth_phase(std::size_t iy, std::size_t ix, std::size_t ny, std::size_t nx) {
    const double y = 2.0 * (static_cast<double>(iy) + 0.5) / static_cast<double>(ny) - 1.0;
    const double x = 2.0 * (static_cast<double>(ix) + 0.5) / static_cast<double>(nx) - 1.0;
    return std::numbers::pi * (0.6 * x * x + 0.4 * y * y + 0.25 * x * y) + 0.3 * x - 0.2 * y;
}

/// Mono-exponential signal S(t) = S0 exp(-t / T1rho) on every valid pixel.
inline ContrastImageSet synthesize(const ParamMap& truth, const std::vector<double>& tsl_ms,
                                   PhaseMode phase = PhaseMode::Zero) {
    if (tsl_ms.empty()) throw Error("synthesize: empty spin-lock time list");
    ContrastImageSet::validate_tsl(tsl_ms);
    const std::size_t ny = truth.ny(), nx = truth.nx();
    CArray imgs({tsl_ms.size(), ny, nx});
    for (std::size_t i = 0; i < tsl_ms.size(); ++i) {
        auto slab = imgs.slab(i);
        for (std::size_t iy = 0; iy < ny; ++iy) {
            for (std::size_t ix = 0; ix < nx; ++ix) {
                const std::size_t p = iy * nx + ix;
                if (!truth.valid_mask[p]) continue;
                const double mag = truth.s0[p] * std::exp(-tsl_ms[i] / truth.t1rho_ms[p]);
                if (phase == PhaseMode::Zero) {
                    slab[p] = cplx(mag, 0.0);
                } else {
                    slab[p] = std::polar(mag, smooth_phase(iy, ix, ny, nx));
                }
            }
        }
    }
    return ContrastImageSet(std::move(imgs), tsl_ms);
}

// Presets. Values are representative, not calibrated tissue constants.

inline PhantomSpec knee_preset(std::size_t ny = 128, std::size_t nx = 128) {
    PhantomSpec s{ny, nx, {}};
    s.regions = {
        {0.50, 0.50, 0.46, 0.47, 0.0, 0.45, 30.0},  // muscle / soft tissue
        {0.50, 0.33, 0.36, 0.23, 0.0, 0.80, 45.0},  // femoral cartilage
        {0.50, 0.31, 0.33, 0.20, 0.0, 0.55, 32.0},  // femur
        {0.50, 0.69, 0.34, 0.21, 0.0, 0.85, 55.0},  // tibial cartilage
        {0.50, 0.71, 0.31, 0.18, 0.0, 0.55, 32.0},  // tibia
        {0.78, 0.50, 0.06, 0.04, 20.0, 0.90, 60.0}, // meniscus-adjacent cartilage
        {0.24, 0.52, 0.05, 0.08, -15.0, 0.95, 120.0} // joint fluid
    };
    return s;
}

inline PhantomSpec brain_preset(std::size_t ny = 128, std::size_t nx = 128) {
    PhantomSpec s{ny, nx, {}};
    s.regions = {
        {0.50, 0.50, 0.44, 0.47, 0.0, 1.00, 150.0},  // CSF rim
        {0.50, 0.50, 0.40, 0.43, 0.0, 0.85, 80.0},   // gray matter
        {0.50, 0.50, 0.30, 0.34, 0.0, 0.70, 60.0},   // white matter
        {0.42, 0.48, 0.05, 0.14, 12.0, 1.00, 150.0}, // ventricle
        {0.58, 0.48, 0.05, 0.14, -12.0, 1.00, 150.0},
        {0.50, 0.75, 0.09, 0.05, 0.0, 0.85, 80.0}    // deep gray
    };
    return s;
}

inline PhantomSpec preset(const std::string& name, std::size_t ny, std::size_t nx) {
    if (name == "knee-like" || name == "knee") return knee_preset(ny, nx);
    if (name == "brain-like" || name == "brain") return brain_preset(ny, nx);
    throw Error("unknown phantom preset '" + name + "'");
}

struct RandomPhantomOptions {
    std::size_t min_regions = 3;
    std::size_t max_regions = 7;
    double s0_min = 0.4;
    double s0_max = 1.0;
    double t1rho_min = 30.0;
    double t1rho_max = 120.0;
};

/// Random ellipse phantom: a body ellipse followed by smaller inclusions
/// placed inside it.
inline PhantomSpec random_phantom(std::size_t ny, std::size_t nx, Seed seed,
                                  const RandomPhantomOptions& opt = {}) {
    Rng rng(seed);
    PhantomSpec s{ny, nx, {}};
    auto tissue = [&](EllipseRegion& r) {
        r.s0 = rng.uniform(opt.s0_min, opt.s0_max);
        r.t1rho_ms = rng.uniform(opt.t1rho_min, opt.t1rho_max);
    };
    EllipseRegion body;
    body.cx = rng.uniform(0.46, 0.54);
    body.cy = rng.uniform(0.46, 0.54);
    body.rx = rng.uniform(0.34, 0.44);
    body.ry = rng.uniform(0.34, 0.44);
    body.angle_deg = rng.uniform(-30.0, 30.0);
    tissue(body);
    s.regions.push_back(body);

    const std::size_t extra =
        opt.min_regions - 1 + rng.below(opt.max_regions - opt.min_regions + 1);
    for (std::size_t k = 0; k < extra; ++k) {
        EllipseRegion r;
        const double rad = std::sqrt(rng.uniform()) * 0.55;
        const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
        r.cx = body.cx + rad * body.rx * std::cos(ang);
        r.cy = body.cy + rad * body.ry * std::sin(ang);
        r.rx = rng.uniform(0.05, 0.18);
        r.ry = rng.uniform(0.05, 0.18);
        r.angle_deg = rng.uniform(-90.0, 90.0);
        tissue(r);
        s.regions.push_back(r);
    }
    return s;
}

} // namespace rgmap::phantom
