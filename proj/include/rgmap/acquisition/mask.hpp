#pragma once

#include "rgmap/core/types.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace rgmap::acq {

/// Per-contrast k-space sampling pattern (n_tsl x ny x nx, 1 = acquired).
struct SamplingMask {
    MaskArray mask;
    double r_target = 1.0;
    double calib_frac = 1.0 / 16.0;

    std::size_t n_tsl() const { return mask.dim(0); }
    std::size_t ny() const { return mask.dim(1); }
    std::size_t nx() const { return mask.dim(2); }

    std::size_t sampled(std::size_t i) const {
        auto s = mask.slab(i);
        return static_cast<std::size_t>(std::count(s.begin(), s.end(), std::uint8_t{1}));
    }

    /// Total points / sampled points for contrast i.
    double realized_acceleration(std::size_t i) const {
        return static_cast<double>(ny() * nx()) / static_cast<double>(sampled(i));
    }

    static SamplingMask full(std::size_t n_tsl, std::size_t ny, std::size_t nx) {
        return SamplingMask{MaskArray({n_tsl, ny, nx}, 1), 1.0, 0.0};
    }
};

class MaskError : public Error {
public:
    using Error::Error;
};

struct CalibBlock {
    std::size_t y0 = 0, y1 = 0, x0 = 0, x1 = 0; // half-open

    bool contains(std::size_t iy, std::size_t ix) const {
        return iy >= y0 && iy < y1 && ix >= x0 && ix < x1;
    }
};

inline CalibBlock calib_block(std::size_t ny, std::size_t nx, double calib_frac) {
    if (calib_frac <= 0.0) return {};
    const auto side = [](std::size_t n, double f) {
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(f * static_cast<double>(n))));
    };
    const std::size_t cy = side(ny, calib_frac), cx = side(nx, calib_frac);
    const std::size_t y0 = ny / 2 - cy / 2, x0 = nx / 2 - cx / 2;
    return {y0, y0 + cy, x0, x0 + cx};
}

namespace detail {

/// Random sequential addition over grid points: a candidate is accepted when
/// no already accepted point lies closer than r(k) = r0 (1 + alpha * rho(k)),
/// rho being the normalized distance from the k-space origin.
class PoissonDiscSampler {
public:
    PoissonDiscSampler(std::size_t ny, std::size_t nx, double calib_frac, Seed seed)
        : ny_(ny), nx_(nx), calib_(calib_block(ny, nx, calib_frac)), rho_(ny * nx),
          order_(ny * nx) {
        const double cy = static_cast<double>(ny / 2), cx = static_cast<double>(nx / 2);
        const double hy = std::max(1.0, static_cast<double>(ny) / 2.0);
        const double hx = std::max(1.0, static_cast<double>(nx) / 2.0);
        for (std::size_t iy = 0; iy < ny; ++iy)
            for (std::size_t ix = 0; ix < nx; ++ix) {
                const double dy = (static_cast<double>(iy) - cy) / hy;
                const double dx = (static_cast<double>(ix) - cx) / hx;
                rho_[iy * nx + ix] = std::min(1.0, std::sqrt(dy * dy + dx * dx) / std::sqrt(2.0));
            }
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        Rng rng(seed);
        rng.shuffle(order_);
    }

    std::size_t calib_count() const { return (calib_.y1 - calib_.y0) * (calib_.x1 - calib_.x0); }

    std::size_t run(double alpha, double r0, MaskArray* out) const {
        std::vector<std::uint8_t> occ(ny_ * nx_, 0);
        std::size_t count = 0;
        for (std::size_t iy = calib_.y0; iy < calib_.y1; ++iy)
            for (std::size_t ix = calib_.x0; ix < calib_.x1; ++ix) {
                occ[iy * nx_ + ix] = 1;
                ++count;
            }
        for (std::size_t p : order_) {
            if (occ[p]) continue;
            const double r = r0 * (1.0 + alpha * rho_[p]);
            if (free_within(occ, p, r)) {
                occ[p] = 1;
                ++count;
            }
        }
        if (out) *out = MaskArray({ny_, nx_}, std::move(occ));
        return count;
    }

private:
    bool free_within(const std::vector<std::uint8_t>& occ, std::size_t p, double r) const {
        const long iy = static_cast<long>(p / nx_), ix = static_cast<long>(p % nx_);
        const long w = static_cast<long>(std::ceil(r)) - 1;
        const double r2 = r * r;
        const long y0 = std::max(0L, iy - w), y1 = std::min(static_cast<long>(ny_) - 1, iy + w);
        const long x0 = std::max(0L, ix - w), x1 = std::min(static_cast<long>(nx_) - 1, ix + w);
        for (long y = y0; y <= y1; ++y) {
            const double dy2 = static_cast<double>((y - iy) * (y - iy));
            const std::uint8_t* row = occ.data() + static_cast<std::size_t>(y) * nx_;
            for (long x = x0; x <= x1; ++x) {
                if (!row[x]) continue;
                if (dy2 + static_cast<double>((x - ix) * (x - ix)) < r2) return false;
            }
        }
        return true;
    }

    std::size_t ny_, nx_;
    CalibBlock calib_;
    std::vector<double> rho_;
    std::vector<std::size_t> order_;
};

} // namespace detail

struct PoissonOptions {
    double r0 = 1.0;              // minimum dart distance at the k-space origin (grid units)
    int max_bisection = 60;
    double stop_rel = 0.002;      // stop bisecting once |count - target| <= stop_rel * target
    double accept_rel = 0.05;     // realized acceleration tolerance
};

/// Variable-density Poisson-disc mask with fully sampled calibration block.
/// The density slope alpha is bisected until the realized acceleration hits
/// r_target.
inline MaskArray make_poisson_mask(std::size_t ny, std::size_t nx, double r_target,
                                   double calib_frac, Seed seed, const PoissonOptions& opt = {}) {
    if (!(r_target >= 1.0)) throw MaskError("make_poisson_mask: r_target must be >= 1");
    if (!(calib_frac >= 0.0 && calib_frac < 1.0))
        throw MaskError("make_poisson_mask: calib_frac must lie in [0, 1)");
    const std::size_t total = ny * nx;
    if (r_target == 1.0) return MaskArray({ny, nx}, 1);

    const double target = static_cast<double>(total) / r_target;
    detail::PoissonDiscSampler sampler(ny, nx, calib_frac, seed);
    const auto within = [&](std::size_t count) {
        const double acc = static_cast<double>(total) / static_cast<double>(count);
        const double rel_count = std::abs(static_cast<double>(count) - target) / target;
        return std::abs(acc - r_target) <= opt.accept_rel * r_target && rel_count <= opt.accept_rel;
    };

    double lo = 0.0, hi = 1.0;
    std::size_t best_count = total;
    double best_alpha = 0.0;
    const auto consider = [&](double alpha, std::size_t count) {
        if (std::abs(static_cast<double>(count) - target) <
            std::abs(static_cast<double>(best_count) - target)) {
            best_count = count;
            best_alpha = alpha;
        }
    };
    for (;;) {
        const std::size_t c = sampler.run(hi, opt.r0, nullptr);
        consider(hi, c);
        if (static_cast<double>(c) < target) break;
        lo = hi;
        hi *= 2.0;
        if (hi > 1e5)
            throw MaskError("make_poisson_mask: acceleration " + std::to_string(r_target) +
                            " is infeasible on a " + std::to_string(ny) + "x" + std::to_string(nx) +
                            " grid");
    }
    for (int it = 0; it < opt.max_bisection; ++it) {
        if (std::abs(static_cast<double>(best_count) - target) <= opt.stop_rel * target) break;
        const double mid = 0.5 * (lo + hi);
        const std::size_t c = sampler.run(mid, opt.r0, nullptr);
        consider(mid, c);
        if (static_cast<double>(c) >= target)
            lo = mid;
        else
            hi = mid;
    }
    if (!within(best_count))
        throw MaskError("make_poisson_mask: bisection bounds exhausted; closest acceleration " +
                        std::to_string(static_cast<double>(total) / static_cast<double>(best_count)) +
                        " for target " + std::to_string(r_target));
    MaskArray out;
    sampler.run(best_alpha, opt.r0, &out);
    return out;
}

/// One mask per contrast, each from its own derived seed. Contrast 0 uses
/// `seed` itself, so a single-contrast set equals make_poisson_mask(seed).
inline SamplingMask make_mask_set(std::size_t ny, std::size_t nx, std::size_t n_tsl,
                                  double r_target, double calib_frac, Seed seed,
                                  const PoissonOptions& opt = {}) {
    if (n_tsl < 1) throw MaskError("make_mask_set: need at least one contrast");
    SamplingMask out{MaskArray({n_tsl, ny, nx}), r_target, calib_frac};
    for (std::size_t i = 0; i < n_tsl; ++i) {
        MaskArray m;
        for (std::uint64_t attempt = 0;; ++attempt) {
            const Seed s = (i == 0 && attempt == 0) ? seed : derive(seed, i + 1000 * attempt);
            m = make_poisson_mask(ny, nx, r_target, calib_frac, s, opt);
            bool duplicate = false;
            if (r_target > 1.0) {
                for (std::size_t j = 0; j < i && !duplicate; ++j) {
                    auto prev = out.mask.slab(j);
                    duplicate = std::equal(prev.begin(), prev.end(), m.vec().begin());
                }
            }
            if (!duplicate) break;
        }
        std::copy(m.vec().begin(), m.vec().end(), out.mask.slab(i).begin());
    }
    return out;
}

} // namespace rgmap::acq
