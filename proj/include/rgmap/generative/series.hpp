#pragma once

// Full contrast series from the two acquired images plus generated ones.

#include "rgmap/generative/analytic.hpp"
#include "rgmap/generative/model.hpp"

#include <functional>

namespace rgmap::gen {

/// Maps (first, last) acquired magnitudes (ny x nx each) to the J middle
/// contrasts (J x ny x nx).
using Generator = std::function<RArray(const RArray& first, const RArray& last)>;

inline Generator model_generator(const GenModel& model) {
    return [&model](const RArray& a, const RArray& b) {
        require_same_shape(a.shape(), b.shape(), "model_generator");
        const std::size_t np = a.size();
        nnet::RealTensor x({2, a.dim(0), a.dim(1)});
        std::copy(a.vec().begin(), a.vec().end(), x.data());
        std::copy(b.vec().begin(), b.vec().end(), x.data() + np);
        return gen_forward(model, x);
    };
}

/// Closed-form inversion; undefined pixels come out as 0.
inline Generator analytic_generator(double t_a, double t_b, std::vector<double> t_mid) {
    return [=](const RArray& a, const RArray& b) {
        return analytic_generate(a, b, t_a, t_b, t_mid, kAnalyticFloor * max_value(a)).images;
    };
}

inline Generator analytic_generator(const std::vector<double>& tsl_full) {
    if (tsl_full.size() < 3) throw Error("analytic_generator: need at least three spin-lock times");
    return analytic_generator(tsl_full.front(), tsl_full.back(),
                              std::vector<double>(tsl_full.begin() + 1, tsl_full.end() - 1));
}

/// Acquired magnitudes at the end slots, generated ones in between. The
/// result is real-valued (stored as complex with zero imaginary part).
inline ContrastImageSet generate_full_series(const ContrastImageSet& acquired, const Generator& g,
                                             const std::vector<double>& tsl_full) {
    acquired.validate();
    ContrastImageSet::validate_tsl(tsl_full);
    if (acquired.n_tsl() != 2) throw Error("generate_full_series: expected two acquired contrasts");
    if (tsl_full.size() < 3) throw Error("generate_full_series: full series needs at least three spin-lock times");
    if (acquired.tsl_ms[0] != tsl_full.front() || acquired.tsl_ms[1] != tsl_full.back())
        throw Error("generate_full_series: acquired spin-lock times must be the first and last of the full series");
    const std::size_t ny = acquired.ny(), nx = acquired.nx(), np = ny * nx, n = tsl_full.size();
    const RArray mag = acquired.magnitudes();
    RArray a({ny, nx}, std::vector<double>(mag.data(), mag.data() + np));
    RArray b({ny, nx}, std::vector<double>(mag.data() + np, mag.data() + 2 * np));
    const RArray mid = g(a, b);
    if (mid.shape() != Shape{n - 2, ny, nx})
        throw ShapeError("generate_full_series: generator returned " + shape_str(mid.shape()) + ", expected " +
                         shape_str({n - 2, ny, nx}));
    CArray out({n, ny, nx});
    for (std::size_t p = 0; p < np; ++p) {
        out[p] = a[p];
        out[(n - 1) * np + p] = b[p];
    }
    for (std::size_t k = 0; k < mid.size(); ++k) out[np + k] = mid[k];
    return ContrastImageSet(std::move(out), tsl_full);
}

} // namespace rgmap::gen
