#pragma once

// Sparsifying transforms and their shrinkage operators.

#include "rgmap/recon/config.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace rgmap::recon {

inline double soft_threshold(double x, double t) {
    const double a = std::abs(x) - t;
    return a > 0.0 ? std::copysign(a, x) : 0.0;
}

/// Complex soft threshold: shrinks the modulus, keeps the phase.
inline cplx soft_threshold(cplx c, double t) {
    const double a = std::abs(c);
    return a > t ? c * ((a - t) / a) : cplx{};
}

/// Backward of the complex soft threshold for gradient g = dL/dRe + i dL/dIm.
/// Adds dL/dt to `gt`.
inline cplx soft_threshold_backward(cplx c, double t, cplx g, double& gt) {
    const double a = std::abs(c);
    if (!(a > t)) return cplx{};
    const cplx u = c / a;
    const double proj = (std::conj(u) * g).real();
    gt -= proj;
    return (1.0 - t / a) * g + (t / a) * proj * u;
}

namespace detail {

// One Haar level along a strided line. Coefficients land as [approx | detail],
// with the unpaired last sample of an odd line kept in place.
inline void haar_line(cplx* x, std::size_t n, std::size_t stride, std::vector<cplx>& buf, bool inverse) {
    const std::size_t h = n / 2;
    const double s = 1.0 / std::sqrt(2.0);
    buf.resize(n);
    if (!inverse) {
        for (std::size_t k = 0; k < h; ++k) {
            const cplx a = x[2 * k * stride], b = x[(2 * k + 1) * stride];
            buf[k] = s * (a + b);
            buf[h + k] = s * (a - b);
        }
    } else {
        for (std::size_t k = 0; k < h; ++k) {
            const cplx a = x[k * stride], d = x[(h + k) * stride];
            buf[2 * k] = s * (a + d);
            buf[2 * k + 1] = s * (a - d);
        }
    }
    if (n % 2) buf[n - 1] = x[(n - 1) * stride];
    for (std::size_t k = 0; k < n; ++k) x[k * stride] = buf[k];
}

inline bool haar_is_detail(std::size_t i, std::size_t n) { return i >= n / 2 && i < 2 * (n / 2); }

} // namespace detail

/// Single-level orthonormal 2-D Haar transform of one ny x nx image, in place.
inline void haar2d(std::span<cplx> img, std::size_t ny, std::size_t nx, bool inverse = false) {
    std::vector<cplx> buf;
    const auto rows = [&] {
        for (std::size_t y = 0; y < ny; ++y) detail::haar_line(img.data() + y * nx, nx, 1, buf, inverse);
    };
    const auto cols = [&] {
        for (std::size_t x = 0; x < nx; ++x) detail::haar_line(img.data() + x, ny, nx, buf, inverse);
    };
    if (!inverse) {
        rows();
        cols();
    } else {
        cols();
        rows();
    }
}

/// Soft-thresholds the Haar detail bands of one image; the coarse band is left alone.
inline void haar_shrink(std::span<cplx> img, std::size_t ny, std::size_t nx, double t) {
    haar2d(img, ny, nx);
    for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t x = 0; x < nx; ++x)
            if (detail::haar_is_detail(y, ny) || detail::haar_is_detail(x, nx))
                img[y * nx + x] = soft_threshold(img[y * nx + x], t);
    haar2d(img, ny, nx, true);
}

/// Backward of haar_shrink at input `v`: returns dL/dv for upstream `g`, adds dL/dt to `gt`.
inline void haar_shrink_backward(std::span<const cplx> v, std::span<const cplx> g, std::size_t ny,
                                 std::size_t nx, double t, std::span<cplx> gv, double& gt) {
    std::vector<cplx> c(v.begin(), v.end());
    std::copy(g.begin(), g.end(), gv.begin());
    haar2d(c, ny, nx);
    // The transform is real orthogonal, so its adjoint is its inverse.
    haar2d(gv, ny, nx);
    for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t x = 0; x < nx; ++x)
            if (detail::haar_is_detail(y, ny) || detail::haar_is_detail(x, nx)) {
                const std::size_t p = y * nx + x;
                gv[p] = soft_threshold_backward(c[p], t, gv[p], gt);
            }
    haar2d(gv, ny, nx, true);
}

/// Shrinkage on neighbouring-pixel differences: Haar detail shrinkage averaged
/// over the four half-pixel shifts, so every horizontal and vertical pair is
/// visited once.
inline void difference_shrink(std::span<cplx> img, std::size_t ny, std::size_t nx, double t) {
    std::vector<cplx> acc(img.size()), shifted(img.size());
    for (std::size_t sy = 0; sy < 2; ++sy)
        for (std::size_t sx = 0; sx < 2; ++sx) {
            for (std::size_t y = 0; y < ny; ++y)
                for (std::size_t x = 0; x < nx; ++x)
                    shifted[y * nx + x] = img[((y + sy) % ny) * nx + (x + sx) % nx];
            haar_shrink(shifted, ny, nx, t);
            for (std::size_t y = 0; y < ny; ++y)
                for (std::size_t x = 0; x < nx; ++x)
                    acc[((y + sy) % ny) * nx + (x + sx) % nx] += shifted[y * nx + x];
        }
    for (std::size_t p = 0; p < img.size(); ++p) img[p] = 0.25 * acc[p];
}

inline void difference_shrink_backward(std::span<const cplx> v, std::span<const cplx> g, std::size_t ny,
                                      std::size_t nx, double t, std::span<cplx> gv, double& gt) {
    std::vector<cplx> sv(v.size()), sg(v.size()), sgv(v.size());
    std::fill(gv.begin(), gv.end(), cplx{});
    double gt_local = 0.0;
    for (std::size_t sy = 0; sy < 2; ++sy)
        for (std::size_t sx = 0; sx < 2; ++sx) {
            for (std::size_t y = 0; y < ny; ++y)
                for (std::size_t x = 0; x < nx; ++x) {
                    const std::size_t src = ((y + sy) % ny) * nx + (x + sx) % nx;
                    sv[y * nx + x] = v[src];
                    sg[y * nx + x] = 0.25 * g[src];
                }
            haar_shrink_backward(sv, sg, ny, nx, t, sgv, gt_local);
            for (std::size_t y = 0; y < ny; ++y)
                for (std::size_t x = 0; x < nx; ++x) gv[((y + sy) % ny) * nx + (x + sx) % nx] += sgv[y * nx + x];
        }
    gt += gt_local;
}

/// Applies the shrinkage of `tr` to every image of an n x ny x nx stack.
inline void shrink_stack(CArray& stack, Transform tr, double t) {
    const std::size_t ny = stack.dim(1), nx = stack.dim(2);
    for (std::size_t i = 0; i < stack.dim(0); ++i) {
        if (tr == Transform::HaarWavelet)
            haar_shrink(stack.slab(i), ny, nx, t);
        else
            difference_shrink(stack.slab(i), ny, nx, t);
    }
}

/// Backward of shrink_stack at input `v`. Returns dL/dt.
inline double shrink_stack_backward(const CArray& v, Transform tr, double t, const CArray& g, CArray& gv) {
    require_same_shape(v.shape(), g.shape(), "shrink_stack_backward");
    const std::size_t ny = v.dim(1), nx = v.dim(2);
    gv = CArray(v.shape());
    double gt = 0.0;
    for (std::size_t i = 0; i < v.dim(0); ++i) {
        if (tr == Transform::HaarWavelet)
            haar_shrink_backward(v.slab(i), g.slab(i), ny, nx, t, gv.slab(i), gt);
        else
            difference_shrink_backward(v.slab(i), g.slab(i), ny, nx, t, gv.slab(i), gt);
    }
    return gt;
}

} // namespace rgmap::recon
