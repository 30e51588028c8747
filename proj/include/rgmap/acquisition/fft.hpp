#pragma once

// Centered, unitary 2-D DFT backed by FFTW. The k-space origin sits at
// (ny/2, nx/2) and both directions are scaled by 1/sqrt(ny*nx).

#include "rgmap/core/array.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <tuple>

namespace rgmap::fft {

namespace detail {

struct FftwBuffer {
    fftw_complex* ptr = nullptr;
    explicit FftwBuffer(std::size_t n) : ptr(fftw_alloc_complex(n)) {
        if (!ptr) throw Error("fftw_alloc_complex failed");
    }
    ~FftwBuffer() { fftw_free(ptr); }
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;
};

class PlanCache {
public:
    static PlanCache& instance() {
        static PlanCache cache;
        return cache;
    }

    fftw_plan get(std::size_t ny, std::size_t nx, int sign) {
        std::lock_guard<std::mutex> lock(mutex_);
        auto key = std::make_tuple(ny, nx, sign);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        FftwBuffer tmp(ny * nx);
        fftw_plan p = fftw_plan_dft_2d(static_cast<int>(ny), static_cast<int>(nx), tmp.ptr,
                                       tmp.ptr, sign, FFTW_ESTIMATE);
        if (!p) throw Error("fftw_plan_dft_2d failed");
        plans_.emplace(key, p);
        return p;
    }

    ~PlanCache() {
        for (auto& [k, p] : plans_) fftw_destroy_plan(p);
    }

private:
    std::mutex mutex_;
    std::map<std::tuple<std::size_t, std::size_t, int>, fftw_plan> plans_;
};

inline fftw_complex* scratch(std::size_t n) {
    thread_local std::map<std::size_t, std::unique_ptr<FftwBuffer>> buffers;
    auto& b = buffers[n];
    if (!b) b = std::make_unique<FftwBuffer>(n);
    return b->ptr;
}

inline void transform(std::span<const cplx> in, std::span<cplx> out, std::size_t ny,
                      std::size_t nx, int sign) {
    const std::size_t n = ny * nx;
    if (in.size() != n || out.size() != n) throw ShapeError("fft: buffer size mismatch");
    fftw_plan plan = PlanCache::instance().get(ny, nx, sign);
    fftw_complex* buf = scratch(n);
    const std::size_t hy = ny / 2, hx = nx / 2;
    // ifftshift on the way in
    for (std::size_t iy = 0; iy < ny; ++iy) {
        const std::size_t dy = (iy + ny - hy) % ny;
        for (std::size_t ix = 0; ix < nx; ++ix) {
            const std::size_t dx = (ix + nx - hx) % nx;
            const cplx v = in[iy * nx + ix];
            buf[dy * nx + dx][0] = v.real();
            buf[dy * nx + dx][1] = v.imag();
        }
    }
    fftw_execute_dft(plan, buf, buf);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    // fftshift on the way out
    for (std::size_t iy = 0; iy < ny; ++iy) {
        const std::size_t dy = (iy + hy) % ny;
        for (std::size_t ix = 0; ix < nx; ++ix) {
            const std::size_t dx = (ix + hx) % nx;
            out[dy * nx + dx] = cplx(buf[iy * nx + ix][0] * scale, buf[iy * nx + ix][1] * scale);
        }
    }
}

} // namespace detail

/// Image -> k-space.
inline void forward(std::span<const cplx> in, std::span<cplx> out, std::size_t ny, std::size_t nx) {
    detail::transform(in, out, ny, nx, FFTW_FORWARD);
}

/// k-space -> image.
inline void inverse(std::span<const cplx> in, std::span<cplx> out, std::size_t ny, std::size_t nx) {
    detail::transform(in, out, ny, nx, FFTW_BACKWARD);
}

inline CArray forward2d(const CArray& img) {
    CArray out(img.shape());
    forward(img.flat(), out.flat(), img.dim(0), img.dim(1));
    return out;
}

inline CArray inverse2d(const CArray& ksp) {
    CArray out(ksp.shape());
    inverse(ksp.flat(), out.flat(), ksp.dim(0), ksp.dim(1));
    return out;
}

} // namespace rgmap::fft
