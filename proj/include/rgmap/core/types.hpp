#pragma once

#include "rgmap/core/array.hpp"
#include "rgmap/core/rng.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace rgmap {

/// Single complex image (ny x nx).
struct ComplexImage {
    CArray data;

    ComplexImage() = default;
    explicit ComplexImage(CArray d) : data(std::move(d)) { validate(); }

    std::size_t ny() const { return data.dim(0); }
    std::size_t nx() const { return data.dim(1); }

    void validate() const {
        if (data.ndim() != 2) throw ShapeError("ComplexImage: expected 2-D data");
        if (data.dim(0) < 8 || data.dim(1) < 8)
            throw ShapeError("ComplexImage: grid must be at least 8x8, got " +
                             shape_str(data.shape()));
        if (!all_finite(data.flat())) throw Error("ComplexImage: non-finite entries");
    }
};

/// Stack of complex images indexed by spin-lock time.
struct ContrastImageSet {
    CArray images; // n_tsl x ny x nx
    std::vector<double> tsl_ms;

    ContrastImageSet() = default;
    ContrastImageSet(CArray imgs, std::vector<double> tsl)
        : images(std::move(imgs)), tsl_ms(std::move(tsl)) {
        validate();
    }

    std::size_t n_tsl() const { return images.dim(0); }
    std::size_t ny() const { return images.dim(1); }
    std::size_t nx() const { return images.dim(2); }

    void validate() const {
        if (images.ndim() != 3) throw ShapeError("ContrastImageSet: expected 3-D image stack");
        if (images.dim(0) != tsl_ms.size())
            throw ShapeError("ContrastImageSet: " + std::to_string(images.dim(0)) +
                             " images but " + std::to_string(tsl_ms.size()) + " spin-lock times");
        validate_tsl(tsl_ms);
    }

    static void validate_tsl(const std::vector<double>& tsl) {
        for (std::size_t i = 0; i < tsl.size(); ++i) {
            if (!(tsl[i] >= 0.0)) throw Error("spin-lock times must be nonnegative");
            if (i > 0 && !(tsl[i] > tsl[i - 1]))
                throw Error("spin-lock times must be strictly increasing");
        }
    }

    /// Copy of contrast `i` as a ComplexImage.
    ComplexImage image(std::size_t i) const {
        auto s = images.slab(i);
        return ComplexImage(CArray({ny(), nx()}, std::vector<cplx>(s.begin(), s.end())));
    }

    /// Sub-stack with the selected contrasts.
    ContrastImageSet select(const std::vector<std::size_t>& idx) const {
        CArray out({idx.size(), ny(), nx()});
        std::vector<double> tsl;
        for (std::size_t k = 0; k < idx.size(); ++k) {
            auto src = images.slab(idx[k]);
            std::copy(src.begin(), src.end(), out.slab(k).begin());
            tsl.push_back(tsl_ms.at(idx[k]));
        }
        return ContrastImageSet(std::move(out), std::move(tsl));
    }

    RArray magnitudes() const { return magnitude(images); }
};

/// Per-pixel mono-exponential parameters.
struct ParamMap {
    RArray s0;
    RArray t1rho_ms;
    MaskArray valid_mask;
    RArray residual;

    ParamMap() = default;
    ParamMap(std::size_t ny, std::size_t nx)
        : s0({ny, nx}), t1rho_ms({ny, nx}), valid_mask({ny, nx}), residual({ny, nx}) {}

    std::size_t ny() const { return s0.dim(0); }
    std::size_t nx() const { return s0.dim(1); }

    void invalidate(std::size_t p) {
        s0[p] = 0.0;
        t1rho_ms[p] = 0.0;
        valid_mask[p] = 0;
    }
};

} // namespace rgmap
