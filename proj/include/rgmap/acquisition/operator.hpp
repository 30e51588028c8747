#pragma once

// Measurement operator A = P F C and its adjoint.

#include "rgmap/acquisition/coils.hpp"
#include "rgmap/acquisition/fft.hpp"
#include "rgmap/acquisition/mask.hpp"

namespace rgmap::acq {

/// Multi-coil, multi-contrast k-space samples (n_coils x n_tsl x ny x nx),
/// zero wherever the mask is zero.
struct KSpaceData {
    CArray y;
    SamplingMask mask;
    double noise_std = 0.0;
    std::vector<double> tsl_ms;

    std::size_t n_coils() const { return y.dim(0); }
    std::size_t n_tsl() const { return y.dim(1); }
    std::size_t ny() const { return y.dim(2); }
    std::size_t nx() const { return y.dim(3); }

    /// True when every unsampled location holds an exact zero.
    bool zero_outside_mask() const {
        const std::size_t np = ny() * nx();
        for (std::size_t c = 0; c < n_coils(); ++c)
            for (std::size_t i = 0; i < n_tsl(); ++i)
                for (std::size_t p = 0; p < np; ++p)
                    if (!mask.mask[i * np + p] && y[(c * n_tsl() + i) * np + p] != cplx{})
                        return false;
        return true;
    }
};

struct MeasurementOperator {
    CoilProfile coils;
    SamplingMask mask;

    std::size_t n_coils() const { return coils.n_coils(); }
    std::size_t n_tsl() const { return mask.n_tsl(); }
    std::size_t ny() const { return coils.ny(); }
    std::size_t nx() const { return coils.nx(); }

    void check_image(const Shape& s) const {
        if (s.size() != 3 || s[0] != n_tsl() || s[1] != ny() || s[2] != nx())
            throw ShapeError("measurement operator: image shape " + shape_str(s) +
                             " does not match " + shape_str({n_tsl(), ny(), nx()}));
    }
    void check_kspace(const Shape& s) const {
        if (s.size() != 4 || s[0] != n_coils() || s[1] != n_tsl() || s[2] != ny() || s[3] != nx())
            throw ShapeError("measurement operator: k-space shape " + shape_str(s) +
                             " does not match " + shape_str({n_coils(), n_tsl(), ny(), nx()}));
    }
    void validate() const {
        if (mask.mask.ndim() != 3 || mask.ny() != coils.ny() || mask.nx() != coils.nx())
            throw ShapeError("measurement operator: mask and coil grids differ");
    }

    /// y = A img.
    void apply(const CArray& img, CArray& y) const {
        check_image(img.shape());
        const std::size_t np = ny() * nx(), nt = n_tsl();
        if (y.shape() != Shape{n_coils(), nt, ny(), nx()}) y = CArray({n_coils(), nt, ny(), nx()});
        std::vector<cplx> tmp(np);
        for (std::size_t c = 0; c < n_coils(); ++c) {
            const cplx* s = coils.sens.data() + c * np;
            for (std::size_t i = 0; i < nt; ++i) {
                const cplx* m = img.data() + i * np;
                for (std::size_t p = 0; p < np; ++p) tmp[p] = s[p] * m[p];
                cplx* out = y.data() + (c * nt + i) * np;
                fft::forward(tmp, std::span<cplx>(out, np), ny(), nx());
                const std::uint8_t* msk = mask.mask.data() + i * np;
                for (std::size_t p = 0; p < np; ++p)
                    if (!msk[p]) out[p] = cplx{};
            }
        }
    }

    /// img = A^H y.
    void apply_adjoint(const CArray& y, CArray& img) const {
        check_kspace(y.shape());
        const std::size_t np = ny() * nx(), nt = n_tsl();
        img = CArray({nt, ny(), nx()});
        std::vector<cplx> tmp(np), back(np);
        for (std::size_t c = 0; c < n_coils(); ++c) {
            const cplx* s = coils.sens.data() + c * np;
            for (std::size_t i = 0; i < nt; ++i) {
                const cplx* in = y.data() + (c * nt + i) * np;
                const std::uint8_t* msk = mask.mask.data() + i * np;
                for (std::size_t p = 0; p < np; ++p) tmp[p] = msk[p] ? in[p] : cplx{};
                fft::inverse(tmp, back, ny(), nx());
                cplx* m = img.data() + i * np;
                for (std::size_t p = 0; p < np; ++p) m[p] += std::conj(s[p]) * back[p];
            }
        }
    }

    /// out = A^H A img, without materializing k-space.
    void apply_normal(const CArray& img, CArray& out) const {
        check_image(img.shape());
        const std::size_t np = ny() * nx(), nt = n_tsl();
        if (out.shape() != img.shape()) out = CArray(img.shape());
        out.fill(cplx{});
        std::vector<cplx> tmp(np), ksp(np);
        for (std::size_t c = 0; c < n_coils(); ++c) {
            const cplx* s = coils.sens.data() + c * np;
            for (std::size_t i = 0; i < nt; ++i) {
                const cplx* m = img.data() + i * np;
                for (std::size_t p = 0; p < np; ++p) tmp[p] = s[p] * m[p];
                fft::forward(tmp, ksp, ny(), nx());
                const std::uint8_t* msk = mask.mask.data() + i * np;
                for (std::size_t p = 0; p < np; ++p)
                    if (!msk[p]) ksp[p] = cplx{};
                fft::inverse(ksp, tmp, ny(), nx());
                cplx* o = out.data() + i * np;
                for (std::size_t p = 0; p < np; ++p) o[p] += std::conj(s[p]) * tmp[p];
            }
        }
    }
};

/// y[c][i] = mask[i] * F(sens[c] * img[i]).
inline KSpaceData forward(const MeasurementOperator& op, const ContrastImageSet& img) {
    op.validate();
    KSpaceData out;
    op.apply(img.images, out.y);
    out.mask = op.mask;
    out.tsl_ms = img.tsl_ms;
    return out;
}

/// img[i] = sum_c conj(sens[c]) * F^-1(mask[i] * y[c][i]).
inline ContrastImageSet adjoint(const MeasurementOperator& op, const KSpaceData& y) {
    op.validate();
    CArray img;
    op.apply_adjoint(y.y, img);
    std::vector<double> tsl = y.tsl_ms;
    if (tsl.empty())
        for (std::size_t i = 0; i < op.n_tsl(); ++i) tsl.push_back(static_cast<double>(i));
    return ContrastImageSet(std::move(img), std::move(tsl));
}

} // namespace rgmap::acq
