#pragma once

#include "rgmap/acquisition/operator.hpp"

#include <cmath>
#include <limits>

namespace rgmap::acq {

/// sigma such that 20 log10(mean(|m| over roi) / sigma) = snr_db.
inline double noise_sigma_for_snr(const ComplexImage& clean_combined, const MaskArray& roi,
                                  double snr_db) {
    require_same_shape(roi.shape(), clean_combined.data.shape(), "noise_sigma_for_snr");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < roi.size(); ++p)
        if (roi[p]) {
            sum += std::abs(clean_combined.data[p]);
            ++n;
        }
    if (n == 0) throw Error("add_noise: empty region of interest");
    return (sum / static_cast<double>(n)) / std::pow(10.0, snr_db / 20.0);
}

/// Adds i.i.d. complex Gaussian noise (sigma/sqrt(2) per component) at the
/// sampled k-space locations. snr_db = +inf leaves the data unchanged.
inline KSpaceData add_noise(const KSpaceData& y, double snr_db, const MaskArray& roi,
                            const ComplexImage& clean_combined, Seed seed) {
    const double sigma = noise_sigma_for_snr(clean_combined, roi, snr_db);
    KSpaceData out = y;
    if (std::isinf(snr_db) && snr_db > 0) {
        out.noise_std = 0.0;
        return out;
    }
    Rng rng(seed);
    const double comp = sigma / std::sqrt(2.0);
    const std::size_t np = y.ny() * y.nx(), nt = y.n_tsl();
    for (std::size_t c = 0; c < y.n_coils(); ++c)
        for (std::size_t i = 0; i < nt; ++i) {
            const std::uint8_t* msk = y.mask.mask.data() + i * np;
            cplx* d = out.y.data() + (c * nt + i) * np;
            for (std::size_t p = 0; p < np; ++p) {
                if (!msk[p]) continue;
                const double re = rng.normal();
                const double im = rng.normal();
                d[p] += cplx(comp * re, comp * im);
            }
        }
    out.noise_std = sigma;
    return out;
}

} // namespace rgmap::acq
