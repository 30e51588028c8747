#pragma once

// Undersampled, noisy multi-coil acquisition of a subset of a contrast series.

#include "rgmap/acquisition/noise.hpp"

#include <limits>

namespace rgmap::acq {

struct AcquisitionSpec {
    std::vector<std::size_t> contrasts; // indices into the full series, increasing
    double r_k = 1.0;
    double calib_frac = 1.0 / 16.0;
    double snr_db = std::numeric_limits<double>::infinity();
};

/// Mask set drawn by simulate_acquisition for the same spec and seed.
inline SamplingMask acquisition_mask(const AcquisitionSpec& spec, std::size_t ny, std::size_t nx, Seed seed) {
    if (spec.r_k == 1.0) return SamplingMask::full(spec.contrasts.size(), ny, nx);
    return make_mask_set(ny, nx, spec.contrasts.size(), spec.r_k, spec.calib_frac, derive(seed, 1));
}

/// The noise level is fixed by the first contrast of the full series (the
/// clean combined TSL1 image) over `roi`, so acquisitions of different
/// contrast subsets of one object share the same sigma.
inline KSpaceData simulate_acquisition(const ContrastImageSet& truth, const CoilProfile& coils, const MaskArray& roi,
                                       const AcquisitionSpec& spec, Seed seed) {
    if (spec.contrasts.empty()) throw Error("simulate_acquisition: no contrasts selected");
    const auto sub = truth.select(spec.contrasts);
    const std::size_t ny = truth.ny(), nx = truth.nx();
    const SamplingMask mask = acquisition_mask(spec, ny, nx, seed);
    KSpaceData y = forward(MeasurementOperator{coils, mask}, sub);
    return add_noise(y, spec.snr_db, roi, truth.image(0), derive(seed, 2));
}

} // namespace rgmap::acq
