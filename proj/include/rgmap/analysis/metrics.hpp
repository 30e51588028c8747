#pragma once

#include "rgmap/core/types.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace rgmap::analysis {

namespace detail {

template <class T>
double nrmse_impl(const Array<T>& est, const Array<T>& ref, const MaskArray* roi) {
    require_same_shape(est.shape(), ref.shape(), "nrmse");
    if (roi) require_same_shape(roi->shape(), ref.shape(), "nrmse roi");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        if (roi && !(*roi)[i]) continue;
        num += std::norm(est[i] - ref[i]);
        den += std::norm(ref[i]);
    }
    if (!(den > 0.0)) throw Error("nrmse: reference has zero norm over the region");
    return std::sqrt(num / den);
}

} // namespace detail

/// sqrt(sum_roi |est - ref|^2) / sqrt(sum_roi |ref|^2).
inline double nrmse(const RArray& est, const RArray& ref, const MaskArray* roi = nullptr) {
    return detail::nrmse_impl(est, ref, roi);
}
inline double nrmse(const CArray& est, const CArray& ref, const MaskArray* roi = nullptr) {
    return detail::nrmse_impl(est, ref, roi);
}

/// 20 log10(mean(|img| over roi) / noise_std).
inline double snr_db(const ComplexImage& img, const MaskArray& roi, double noise_std) {
    require_same_shape(roi.shape(), img.data.shape(), "snr_db");
    if (!(noise_std > 0.0)) throw Error("snr_db: noise standard deviation must be positive");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < roi.size(); ++p)
        if (roi[p]) {
            sum += std::abs(img.data[p]);
            ++n;
        }
    if (n == 0) throw Error("snr_db: empty region of interest");
    return 20.0 * std::log10(sum / static_cast<double>(n) / noise_std);
}

/// Quantile by linear interpolation between order statistics at (n-1) q.
inline double quantile_sorted(const std::vector<double>& v, double q) {
    if (v.empty()) throw Error("quantile of an empty sample");
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct RegionRow {
    std::int32_t label = 0;
    std::size_t count = 0;
    double mean = 0.0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    bool empty = true;
};

/// Per nonzero label statistics of `values` over pixels where `valid` is set
/// (all pixels when `valid` is null). Labels without valid pixels are
/// reported with empty = true.
inline std::vector<RegionRow> region_stats(const RArray& values, const LabelArray& labels,
                                           const MaskArray* valid = nullptr) {
    require_same_shape(values.shape(), labels.shape(), "region_stats");
    if (valid) require_same_shape(valid->shape(), labels.shape(), "region_stats");
    std::map<std::int32_t, std::vector<double>> groups;
    for (std::size_t p = 0; p < labels.size(); ++p) {
        if (labels[p] == 0) continue;
        auto& g = groups[labels[p]];
        if (!valid || (*valid)[p]) g.push_back(values[p]);
    }
    std::vector<RegionRow> rows;
    for (auto& [label, v] : groups) {
        RegionRow r;
        r.label = label;
        r.count = v.size();
        if (!v.empty()) {
            std::sort(v.begin(), v.end());
            double s = 0.0;
            for (double x : v) s += x;
            r.mean = s / static_cast<double>(v.size());
            r.q1 = quantile_sorted(v, 0.25);
            r.median = quantile_sorted(v, 0.5);
            r.q3 = quantile_sorted(v, 0.75);
            r.empty = false;
        }
        rows.push_back(r);
    }
    return rows;
}

/// Binary mask of pixels with a nonzero label.
inline MaskArray label_roi(const LabelArray& labels) {
    MaskArray m(labels.shape());
    for (std::size_t p = 0; p < labels.size(); ++p) m[p] = labels[p] != 0;
    return m;
}

} // namespace rgmap::analysis
