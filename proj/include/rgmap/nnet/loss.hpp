#pragma once

#include "rgmap/nnet/conv.hpp"

#include <cmath>

namespace rgmap::nnet {

/// |pred - target| / |target| over all entries. Writes dL/dpred if `grad` is given.
inline double nrmse_loss(const RArray& pred, const RArray& target, RArray* grad = nullptr) {
    require_same_shape(pred.shape(), target.shape(), "nrmse_loss");
    const double tn = norm2(target.flat());
    if (!(tn > 0.0)) throw NetError("nrmse_loss: target has zero norm");
    double e2 = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) e2 += (pred[i] - target[i]) * (pred[i] - target[i]);
    const double e = std::sqrt(e2);
    if (grad) {
        *grad = RArray(pred.shape());
        if (e > 0.0)
            for (std::size_t i = 0; i < pred.size(); ++i) (*grad)[i] = (pred[i] - target[i]) / (e * tn);
    }
    return e / tn;
}

inline constexpr double kL2Eps = 1e-12;

/// Mean over channels of the unsquared per-channel l2 norm |pred_j - target_j|
/// for one C x H x W sample. The gradient divides by max(norm, 1e-12).
inline double l2_loss(const RealTensor& pred, const RealTensor& target, RealTensor* grad = nullptr) {
    require_same_shape(pred.shape(), target.shape(), "l2_loss");
    if (pred.ndim() != 3) throw ShapeError("l2_loss: expected C x H x W tensors");
    const std::size_t C = pred.dim(0), hw = pred.stride0();
    if (grad) *grad = RealTensor(pred.shape());
    double total = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        double s = 0.0;
        for (std::size_t p = 0; p < hw; ++p) {
            const double d = pred[c * hw + p] - target[c * hw + p];
            s += d * d;
        }
        const double n = std::sqrt(s);
        total += n;
        if (grad) {
            const double scale = 1.0 / (std::max(n, kL2Eps) * static_cast<double>(C));
            for (std::size_t p = 0; p < hw; ++p) (*grad)[c * hw + p] = (pred[c * hw + p] - target[c * hw + p]) * scale;
        }
    }
    return total / static_cast<double>(C);
}

} // namespace rgmap::nnet
