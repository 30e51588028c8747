#pragma once

// 3x3 same-padded convolution via im2col + GEMM, with exact backward pass.

#include "rgmap/core/array.hpp"
#include "rgmap/core/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace rgmap::nnet {

/// C x H x W real tensor.
using RealTensor = RArray;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

class NetError : public Error {
public:
    using Error::Error;
};

inline void check_tensor(const RealTensor& x, std::size_t channels, const char* what) {
    if (x.ndim() != 3) throw ShapeError(std::string(what) + ": expected C x H x W tensor");
    if (x.dim(0) != channels)
        throw ShapeError(std::string(what) + ": expected " + std::to_string(channels) + " channels, got " +
                         std::to_string(x.dim(0)));
}

/// cols[(c*9 + ky*3 + kx), y*W + x] = x[c, y+ky-1, x+kx-1], zero outside.
inline void im2col(const double* x, std::size_t C, std::size_t H, std::size_t W, double* cols) {
    const std::size_t hw = H * W;
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t ky = 0; ky < 3; ++ky)
            for (std::size_t kx = 0; kx < 3; ++kx) {
                double* row = cols + ((c * 3 + ky) * 3 + kx) * hw;
                const double* src = x + c * hw;
                for (std::size_t y = 0; y < H; ++y) {
                    double* out = row + y * W;
                    const long sy = static_cast<long>(y) + static_cast<long>(ky) - 1;
                    if (sy < 0 || sy >= static_cast<long>(H)) {
                        std::fill(out, out + W, 0.0);
                        continue;
                    }
                    const double* in = src + static_cast<std::size_t>(sy) * W;
                    if (kx == 0) {
                        out[0] = 0.0;
                        std::copy(in, in + W - 1, out + 1);
                    } else if (kx == 1) {
                        std::copy(in, in + W, out);
                    } else {
                        std::copy(in + 1, in + W, out);
                        out[W - 1] = 0.0;
                    }
                }
            }
}

/// Adjoint of im2col: dx += scatter(dcols).
inline void col2im(const double* dcols, std::size_t C, std::size_t H, std::size_t W, double* dx) {
    const std::size_t hw = H * W;
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t ky = 0; ky < 3; ++ky)
            for (std::size_t kx = 0; kx < 3; ++kx) {
                const double* row = dcols + ((c * 3 + ky) * 3 + kx) * hw;
                double* dst = dx + c * hw;
                for (std::size_t y = 0; y < H; ++y) {
                    const long sy = static_cast<long>(y) + static_cast<long>(ky) - 1;
                    if (sy < 0 || sy >= static_cast<long>(H)) continue;
                    const double* g = row + y * W;
                    double* d = dst + static_cast<std::size_t>(sy) * W;
                    if (kx == 0) {
                        for (std::size_t x = 1; x < W; ++x) d[x - 1] += g[x];
                    } else if (kx == 1) {
                        for (std::size_t x = 0; x < W; ++x) d[x] += g[x];
                    } else {
                        for (std::size_t x = 0; x + 1 < W; ++x) d[x + 1] += g[x];
                    }
                }
            }
}

struct ConvLayer {
    RArray weight; // out x in x 3 x 3
    RArray bias;   // out

    ConvLayer() = default;
    ConvLayer(std::size_t in_ch, std::size_t out_ch) : weight({out_ch, in_ch, 3, 3}), bias({out_ch}) {}

    std::size_t in_ch() const { return weight.dim(1); }
    std::size_t out_ch() const { return weight.dim(0); }

    /// He (fan-in) initialization from a seeded Gaussian; bias zero.
    void init_he(Rng& rng) {
        const double sd = std::sqrt(2.0 / static_cast<double>(in_ch() * 9));
        for (auto& w : weight.vec()) w = sd * rng.normal();
        bias.fill(0.0);
    }

    ConstMatMap wmat() const {
        return ConstMatMap(weight.data(), static_cast<Eigen::Index>(out_ch()),
                           static_cast<Eigen::Index>(in_ch() * 9));
    }

    /// out = W cols + b, with cols laid out as produced by im2col.
    void forward_cols(const double* cols, std::size_t hw, double* out) const {
        ConstMatMap c(cols, static_cast<Eigen::Index>(in_ch() * 9), static_cast<Eigen::Index>(hw));
        MatMap o(out, static_cast<Eigen::Index>(out_ch()), static_cast<Eigen::Index>(hw));
        o.noalias() = wmat() * c;
        for (std::size_t k = 0; k < out_ch(); ++k) o.row(static_cast<Eigen::Index>(k)).array() += bias[k];
    }

    /// Accumulates dW, db into `grad` and writes (or adds, with `accumulate`)
    /// W^T dy into dcols if it is non-null.
    void backward_cols(const double* cols, std::size_t hw, const double* dy, ConvLayer& grad,
                       double* dcols, bool accumulate = false) const {
        ConstMatMap c(cols, static_cast<Eigen::Index>(in_ch() * 9), static_cast<Eigen::Index>(hw));
        ConstMatMap g(dy, static_cast<Eigen::Index>(out_ch()), static_cast<Eigen::Index>(hw));
        MatMap gw(grad.weight.data(), static_cast<Eigen::Index>(out_ch()),
                  static_cast<Eigen::Index>(in_ch() * 9));
        gw.noalias() += g * c.transpose();
        // Plain loop: Eigen's vectorized reductions peel by address alignment,
        // which would make the summation order allocation-dependent.
        for (std::size_t k = 0; k < out_ch(); ++k) {
            const double* row = dy + k * hw;
            double s = 0.0;
            for (std::size_t p = 0; p < hw; ++p) s += row[p];
            grad.bias[k] += s;
        }
        if (dcols) {
            MatMap dc(dcols, static_cast<Eigen::Index>(in_ch() * 9), static_cast<Eigen::Index>(hw));
            if (accumulate)
                dc.noalias() += wmat().transpose() * g;
            else
                dc.noalias() = wmat().transpose() * g;
        }
    }

    void zero() {
        weight.fill(0.0);
        bias.fill(0.0);
    }
};

/// Single-layer forward on a C x H x W tensor.
inline RealTensor conv2d_forward(const ConvLayer& layer, const RealTensor& x) {
    check_tensor(x, layer.in_ch(), "conv2d_forward");
    const std::size_t H = x.dim(1), W = x.dim(2);
    std::vector<double> cols(layer.in_ch() * 9 * H * W);
    im2col(x.data(), layer.in_ch(), H, W, cols.data());
    RealTensor y({layer.out_ch(), H, W});
    layer.forward_cols(cols.data(), H * W, y.data());
    return y;
}

/// Single-layer backward: returns dx, accumulates parameter grads into `grad`.
inline RealTensor conv2d_backward(const ConvLayer& layer, const RealTensor& x, const RealTensor& dy,
                                  ConvLayer& grad) {
    check_tensor(x, layer.in_ch(), "conv2d_backward");
    check_tensor(dy, layer.out_ch(), "conv2d_backward");
    const std::size_t H = x.dim(1), W = x.dim(2), hw = H * W;
    std::vector<double> cols(layer.in_ch() * 9 * hw), dcols(cols.size());
    im2col(x.data(), layer.in_ch(), H, W, cols.data());
    layer.backward_cols(cols.data(), hw, dy.data(), grad, dcols.data());
    RealTensor dx(x.shape());
    col2im(dcols.data(), layer.in_ch(), H, W, dx.data());
    return dx;
}

inline void relu_inplace(double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

/// dy *= 1[activation > 0]; the subgradient at 0 is 0.
inline void relu_backward_inplace(const double* act, double* dy, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (!(act[i] > 0.0)) dy[i] = 0.0;
}

/// Parameter / gradient pair with a stable name, for optimizers and I/O.
struct ParamRef {
    std::string name;
    RArray* value;
};

} // namespace rgmap::nnet
