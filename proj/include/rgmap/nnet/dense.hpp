#pragma once

// Densely connected stack of conv blocks. Block b sees the channel-wise
// concatenation of the network input and the outputs of blocks 0..b-1; the
// last block's output is the network output.

#include "rgmap/nnet/conv.hpp"

#include <vector>

namespace rgmap::nnet {

struct DenseNetConfig {
    std::size_t in_ch = 2;
    std::size_t out_ch = 3;
    std::size_t width = 16;
    std::size_t n_blocks = 5;

    bool operator==(const DenseNetConfig&) const = default;

    void validate() const {
        if (in_ch == 0 || out_ch == 0 || width == 0 || n_blocks == 0)
            throw NetError("DenseNetConfig: channel counts and block count must be positive");
    }
};

/// conv -> relu -> conv -> relu -> conv.
struct ConvBlock {
    ConvLayer c1, c2, c3;
};

class DenseNet {
public:
    DenseNetConfig cfg;
    std::vector<ConvBlock> blocks;

    /// Per-sample activations kept for the backward pass.
    struct Cache {
        std::size_t H = 0, W = 0;
        std::vector<double> stack_cols; // im2col rows of input and every block output but the last
        std::vector<std::vector<double>> a1, a2, cols2, cols3;
    };

    DenseNet() = default;

    /// All-zero network (also used as a gradient accumulator).
    explicit DenseNet(const DenseNetConfig& c) : cfg(c) {
        cfg.validate();
        for (std::size_t b = 0; b < cfg.n_blocks; ++b)
            blocks.push_back({ConvLayer(block_in(b), cfg.width), ConvLayer(cfg.width, cfg.width),
                              ConvLayer(cfg.width, block_out(b))});
    }

    DenseNet(const DenseNetConfig& c, Seed seed) : DenseNet(c) {
        Rng rng(seed);
        for (auto& blk : blocks) {
            blk.c1.init_he(rng);
            blk.c2.init_he(rng);
            blk.c3.init_he(rng);
        }
    }

    std::size_t block_in(std::size_t b) const { return cfg.in_ch + b * cfg.width; }
    std::size_t block_out(std::size_t b) const { return b + 1 == cfg.n_blocks ? cfg.out_ch : cfg.width; }

    std::vector<ParamRef> params() {
        std::vector<ParamRef> out;
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            ConvLayer* layers[3] = {&blocks[b].c1, &blocks[b].c2, &blocks[b].c3};
            for (std::size_t l = 0; l < 3; ++l) {
                const std::string stem = "block" + std::to_string(b) + ".conv" + std::to_string(l);
                out.push_back({stem + ".weight", &layers[l]->weight});
                out.push_back({stem + ".bias", &layers[l]->bias});
            }
        }
        return out;
    }

    std::size_t n_params() {
        std::size_t n = 0;
        for (auto& p : params()) n += p.value->size();
        return n;
    }

    void zero() {
        for (auto& p : params()) p.value->fill(0.0);
    }

    bool operator==(const DenseNet& o) const {
        if (!(cfg == o.cfg) || blocks.size() != o.blocks.size()) return false;
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            const ConvBlock &x = blocks[b], &y = o.blocks[b];
            if (x.c1.weight != y.c1.weight || x.c1.bias != y.c1.bias || x.c2.weight != y.c2.weight ||
                x.c2.bias != y.c2.bias || x.c3.weight != y.c3.weight || x.c3.bias != y.c3.bias)
                return false;
        }
        return true;
    }

    RealTensor forward(const RealTensor& x) const {
        Cache c;
        return forward(x, c);
    }

    RealTensor forward(const RealTensor& x, Cache& c) const {
        check_tensor(x, cfg.in_ch, "DenseNet::forward");
        const std::size_t H = x.dim(1), W = x.dim(2), hw = H * W, nb = blocks.size();
        const std::size_t w = cfg.width;
        c.H = H;
        c.W = W;
        c.stack_cols.assign(block_in(nb - 1) * 9 * hw, 0.0);
        c.a1.assign(nb, {});
        c.a2.assign(nb, {});
        c.cols2.assign(nb, {});
        c.cols3.assign(nb, {});
        im2col(x.data(), cfg.in_ch, H, W, c.stack_cols.data());
        RealTensor out({cfg.out_ch, H, W});
        std::vector<double> o;
        for (std::size_t b = 0; b < nb; ++b) {
            const ConvBlock& blk = blocks[b];
            c.a1[b].resize(w * hw);
            blk.c1.forward_cols(c.stack_cols.data(), hw, c.a1[b].data());
            relu_inplace(c.a1[b].data(), w * hw);
            c.cols2[b].resize(w * 9 * hw);
            im2col(c.a1[b].data(), w, H, W, c.cols2[b].data());
            c.a2[b].resize(w * hw);
            blk.c2.forward_cols(c.cols2[b].data(), hw, c.a2[b].data());
            relu_inplace(c.a2[b].data(), w * hw);
            c.cols3[b].resize(w * 9 * hw);
            im2col(c.a2[b].data(), w, H, W, c.cols3[b].data());
            if (b + 1 < nb) {
                o.resize(w * hw);
                blk.c3.forward_cols(c.cols3[b].data(), hw, o.data());
                im2col(o.data(), w, H, W, c.stack_cols.data() + block_in(b) * 9 * hw);
            } else {
                blk.c3.forward_cols(c.cols3[b].data(), hw, out.data());
            }
        }
        return out;
    }

    /// Reverse-mode pass. Adds parameter gradients into `grad` and returns dL/dx.
    RealTensor backward(const Cache& c, const RealTensor& dy, DenseNet& grad) const {
        check_tensor(dy, cfg.out_ch, "DenseNet::backward");
        if (dy.dim(1) != c.H || dy.dim(2) != c.W) throw ShapeError("DenseNet::backward: gradient grid mismatch");
        if (!(grad.cfg == cfg)) throw ShapeError("DenseNet::backward: gradient container has another layout");
        const std::size_t H = c.H, W = c.W, hw = H * W, nb = blocks.size(), w = cfg.width;
        std::vector<double> dstack(c.stack_cols.size(), 0.0);
        std::vector<double> d_o, dcols(w * 9 * hw), da(w * hw);
        for (std::size_t bi = nb; bi-- > 0;) {
            const ConvBlock& blk = blocks[bi];
            ConvBlock& g = grad.blocks[bi];
            const double* dout = dy.data();
            if (bi + 1 < nb) {
                d_o.assign(w * hw, 0.0);
                col2im(dstack.data() + block_in(bi) * 9 * hw, w, H, W, d_o.data());
                dout = d_o.data();
            }
            blk.c3.backward_cols(c.cols3[bi].data(), hw, dout, g.c3, dcols.data());
            std::fill(da.begin(), da.end(), 0.0);
            col2im(dcols.data(), w, H, W, da.data());
            relu_backward_inplace(c.a2[bi].data(), da.data(), w * hw);
            blk.c2.backward_cols(c.cols2[bi].data(), hw, da.data(), g.c2, dcols.data());
            std::fill(da.begin(), da.end(), 0.0);
            col2im(dcols.data(), w, H, W, da.data());
            relu_backward_inplace(c.a1[bi].data(), da.data(), w * hw);
            blk.c1.backward_cols(c.stack_cols.data(), hw, da.data(), g.c1, dstack.data(), true);
        }
        RealTensor dx({cfg.in_ch, H, W});
        col2im(dstack.data(), cfg.in_ch, H, W, dx.data());
        return dx;
    }
};

/// Two-layer residual correction: conv -> relu -> conv. The second layer
/// starts at zero so a fresh net contributes nothing.
struct TwoLayerNet {
    ConvLayer c1, c2;

    struct Cache {
        std::size_t H = 0, W = 0;
        std::vector<double> cols1, a1, cols2;
    };

    TwoLayerNet() = default;
    TwoLayerNet(std::size_t in_ch, std::size_t width, std::size_t out_ch, Seed seed)
        : c1(in_ch, width), c2(width, out_ch) {
        Rng rng(seed);
        c1.init_he(rng);
    }

    std::size_t in_ch() const { return c1.in_ch(); }
    std::size_t out_ch() const { return c2.out_ch(); }

    std::vector<ParamRef> params(const std::string& stem) {
        return {{stem + ".conv0.weight", &c1.weight},
                {stem + ".conv0.bias", &c1.bias},
                {stem + ".conv1.weight", &c2.weight},
                {stem + ".conv1.bias", &c2.bias}};
    }

    RealTensor forward(const RealTensor& x, Cache& c) const {
        check_tensor(x, in_ch(), "TwoLayerNet::forward");
        const std::size_t H = x.dim(1), W = x.dim(2), hw = H * W, w = c1.out_ch();
        c.H = H;
        c.W = W;
        c.cols1.resize(in_ch() * 9 * hw);
        im2col(x.data(), in_ch(), H, W, c.cols1.data());
        c.a1.resize(w * hw);
        c1.forward_cols(c.cols1.data(), hw, c.a1.data());
        relu_inplace(c.a1.data(), w * hw);
        c.cols2.resize(w * 9 * hw);
        im2col(c.a1.data(), w, H, W, c.cols2.data());
        RealTensor y({out_ch(), H, W});
        c2.forward_cols(c.cols2.data(), hw, y.data());
        return y;
    }

    RealTensor forward(const RealTensor& x) const {
        Cache c;
        return forward(x, c);
    }

    RealTensor backward(const Cache& c, const RealTensor& dy, TwoLayerNet& grad) const {
        check_tensor(dy, out_ch(), "TwoLayerNet::backward");
        const std::size_t H = c.H, W = c.W, hw = H * W, w = c1.out_ch();
        std::vector<double> dcols(w * 9 * hw), da(w * hw, 0.0);
        c2.backward_cols(c.cols2.data(), hw, dy.data(), grad.c2, dcols.data());
        col2im(dcols.data(), w, H, W, da.data());
        relu_backward_inplace(c.a1.data(), da.data(), w * hw);
        std::vector<double> dcols1(in_ch() * 9 * hw);
        c1.backward_cols(c.cols1.data(), hw, da.data(), grad.c1, dcols1.data());
        RealTensor dx({in_ch(), H, W});
        col2im(dcols1.data(), in_ch(), H, W, dx.data());
        return dx;
    }
};

} // namespace rgmap::nnet
