#pragma once

// Generator: five densely connected conv blocks mapping the two acquired
// magnitude images to the three missing ones.

#include "rgmap/nnet/dense.hpp"
#include "rgmap/nnet/io.hpp"

namespace rgmap::gen {

using GenModel = nnet::DenseNet;

inline constexpr std::size_t kGenBlocks = 5;
inline constexpr std::size_t kMinGenSize = 16;

inline GenModel make_gen_model(std::size_t width, Seed seed, std::size_t in_ch = 2, std::size_t out_ch = 3) {
    return GenModel(nnet::DenseNetConfig{in_ch, out_ch, width, kGenBlocks}, seed);
}

inline nnet::RealTensor gen_forward(const GenModel& model, const nnet::RealTensor& input) {
    if (model.blocks.size() != kGenBlocks) throw nnet::NetError("gen_forward: generator must have 5 blocks");
    if (input.ndim() != 3) throw ShapeError("gen_forward: expected C x H x W input");
    if (input.dim(1) < kMinGenSize || input.dim(2) < kMinGenSize)
        throw ShapeError("gen_forward: input must be at least 16x16, got " + shape_str(input.shape()));
    return model.forward(input);
}

} // namespace rgmap::gen
