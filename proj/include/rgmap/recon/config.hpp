#pragma once

#include "rgmap/core/array.hpp"

#include <string>

namespace rgmap::recon {

enum class Transform { HaarWavelet, FiniteDifference };
enum class Mode { Classical, Learned };

struct ReconConfig {
    int n_iters = 10;
    double eta = 1.0;        // dual step, also the penalty weight of the M-update
    double reg_weight = 0.0; // sparsity weight; thresholds are reg_weight / eta
    // When set, reg_weight is a fraction of max |zero-filled image| of the data
    // being reconstructed rather than an absolute level.
    bool reg_relative = false;
    Transform transform = Transform::HaarWavelet;
    int cg_iters = 10;
    double cg_tol = 1e-8;
    Mode mode = Mode::Classical;

    void validate() const {
        if (n_iters < 1) throw Error("ReconConfig: n_iters must be >= 1");
        if (!(eta > 0.0)) throw Error("ReconConfig: eta must be positive");
        if (!(reg_weight >= 0.0)) throw Error("ReconConfig: reg_weight must be nonnegative");
        if (cg_iters < 1) throw Error("ReconConfig: cg_iters must be >= 1");
        if (!(cg_tol > 0.0)) throw Error("ReconConfig: cg_tol must be positive");
    }
};

struct LplusSConfig {
    double lambda_L = 0.01;
    double lambda_S = 0.01;
    int max_iters = 50;
    double tol = 1e-4;
    // Final correction that makes the sampled k-space agree with y.
    bool exact_dc = true;
    int dc_cg_iters = 500;
    double dc_cg_tol = 1e-15;

    void validate() const {
        if (!(lambda_L > 0.0) || !(lambda_S > 0.0))
            throw Error("LplusSConfig: thresholds must be positive");
        if (max_iters < 1) throw Error("LplusSConfig: max_iters must be >= 1");
        if (!(tol > 0.0)) throw Error("LplusSConfig: tol must be positive");
    }
};

inline std::string to_string(Transform t) {
    return t == Transform::HaarWavelet ? "haar-wavelet" : "finite-difference";
}

inline Transform transform_from_string(const std::string& s) {
    if (s == "haar-wavelet") return Transform::HaarWavelet;
    if (s == "finite-difference") return Transform::FiniteDifference;
    throw Error("unknown transform '" + s + "'");
}

inline std::string to_string(Mode m) { return m == Mode::Classical ? "classical" : "learned"; }

inline Mode mode_from_string(const std::string& s) {
    if (s == "classical") return Mode::Classical;
    if (s == "learned") return Mode::Learned;
    throw Error("unknown recon mode '" + s + "'");
}

} // namespace rgmap::recon
