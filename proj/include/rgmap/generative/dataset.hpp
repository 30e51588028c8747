#pragma once

// Synthetic training data: random phantoms acquired at two spin-lock times,
// and the (input, target) magnitude pairs the generator learns from.

#include "rgmap/acquisition/simulate.hpp"
#include "rgmap/analysis/metrics.hpp"
#include "rgmap/core/qtns.hpp"
#include "rgmap/nnet/conv.hpp"
#include "rgmap/phantom/phantom.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <limits>

namespace rgmap::gen {

struct DatasetConfig {
    std::size_t ny = 64, nx = 64, n_coils = 8;
    std::vector<double> tsl_ms{5, 10, 20, 40, 60};
    std::vector<double> r_k{4.6, 6.8};
    std::vector<double> snr_db{std::numeric_limits<double>::infinity(), 30, 25, 20};
    double calib_frac = 1.0 / 16.0;
    Seed seed{0};

    void validate() const {
        if (tsl_ms.size() < 3) throw Error("DatasetConfig: need at least three spin-lock times");
        ContrastImageSet::validate_tsl(tsl_ms);
        if (r_k.empty() || snr_db.empty()) throw Error("DatasetConfig: r_k and snr_db lists must be nonempty");
        if (n_coils < 1) throw Error("DatasetConfig: n_coils must be >= 1");
    }
};

/// One simulated slice and its undersampled acquisition.
struct PipelineSample {
    std::uint64_t index = 0;
    double r_k = 1.0, snr_db = 0.0;
    std::vector<double> tsl_ms; // full series
    acq::KSpaceData y;
    acq::CoilProfile coils;
    CArray truth_acquired; // complex truth of the acquired contrasts
    RArray truth_series;   // magnitudes of every contrast
    LabelArray labels;
    ParamMap truth_params;

    RArray truth_middle() const {
        const std::size_t n = truth_series.dim(0), np = truth_series.stride0();
        RArray out({n - 2, truth_series.dim(1), truth_series.dim(2)});
        std::copy(truth_series.data() + np, truth_series.data() + (n - 1) * np, out.data());
        return out;
    }
};

/// Slice `index` acquired at the given contrasts, acceleration and SNR.
/// Phantom, coils, masks and noise all derive from (seed, index), so one slice
/// at several SNRs sees the same noise pattern at different scales.
inline PipelineSample make_slice(const DatasetConfig& cfg, std::uint64_t index, const std::vector<std::size_t>& contrasts,
                                 double r_k, double snr_db) {
    cfg.validate();
    const Seed s = derive(cfg.seed, index);
    PipelineSample out;
    out.index = index;
    out.r_k = r_k;
    out.snr_db = snr_db;
    out.tsl_ms = cfg.tsl_ms;
    auto truth = phantom::rasterize(phantom::random_phantom(cfg.ny, cfg.nx, derive(s, 1)));
    const auto series = phantom::synthesize(truth.params, cfg.tsl_ms, phantom::PhaseMode::SmoothQuadratic);
    out.coils = acq::make_coils(cfg.n_coils, cfg.ny, cfg.nx, derive(s, 2));
    acq::AcquisitionSpec spec{contrasts, r_k, cfg.calib_frac, snr_db};
    out.y = acq::simulate_acquisition(series, out.coils, analysis::label_roi(truth.labels), spec, derive(s, 3));
    out.truth_acquired = series.select(contrasts).images;
    out.truth_series = series.magnitudes();
    out.labels = std::move(truth.labels);
    out.truth_params = std::move(truth.params);
    return out;
}

/// Slice `index` with the first and last contrasts acquired. Acceleration
/// and SNR cycle through the configured lists so every combination appears
/// equally often.
inline PipelineSample make_pipeline_sample(const DatasetConfig& cfg, std::uint64_t index) {
    cfg.validate();
    const double r_k = cfg.r_k[index % cfg.r_k.size()];
    const double snr = cfg.snr_db[(index / cfg.r_k.size()) % cfg.snr_db.size()];
    return make_slice(cfg, index, {0, cfg.tsl_ms.size() - 1}, r_k, snr);
}

inline std::vector<PipelineSample> make_pipeline_set(const DatasetConfig& cfg, std::uint64_t first, std::size_t count) {
    std::vector<PipelineSample> out;
    out.reserve(count);
    for (std::uint64_t k = 0; k < count; ++k) out.push_back(make_pipeline_sample(cfg, first + k));
    return out;
}

/// K pairs of 2-channel inputs (acquired magnitudes) and J-channel targets.
struct GenDataset {
    RArray inputs;  // K x 2 x H x W
    RArray targets; // K x J x H x W
    std::vector<double> tsl_ms;

    std::size_t size() const { return inputs.empty() ? 0 : inputs.dim(0); }
    std::size_t height() const { return inputs.dim(2); }
    std::size_t width() const { return inputs.dim(3); }

    void validate() const {
        if (inputs.ndim() != 4 || targets.ndim() != 4) throw ShapeError("GenDataset: expected K x C x H x W arrays");
        if (inputs.dim(0) != targets.dim(0)) throw ShapeError("GenDataset: input and target counts differ");
        if (inputs.dim(1) != 2) throw ShapeError("GenDataset: inputs must have two channels");
        if (inputs.dim(2) != targets.dim(2) || inputs.dim(3) != targets.dim(3))
            throw ShapeError("GenDataset: input and target grids differ");
        if (tsl_ms.size() != targets.dim(1) + 2)
            throw ShapeError("GenDataset: spin-lock list must cover inputs and targets");
    }

    nnet::RealTensor input(std::size_t k) const { return slab3(inputs, k); }
    nnet::RealTensor target(std::size_t k) const { return slab3(targets, k); }

    static nnet::RealTensor slab3(const RArray& a, std::size_t k) {
        auto s = a.slab(k);
        return nnet::RealTensor({a.dim(1), a.dim(2), a.dim(3)}, std::vector<double>(s.begin(), s.end()));
    }
};

/// Dataset from per-slice reconstructions (n x 2 x H x W magnitudes) and truths.
inline GenDataset make_gen_dataset(const std::vector<RArray>& inputs, const std::vector<RArray>& targets,
                                   const std::vector<double>& tsl_ms) {
    if (inputs.empty() || inputs.size() != targets.size()) throw Error("make_gen_dataset: need K >= 1 matching pairs");
    const auto& i0 = inputs[0].shape();
    const auto& t0 = targets[0].shape();
    GenDataset d{RArray({inputs.size(), i0[0], i0[1], i0[2]}), RArray({inputs.size(), t0[0], t0[1], t0[2]}), tsl_ms};
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        require_same_shape(inputs[k].shape(), i0, "make_gen_dataset inputs");
        require_same_shape(targets[k].shape(), t0, "make_gen_dataset targets");
        std::copy(inputs[k].vec().begin(), inputs[k].vec().end(), d.inputs.slab(k).begin());
        std::copy(targets[k].vec().begin(), targets[k].vec().end(), d.targets.slab(k).begin());
    }
    d.validate();
    return d;
}

inline void save_gen_dataset(const std::filesystem::path& dir, const GenDataset& d) {
    d.validate();
    std::filesystem::create_directories(dir);
    qtns::write(dir / "inputs.qtns", d.inputs);
    qtns::write(dir / "targets.qtns", d.targets);
    nlohmann::json man = {{"kind", "gen-dataset"},
                          {"count", d.size()},
                          {"tsl_ms", d.tsl_ms},
                          {"inputs", "inputs.qtns"},
                          {"targets", "targets.qtns"}};
    std::ofstream out(dir / "manifest.json");
    if (!out) throw qtns::IoError("cannot write " + (dir / "manifest.json").string());
    out << man.dump(2) << "\n";
}

inline GenDataset load_gen_dataset(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw qtns::IoError("cannot read " + (dir / "manifest.json").string());
    const auto man = nlohmann::json::parse(in);
    if (man.at("kind").get<std::string>() != "gen-dataset") throw Error(dir.string() + " is not a generator dataset");
    GenDataset d{qtns::read_as<double>(dir / man.at("inputs").get<std::string>()),
                 qtns::read_as<double>(dir / man.at("targets").get<std::string>()),
                 man.at("tsl_ms").get<std::vector<double>>()};
    d.validate();
    return d;
}

} // namespace rgmap::gen
