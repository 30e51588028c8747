#pragma once

// Generator training and the three-step schedule: reconstruction alone,
// generator alone, then both on Loss_3 = Loss_1 + lambda * Loss_2.

#include "rgmap/generative/dataset.hpp"
#include "rgmap/generative/model.hpp"
#include "rgmap/nnet/adam.hpp"
#include "rgmap/nnet/loss.hpp"
#include "rgmap/recon/learned.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>

namespace rgmap::gen {

struct TrainConfig {
    double lr = 5e-4;
    double loss_mix = 0.1; // lambda
    int epochs_step1 = 30;
    int epochs_step2 = 5;
    int epochs_step3 = 50;
    Seed seed{0};
    std::size_t batch = 4;
    std::size_t width = 16;        // generator channels
    std::size_t crop = 32;         // generator training patch side; 0 trains on whole images
    std::size_t search_slices = 8; // classical step 1: slices scored by the reg search
    std::size_t recon_width = 8;   // learned step 1: channels of the correction nets

    void validate() const {
        if (epochs_step1 < 0 || epochs_step2 < 0 || epochs_step3 < 0) throw Error("TrainConfig: epochs must be >= 0");
        if (!(loss_mix >= 0.0)) throw Error("TrainConfig: loss_mix must be >= 0");
        if (!(lr > 0.0)) throw Error("TrainConfig: lr must be positive");
        if (batch < 1 || width < 1 || search_slices < 1 || recon_width < 1)
            throw Error("TrainConfig: batch, width, search_slices and recon_width must be >= 1");
        if (crop != 0 && crop < kMinGenSize) throw Error("TrainConfig: crop must be 0 or >= 16");
    }

    int total_epochs() const { return epochs_step1 + epochs_step2 + epochs_step3; }
};

namespace detail {

inline nnet::RealTensor crop3(const double* src, std::size_t C, std::size_t H, std::size_t W, std::size_t y0,
                              std::size_t x0, std::size_t h, std::size_t w) {
    nnet::RealTensor out({C, h, w});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < h; ++y)
            std::copy_n(src + (c * H + y0 + y) * W + x0, w, out.data() + (c * h + y) * w);
    return out;
}

struct CropBox {
    std::size_t y0 = 0, x0 = 0, h = 0, w = 0;
};

inline CropBox draw_crop(Rng& rng, std::size_t H, std::size_t W, std::size_t crop) {
    if (crop == 0 || (crop >= H && crop >= W)) return {0, 0, H, W};
    const std::size_t h = std::min(crop, H), w = std::min(crop, W);
    return {rng.below(H - h + 1), rng.below(W - w + 1), h, w};
}

} // namespace detail

/// One shuffled pass over `ds` in mini-batches of random crops. The
/// gradient of the batch-mean Loss_2 is multiplied by `grad_scale` before the
/// Adam step. Returns the mean per-sample Loss_2 seen during the pass.
inline double generator_epoch(GenModel& model, nnet::AdamState& adam, const GenDataset& ds, const TrainConfig& cfg,
                              Seed epoch_seed, double grad_scale = 1.0) {
    ds.validate();
    const std::size_t K = ds.size(), H = ds.height(), W = ds.width();
    const std::size_t J = ds.targets.dim(1);
    std::vector<std::size_t> order(K);
    for (std::size_t i = 0; i < K; ++i) order[i] = i;
    Rng rng(epoch_seed);
    rng.shuffle(order);
    GenModel grad(model.cfg);
    GenModel::Cache cache;
    nnet::RealTensor dy;
    double total = 0.0;
    for (std::size_t b0 = 0; b0 < K; b0 += cfg.batch) {
        const std::size_t b1 = std::min(K, b0 + cfg.batch);
        const double inv = grad_scale / static_cast<double>(b1 - b0);
        grad.zero();
        for (std::size_t k = b0; k < b1; ++k) {
            const auto box = detail::draw_crop(rng, H, W, cfg.crop);
            const auto x = detail::crop3(ds.inputs.slab(order[k]).data(), 2, H, W, box.y0, box.x0, box.h, box.w);
            const auto t = detail::crop3(ds.targets.slab(order[k]).data(), J, H, W, box.y0, box.x0, box.h, box.w);
            const auto pred = model.forward(x, cache);
            const double l = nnet::l2_loss(pred, t, &dy);
            if (!std::isfinite(l))
                throw nnet::NetError("generator training: non-finite loss at step " + std::to_string(adam.t + 1));
            total += l;
            for (auto& v : dy.vec()) v *= inv;
            model.backward(cache, dy, grad);
        }
        nnet::adam_step(model.params(), grad.params(), adam);
    }
    return total / static_cast<double>(K);
}

/// Mean Loss_2 over whole images.
inline double generator_loss(const GenModel& model, const GenDataset& ds) {
    ds.validate();
    double total = 0.0;
    for (std::size_t k = 0; k < ds.size(); ++k) total += nnet::l2_loss(gen_forward(model, ds.input(k)), ds.target(k));
    return total / static_cast<double>(ds.size());
}

struct GenTrainResult {
    GenModel model;
    std::vector<double> loss_history; // mean training Loss_2 per epoch
};

/// Adam on Loss_2 for `epochs` passes, from `init` or a fresh seeded model.
inline GenTrainResult train_generative(const GenDataset& ds, const TrainConfig& cfg, int epochs,
                                       const GenModel* init = nullptr) {
    cfg.validate();
    ds.validate();
    if (ds.size() < 1) throw Error("train_generative: empty dataset");
    if (epochs < 0) throw Error("train_generative: epochs must be >= 0");
    GenTrainResult res{init ? *init : make_gen_model(cfg.width, derive(cfg.seed, 20), 2, ds.targets.dim(1)), {}};
    nnet::AdamState adam(cfg.lr);
    for (int e = 0; e < epochs; ++e)
        res.loss_history.push_back(
            generator_epoch(res.model, adam, ds, cfg, derive(cfg.seed, 1000 + static_cast<std::uint64_t>(e))));
    return res;
}

struct HistoryRow {
    int epoch = 0; // 1-based over the whole schedule
    int step = 0;  // 1, 2 or 3
    double train_loss1 = 0.0, train_loss2 = 0.0, train_loss3 = 0.0;
    double val_loss1 = 0.0, val_loss2 = 0.0, val_loss3 = 0.0;
};

struct PipelineModel {
    recon::ReconConfig recon; // classical mode: the selected configuration
    std::optional<recon::LearnedAdmm> learned;
    GenModel gen;
    std::vector<HistoryRow> history;
    std::vector<std::pair<double, double>> reg_search; // (relative reg, Loss_1 on the search slices)
    GenDataset gen_train, gen_val; // generator data from the reconstruction that ends step 1
};

/// 1-D search in log space: score every grid point, then `rounds` times try
/// the geometric midpoints on either side of the current best with the
/// spacing halved each round. Returns the best point and every score taken.
inline std::pair<double, std::vector<std::pair<double, double>>>
log_search(const std::function<double(double)>& score, const std::vector<double>& grid, int rounds) {
    if (grid.size() < 2) throw Error("log_search: need at least two grid points");
    std::map<double, double> scored;
    std::vector<std::pair<double, double>> order;
    auto eval = [&](double x) {
        if (scored.count(x)) return;
        const double v = score(x);
        scored[x] = v;
        order.emplace_back(x, v);
    };
    for (double x : grid) eval(x);
    auto best = [&] {
        auto it = std::min_element(scored.begin(), scored.end(),
                                   [](const auto& a, const auto& b) { return a.second < b.second; });
        return it->first;
    };
    double spacing = std::log10(grid[1] / grid[0]);
    for (int r = 0; r < rounds; ++r) {
        const double b = best();
        eval(b * std::pow(10.0, -spacing / 2.0));
        eval(b * std::pow(10.0, spacing / 2.0));
        spacing /= 2.0;
    }
    return {best(), order};
}

/// Reconstruction of the acquired contrasts of one sample.
inline CArray reconstruct_sample(const recon::ReconConfig& cfg, const recon::LearnedAdmm* learned,
                                 const PipelineSample& s) {
    if (learned) return recon::learned_admm_reconstruct(s.y, s.coils, s.y.mask, *learned).images;
    return recon::admm_reconstruct(s.y, s.coils, s.y.mask, cfg).images;
}

/// (|m| of the two acquired contrasts, middle truth magnitudes).
inline std::pair<RArray, RArray> gen_pair(const CArray& m, const PipelineSample& s) {
    return {magnitude(m), s.truth_middle()};
}

namespace detail {

struct ReconPass {
    double loss1 = 0.0; // mean complex nRMSE of the acquired contrasts
    GenDataset ds;
};

inline ReconPass recon_pass(const recon::ReconConfig& cfg, const recon::LearnedAdmm* learned,
                            const std::vector<PipelineSample>& set, const std::vector<double>& tsl) {
    std::vector<RArray> inputs, targets;
    double l1 = 0.0;
    for (const auto& s : set) {
        const CArray m = reconstruct_sample(cfg, learned, s);
        l1 += recon::complex_nrmse(m, s.truth_acquired, nullptr);
        auto [in, tg] = gen_pair(m, s);
        inputs.push_back(std::move(in));
        targets.push_back(std::move(tg));
    }
    return {l1 / static_cast<double>(set.size()), make_gen_dataset(inputs, targets, tsl)};
}

/// Loss_1 and Loss_2 of one sample through the learned reconstruction and the
/// generator on a crop. Gradients of Loss_1 + mix * Loss_2 (times `scale`) are
/// added into the given accumulators; pass mix = 0 for Loss_1 alone.
inline std::pair<double, double> joint_sample(const recon::LearnedAdmm& R, const GenModel& G, const PipelineSample& s,
                                              const CropBox& box, double mix, double scale, recon::LearnedAdmm* gR,
                                              GenModel* gG) {
    const auto op = recon::make_operator(s.y, s.coils);
    recon::LearnedTape tape;
    const CArray m = recon::learned_forward(R, op, s.y, gR ? &tape : nullptr);
    CArray g1;
    const double l1 = recon::complex_nrmse(m, s.truth_acquired, gR ? &g1 : nullptr);
    const RArray mag = magnitude(m);
    const RArray mid = s.truth_middle();
    const std::size_t H = mag.dim(1), W = mag.dim(2), J = mid.dim(0);
    const auto x = crop3(mag.data(), 2, H, W, box.y0, box.x0, box.h, box.w);
    const auto t = crop3(mid.data(), J, H, W, box.y0, box.x0, box.h, box.w);
    GenModel::Cache cache;
    const auto pred = G.forward(x, cache);
    nnet::RealTensor dy;
    const bool need_g2 = gG || (gR && mix > 0.0);
    const double l2 = nnet::l2_loss(pred, t, need_g2 ? &dy : nullptr);
    if (!need_g2) {
        if (gR) {
            for (auto& v : g1.vec()) v *= scale;
            recon::learned_backward(R, op, s.y, tape, g1, *gR);
        }
        return {l1, l2};
    }
    for (auto& v : dy.vec()) v *= mix * scale;
    GenModel scratch(G.cfg);
    const auto dx = G.backward(cache, dy, gG ? *gG : scratch);
    if (gR) {
        for (auto& v : g1.vec()) v *= scale;
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t y = 0; y < box.h; ++y)
                for (std::size_t xx = 0; xx < box.w; ++xx) {
                    const std::size_t p = (c * H + box.y0 + y) * W + box.x0 + xx;
                    const double a = std::abs(m[p]);
                    if (a > 0.0) g1[p] += dx[(c * box.h + y) * box.w + xx] * m[p] / a;
                }
        recon::learned_backward(R, op, s.y, tape, g1, *gR);
    }
    return {l1, l2};
}

} // namespace detail

/// Three-step schedule. Classical mode (base.mode == Classical): step 1 is a
/// search over the relative sparsity weight, refined once per epoch, scored
/// by Loss_1 on the first `search_slices` training slices. Learned mode:
/// step 1 trains the unrolled operators, and step 3 back-propagates Loss_3
/// through both modules. Train losses are measured on the training crops;
/// validation losses on whole images.
inline PipelineModel train_pipeline(const std::vector<PipelineSample>& train, const std::vector<PipelineSample>& val,
                                    const recon::ReconConfig& base, const TrainConfig& cfg,
                                    const std::function<void(const HistoryRow&)>& on_epoch = {}) {
    cfg.validate();
    base.validate();
    if (train.empty() || val.empty()) throw Error("train_pipeline: training and validation sets must be nonempty");
    std::set<std::uint64_t> seen;
    for (const auto& s : train) seen.insert(s.index);
    for (const auto& s : val)
        if (seen.count(s.index)) throw Error("train_pipeline: slice " + std::to_string(s.index) + " is in both sets");
    const std::vector<double>& tsl_full = train[0].tsl_ms;
    if (tsl_full.size() < 3) throw Error("train_pipeline: need at least three contrasts per series");
    const std::size_t J = train[0].truth_series.dim(0) - 2;
    const double mix = cfg.loss_mix;
    const bool learned_mode = base.mode == recon::Mode::Learned;

    PipelineModel out;
    out.recon = base;
    out.recon.mode = recon::Mode::Classical;
    out.gen = make_gen_model(cfg.width, derive(cfg.seed, 20), 2, J);
    int epoch = 0;
    auto record = [&](int step, double t1, double t2, double v1, double v2) {
        HistoryRow r{++epoch, step, t1, t2, t1 + mix * t2, v1, v2, v1 + mix * v2};
        out.history.push_back(r);
        if (on_epoch) on_epoch(r);
    };
    auto crop_loss = [&](const GenModel& G, const GenDataset& ds, Seed s) {
        Rng rng(s);
        double total = 0.0;
        for (std::size_t k = 0; k < ds.size(); ++k) {
            const auto box = detail::draw_crop(rng, ds.height(), ds.width(), cfg.crop);
            const auto x = detail::crop3(ds.inputs.slab(k).data(), 2, ds.height(), ds.width(), box.y0, box.x0, box.h, box.w);
            const auto t = detail::crop3(ds.targets.slab(k).data(), J, ds.height(), ds.width(), box.y0, box.x0, box.h, box.w);
            total += nnet::l2_loss(G.forward(x), t);
        }
        return total / static_cast<double>(ds.size());
    };
    auto epoch_seed = [&](int step, int e) {
        return derive(cfg.seed, static_cast<std::uint64_t>(1000 * step + e));
    };

    std::optional<detail::ReconPass> val_pass;
    if (!learned_mode) {
        // Step 1: sparsity weight search.
        const std::size_t ns = std::min(cfg.search_slices, train.size());
        const std::vector<PipelineSample> search(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(ns));
        std::map<double, std::pair<double, GenDataset>> scored;
        auto score = [&](double reg) -> const std::pair<double, GenDataset>& {
            auto it = scored.find(reg);
            if (it == scored.end()) {
                recon::ReconConfig c = base;
                c.reg_weight = reg;
                c.reg_relative = true;
                auto pass = detail::recon_pass(c, nullptr, search, tsl_full);
                it = scored.emplace(reg, std::make_pair(pass.loss1, std::move(pass.ds))).first;
                out.reg_search.emplace_back(reg, pass.loss1);
            }
            return it->second;
        };
        double best = 0.0, spacing = std::log10(3.0);
        double val_for = -1.0;
        for (int e = 0; e < cfg.epochs_step1; ++e) {
            if (e == 0) {
                for (double r : {1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1}) score(r);
            } else if (spacing >= 0.02) {
                score(best * std::pow(10.0, -spacing / 2.0));
                score(best * std::pow(10.0, spacing / 2.0));
                spacing /= 2.0;
            }
            best = scored.begin()->first;
            for (const auto& [r, v] : scored)
                if (v.first < scored.at(best).first) best = r;
            out.recon.reg_weight = best;
            out.recon.reg_relative = true;
            if (val_for != best) {
                val_pass = detail::recon_pass(out.recon, nullptr, val, tsl_full);
                val_for = best;
            }
            const auto& [l1, ds] = scored.at(best);
            record(1, l1, crop_loss(out.gen, ds, epoch_seed(1, e)), val_pass->loss1, generator_loss(out.gen, val_pass->ds));
        }
        if (cfg.epochs_step1 == 0) val_pass.reset();

        // Steps 2 and 3 train the generator on the fixed reconstructions.
        const auto train_pass = detail::recon_pass(out.recon, nullptr, train, tsl_full);
        if (!val_pass) val_pass = detail::recon_pass(out.recon, nullptr, val, tsl_full);
        out.gen_train = train_pass.ds;
        out.gen_val = val_pass->ds;
        for (int step : {2, 3}) {
            nnet::AdamState adam(cfg.lr);
            const int n = step == 2 ? cfg.epochs_step2 : cfg.epochs_step3;
            const double scale = step == 2 ? 1.0 : mix;
            for (int e = 0; e < n; ++e) {
                const double l2 = generator_epoch(out.gen, adam, train_pass.ds, cfg, epoch_seed(step, e), scale);
                record(step, train_pass.loss1, l2, val_pass->loss1, generator_loss(out.gen, val_pass->ds));
            }
        }
        return out;
    }

    // Learned mode.
    if (!base.reg_relative && base.reg_weight != 0.0)
        throw Error("train_pipeline: learned mode needs a relative reg_weight");
    recon::LearnedAdmm R = recon::make_learned_admm(base, cfg.recon_width, derive(cfg.seed, 10));
    auto validate_epoch = [&]() {
        const auto pass = detail::recon_pass(out.recon, &R, val, tsl_full);
        return std::make_pair(pass.loss1, generator_loss(out.gen, pass.ds));
    };
    // Steps 1 and 3 run the same loop; step 1 trains R on Loss_1 alone.
    auto joint_epochs = [&](int step, int n) {
        nnet::AdamState adam_r(cfg.lr), adam_g(cfg.lr);
        const bool train_gen = step == 3;
        const double m = step == 3 ? mix : 0.0;
        std::vector<std::size_t> order(train.size());
        for (int e = 0; e < n; ++e) {
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            Rng rng(epoch_seed(step, e));
            rng.shuffle(order);
            double t1 = 0.0, t2 = 0.0;
            for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch) {
                const std::size_t b1 = std::min(order.size(), b0 + cfg.batch);
                const double inv = 1.0 / static_cast<double>(b1 - b0);
                recon::LearnedAdmm gR = recon::zero_like(R);
                GenModel gG(out.gen.cfg);
                for (std::size_t k = b0; k < b1; ++k) {
                    const auto& s = train[order[k]];
                    const auto box = detail::draw_crop(rng, s.truth_series.dim(1), s.truth_series.dim(2), cfg.crop);
                    const auto [l1, l2] =
                        detail::joint_sample(R, out.gen, s, box, m, inv, &gR, train_gen ? &gG : nullptr);
                    if (!std::isfinite(l1 + l2))
                        throw nnet::NetError("joint training: non-finite loss at step " + std::to_string(adam_r.t + 1));
                    t1 += l1;
                    t2 += l2;
                }
                nnet::adam_step(R.params(), gR.params(), adam_r);
                if (train_gen) nnet::adam_step(out.gen.params(), gG.params(), adam_g);
            }
            const auto [v1, v2] = validate_epoch();
            const double k = static_cast<double>(train.size());
            record(step, t1 / k, t2 / k, v1, v2);
        }
    };
    joint_epochs(1, cfg.epochs_step1);
    {
        const auto train_pass = detail::recon_pass(out.recon, &R, train, tsl_full);
        const auto vp = detail::recon_pass(out.recon, &R, val, tsl_full);
        out.gen_train = train_pass.ds;
        out.gen_val = vp.ds;
        nnet::AdamState adam(cfg.lr);
        for (int e = 0; e < cfg.epochs_step2; ++e) {
            const double l2 = generator_epoch(out.gen, adam, train_pass.ds, cfg, epoch_seed(2, e));
            record(2, train_pass.loss1, l2, vp.loss1, generator_loss(out.gen, vp.ds));
        }
    }
    joint_epochs(3, cfg.epochs_step3);
    out.recon = R.cfg;
    out.learned = std::move(R);
    return out;
}

} // namespace rgmap::gen
