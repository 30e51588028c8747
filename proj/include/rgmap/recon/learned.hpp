#pragma once

// Unrolled ADMM whose data, image and shrinkage updates each carry a learned
// two-layer convolutional correction, with a learned step eta and threshold
// per iteration. Complex images enter the nets as (re, im) channel pairs.
//
// With the second layer of every correction at zero and theta = reg / eta the
// iteration is exactly the classical one.

#include "rgmap/nnet/adam.hpp"
#include "rgmap/nnet/dense.hpp"
#include "rgmap/nnet/io.hpp"
#include "rgmap/recon/admm.hpp"

#include <cmath>
#include <filesystem>

namespace rgmap::recon {

struct LearnedAdmm {
    ReconConfig cfg;          // n_iters, transform and CG settings
    std::size_t width = 16;
    RArray log_eta;           // per iteration
    RArray theta;             // per iteration, threshold as a fraction of max |zero-filled|
    nnet::TwoLayerNet gamma;  // (A m, y) -> data correction, per coil and contrast in k-space
    nnet::TwoLayerNet pi;     // (m_cg, z - beta, A^H d) -> image correction, per contrast
    nnet::TwoLayerNet lambda; // m + beta -> correction of the shrinkage output, per contrast

    bool initialized() const { return log_eta.size() > 0 && log_eta.size() == static_cast<std::size_t>(cfg.n_iters); }

    std::vector<nnet::ParamRef> params() {
        std::vector<nnet::ParamRef> out{{"log_eta", &log_eta}, {"theta", &theta}};
        for (auto* part : {&gamma, &pi, &lambda}) {
            const std::string stem = part == &gamma ? "gamma" : part == &pi ? "pi" : "lambda";
            for (auto& p : part->params(stem)) out.push_back(p);
        }
        return out;
    }

    void zero() {
        for (auto& p : params()) p.value->fill(0.0);
    }
};

/// Operators initialised so the unrolled net reproduces classical ADMM with
/// `base`. The sparsity weight must be relative (or zero) because the learned
/// threshold scales with each input's zero-filled maximum.
inline LearnedAdmm make_learned_admm(const ReconConfig& base, std::size_t width, Seed seed) {
    base.validate();
    if (!base.reg_relative && base.reg_weight != 0.0)
        throw Error("make_learned_admm: reg_weight must be relative to the zero-filled maximum");
    LearnedAdmm m;
    m.cfg = base;
    m.cfg.mode = Mode::Learned;
    m.width = width;
    const auto n = static_cast<std::size_t>(base.n_iters);
    m.log_eta = RArray({n}, std::log(base.eta));
    m.theta = RArray({n}, base.reg_weight / base.eta);
    m.gamma = nnet::TwoLayerNet(4, width, 2, derive(seed, 1));
    m.pi = nnet::TwoLayerNet(6, width, 2, derive(seed, 2));
    m.lambda = nnet::TwoLayerNet(2, width, 2, derive(seed, 3));
    return m;
}

/// Gradient accumulator with the layout of `m`.
inline LearnedAdmm zero_like(const LearnedAdmm& m) {
    LearnedAdmm g = m;
    g.zero();
    return g;
}

namespace detail {

// Real tensor channels (2k, 2k+1) <- (re, im) of the k-th complex plane.
inline void pack(const cplx* src, std::size_t np, double* dst) {
    for (std::size_t p = 0; p < np; ++p) {
        dst[p] = src[p].real();
        dst[np + p] = src[p].imag();
    }
}

// dst += re + i im from two real channels. Also maps real-channel gradients
// back to the complex gradient convention dL/dRe + i dL/dIm.
inline void unpack_add(const double* src, std::size_t np, cplx* dst, const std::uint8_t* mask = nullptr) {
    for (std::size_t p = 0; p < np; ++p)
        if (!mask || mask[p]) dst[p] += cplx(src[p], src[np + p]);
}

inline double re_inner(const CArray& a, const CArray& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
    return s;
}

inline nnet::RealTensor gamma_input(const CArray& am, const CArray& y, std::size_t slice, std::size_t ny,
                                    std::size_t nx) {
    const std::size_t np = ny * nx;
    nnet::RealTensor x({4, ny, nx});
    pack(am.data() + slice * np, np, x.data());
    pack(y.data() + slice * np, np, x.data() + 2 * np);
    return x;
}

inline nnet::RealTensor pi_input(const CArray& mc, const CArray& z, const CArray& beta, const CArray& atd,
                                 std::size_t i, std::size_t ny, std::size_t nx) {
    const std::size_t np = ny * nx;
    nnet::RealTensor x({6, ny, nx});
    std::vector<cplx> zb(np);
    for (std::size_t p = 0; p < np; ++p) zb[p] = z[i * np + p] - beta[i * np + p];
    pack(mc.data() + i * np, np, x.data());
    pack(zb.data(), np, x.data() + 2 * np);
    pack(atd.data() + i * np, np, x.data() + 4 * np);
    return x;
}

inline nnet::RealTensor plane(const CArray& a, std::size_t i, std::size_t ny, std::size_t nx) {
    nnet::RealTensor x({2, ny, nx});
    pack(a.data() + i * ny * nx, ny * nx, x.data());
    return x;
}

} // namespace detail

/// Values one unrolled iteration needs for its backward pass.
struct LearnedIterTape {
    CArray m, z, beta;      // inputs
    CArray am, atd, delta;  // A m, A^H d, CG correction
    CArray mc, mnew, v, znew;
    double eta = 0.0, t = 0.0;
};

struct LearnedTape {
    std::vector<LearnedIterTape> iters;
    double zf_max = 0.0;
};

/// One iteration in place on (m, z, beta). `n` is zero-based.
inline void learned_iteration(const LearnedAdmm& M, const acq::MeasurementOperator& op, const CArray& y,
                              double zf_max, int n, CArray& m, CArray& z, CArray& beta,
                              LearnedIterTape* tape) {
    const std::size_t nt = op.n_tsl(), nc = op.n_coils(), ny = op.ny(), nx = op.nx(), np = ny * nx;
    const double eta = std::exp(M.log_eta[static_cast<std::size_t>(n)]);
    const double t = std::max(M.theta[static_cast<std::size_t>(n)], 0.0) * zf_max;
    const std::size_t size = m.size();

    // D: d = A m - y + P Gamma(A m, y).
    CArray am, d;
    op.apply(m, am);
    d = am;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= y[i];
    nnet::TwoLayerNet::Cache cache;
    for (std::size_t c = 0; c < nc; ++c)
        for (std::size_t i = 0; i < nt; ++i) {
            const std::size_t s = c * nt + i;
            const auto corr = M.gamma.forward(detail::gamma_input(am, y, s, ny, nx), cache);
            detail::unpack_add(corr.data(), np, d.data() + s * np, op.mask.mask.data() + i * np);
        }

    // M: penalized least-squares correction plus Pi.
    CArray atd;
    op.apply_adjoint(d, atd);
    CArray rhs(m.shape());
    for (std::size_t i = 0; i < size; ++i) rhs[i] = -(atd[i] + eta * (m[i] - z[i] + beta[i]));
    CArray delta = solve_shifted_normal(op, eta, rhs, M.cfg.cg_iters, M.cfg.cg_tol, n + 1);
    CArray mc(m.shape());
    for (std::size_t i = 0; i < size; ++i) mc[i] = m[i] + delta[i];
    CArray mnew = mc;
    for (std::size_t i = 0; i < nt; ++i) {
        const auto corr = M.pi.forward(detail::pi_input(mc, z, beta, atd, i, ny, nx), cache);
        detail::unpack_add(corr.data(), np, mnew.data() + i * np);
    }

    // Z: shrinkage of m + beta plus Lambda.
    CArray v(m.shape());
    for (std::size_t i = 0; i < size; ++i) v[i] = mnew[i] + beta[i];
    CArray znew = v;
    if (t > 0.0) shrink_stack(znew, M.cfg.transform, t);
    for (std::size_t i = 0; i < nt; ++i) {
        const auto corr = M.lambda.forward(detail::plane(v, i, ny, nx), cache);
        detail::unpack_add(corr.data(), np, znew.data() + i * np);
    }

    if (tape) {
        tape->m = m;
        tape->z = z;
        tape->beta = beta;
        tape->am = std::move(am);
        tape->atd = atd;
        tape->delta = delta;
        tape->mc = mc;
        tape->mnew = mnew;
        tape->v = v;
        tape->znew = znew;
        tape->eta = eta;
        tape->t = t;
    }
    dual_update(beta, mnew, znew, eta);
    m = std::move(mnew);
    z = std::move(znew);
}

/// Forward pass from the zero-filled start; returns the final m.
inline CArray learned_forward(const LearnedAdmm& M, const acq::MeasurementOperator& op, const acq::KSpaceData& y,
                              LearnedTape* tape) {
    if (!M.initialized()) throw ReconError("learned ADMM: model is untrained (no operators loaded)");
    const ADMMState init = admm_init(y, op.coils);
    CArray m = init.m.images, z = init.z.images, beta = init.beta.images;
    const double zf_max = max_abs(m);
    if (tape) {
        tape->iters.assign(static_cast<std::size_t>(M.cfg.n_iters), {});
        tape->zf_max = zf_max;
    }
    for (int n = 0; n < M.cfg.n_iters; ++n)
        learned_iteration(M, op, y.y, zf_max, n, m, z, beta, tape ? &tape->iters[static_cast<std::size_t>(n)] : nullptr);
    return m;
}

/// Reverse pass for upstream gradient `g_out` = dL/dm_final (dL/dRe + i dL/dIm).
/// Parameter gradients are added into `grad`. The CG solve is differentiated
/// implicitly, which is exact when the forward solve converged.
inline void learned_backward(const LearnedAdmm& M, const acq::MeasurementOperator& op, const acq::KSpaceData& y,
                             const LearnedTape& tape, const CArray& g_out, LearnedAdmm& grad) {
    const std::size_t nt = op.n_tsl(), nc = op.n_coils(), ny = op.ny(), nx = op.nx(), np = ny * nx;
    CArray gm = g_out, gz(g_out.shape()), gb(g_out.shape());
    nnet::TwoLayerNet::Cache cache;
    const std::size_t size = gm.size();
    for (int n = M.cfg.n_iters - 1; n >= 0; --n) {
        const LearnedIterTape& T = tape.iters[static_cast<std::size_t>(n)];
        const double eta = T.eta;
        double geta = 0.0, gt = 0.0;

        // Dual update.
        CArray gmnew(gm.shape()), gznew(gm.shape()), gb_in = gb;
        for (std::size_t i = 0; i < size; ++i) {
            gmnew[i] = gm[i] + eta * gb[i];
            gznew[i] = gz[i] - eta * gb[i];
            geta += gb[i].real() * (T.mnew[i] - T.znew[i]).real() + gb[i].imag() * (T.mnew[i] - T.znew[i]).imag();
        }

        // Z-update.
        CArray gv(gm.shape());
        if (T.t > 0.0)
            gt = shrink_stack_backward(T.v, M.cfg.transform, T.t, gznew, gv);
        else
            gv = gznew;
        for (std::size_t i = 0; i < nt; ++i) {
            M.lambda.forward(detail::plane(T.v, i, ny, nx), cache);
            const auto dx = M.lambda.backward(cache, detail::plane(gznew, i, ny, nx), grad.lambda);
            detail::unpack_add(dx.data(), np, gv.data() + i * np);
        }
        for (std::size_t i = 0; i < size; ++i) {
            gmnew[i] += gv[i];
            gb_in[i] += gv[i];
        }

        // Pi correction.
        CArray gmc = gmnew, gz_in(gm.shape()), gatd(gm.shape());
        for (std::size_t i = 0; i < nt; ++i) {
            M.pi.forward(detail::pi_input(T.mc, T.z, T.beta, T.atd, i, ny, nx), cache);
            const auto dx = M.pi.backward(cache, detail::plane(gmnew, i, ny, nx), grad.pi);
            detail::unpack_add(dx.data(), np, gmc.data() + i * np);
            std::vector<cplx> gzb(np);
            detail::unpack_add(dx.data() + 2 * np, np, gzb.data());
            for (std::size_t p = 0; p < np; ++p) {
                gz_in[i * np + p] += gzb[p];
                gb_in[i * np + p] -= gzb[p];
            }
            detail::unpack_add(dx.data() + 4 * np, np, gatd.data() + i * np);
        }

        // mc = m + (A^H A + eta)^-1 rhs.
        CArray gm_in = gmc;
        const CArray u = solve_shifted_normal(op, eta, gmc, M.cfg.cg_iters, M.cfg.cg_tol, n + 1);
        geta -= detail::re_inner(u, T.delta);
        for (std::size_t i = 0; i < size; ++i) {
            const cplx r = T.m[i] - T.z[i] + T.beta[i];
            geta -= u[i].real() * r.real() + u[i].imag() * r.imag();
            gatd[i] -= u[i];
            gm_in[i] -= eta * u[i];
            gz_in[i] += eta * u[i];
            gb_in[i] -= eta * u[i];
        }

        // atd = A^H d, d = A m - y + P Gamma(A m, y).
        CArray gd;
        op.apply(gatd, gd);
        CArray gam = gd;
        for (std::size_t c = 0; c < nc; ++c)
            for (std::size_t i = 0; i < nt; ++i) {
                const std::size_t s = c * nt + i;
                M.gamma.forward(detail::gamma_input(T.am, y.y, s, ny, nx), cache);
                // gd is already zero off the mask, which is the P in front of Gamma.
                const auto dx = M.gamma.backward(cache, detail::plane(gd, s, ny, nx), grad.gamma);
                detail::unpack_add(dx.data(), np, gam.data() + s * np);
            }
        CArray gfrom_am;
        op.apply_adjoint(gam, gfrom_am);
        for (std::size_t i = 0; i < size; ++i) gm_in[i] += gfrom_am[i];

        grad.log_eta[static_cast<std::size_t>(n)] += geta * eta;
        if (M.theta[static_cast<std::size_t>(n)] > 0.0) grad.theta[static_cast<std::size_t>(n)] += gt * tape.zf_max;
        gm = std::move(gm_in);
        gz = std::move(gz_in);
        gb = std::move(gb_in);
    }
}

/// Reconstruction with a learned model. Throws when the model holds no operators.
inline ContrastImageSet learned_admm_reconstruct(const acq::KSpaceData& y, const acq::CoilProfile& coils,
                                                 const acq::SamplingMask& mask, const LearnedAdmm& model) {
    acq::KSpaceData data = y;
    data.mask = mask;
    const auto op = make_operator(data, coils);
    return ContrastImageSet(learned_forward(model, op, data, nullptr), tsl_or_index(data));
}

/// Loss_1 = nRMSE(m, truth) with its gradient dL/dm.
inline double complex_nrmse(const CArray& m, const CArray& truth, CArray* grad) {
    require_same_shape(m.shape(), truth.shape(), "complex_nrmse");
    const double tn = norm2(truth.flat());
    if (!(tn > 0.0)) throw Error("complex_nrmse: reference has zero norm");
    double e2 = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) e2 += std::norm(m[i] - truth[i]);
    const double e = std::sqrt(e2);
    if (grad) {
        *grad = CArray(m.shape());
        if (e > 0.0)
            for (std::size_t i = 0; i < m.size(); ++i) (*grad)[i] = (m[i] - truth[i]) / (e * tn);
    }
    return e / tn;
}

/// One training example: acquired data, coils and the complex truth of the acquired contrasts.
struct LearnedSample {
    acq::KSpaceData y;
    acq::CoilProfile coils;
    CArray truth;
};

/// Loss_1 of one sample; adds its gradient (times `scale`) into `grad` when given.
inline double learned_loss(const LearnedAdmm& M, const LearnedSample& s, LearnedAdmm* grad, double scale = 1.0) {
    const auto op = make_operator(s.y, s.coils);
    LearnedTape tape;
    const CArray m = learned_forward(M, op, s.y, grad ? &tape : nullptr);
    CArray g;
    const double loss = complex_nrmse(m, s.truth, grad ? &g : nullptr);
    if (grad) {
        for (auto& v : g.vec()) v *= scale;
        learned_backward(M, op, s.y, tape, g, *grad);
    }
    return loss;
}

struct LearnedTrainConfig {
    int epochs = 3;
    std::size_t batch = 4;
    double lr = 5e-4;
    Seed seed{0};
};

/// Adam on the mean Loss_1 of each mini-batch. Returns the mean training loss per epoch.
inline std::vector<double> train_learned_admm(LearnedAdmm& model, const std::vector<LearnedSample>& train,
                                              const LearnedTrainConfig& cfg) {
    if (train.empty()) throw Error("train_learned_admm: empty training set");
    if (cfg.batch < 1) throw Error("train_learned_admm: batch must be >= 1");
    nnet::AdamState adam(cfg.lr);
    std::vector<double> history;
    std::vector<std::size_t> order(train.size());
    for (int e = 0; e < cfg.epochs; ++e) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(derive(cfg.seed, static_cast<std::uint64_t>(e)));
        rng.shuffle(order);
        double total = 0.0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch) {
            const std::size_t b1 = std::min(order.size(), b0 + cfg.batch);
            LearnedAdmm grad = zero_like(model);
            for (std::size_t k = b0; k < b1; ++k) {
                const double l = learned_loss(model, train[order[k]], &grad, 1.0 / static_cast<double>(b1 - b0));
                if (!std::isfinite(l))
                    throw nnet::NetError("train_learned_admm: non-finite loss at step " + std::to_string(adam.t + 1));
                total += l;
            }
            adam_step(model.params(), grad.params(), adam);
        }
        history.push_back(total / static_cast<double>(train.size()));
    }
    return history;
}

inline nlohmann::json learned_config_json(const LearnedAdmm& m) {
    return {{"n_iters", m.cfg.n_iters},       {"eta", m.cfg.eta},
            {"reg_weight", m.cfg.reg_weight}, {"transform", to_string(m.cfg.transform)},
            {"cg_iters", m.cfg.cg_iters},     {"cg_tol", m.cfg.cg_tol},
            {"width", m.width}};
}

inline void save_learned(const std::filesystem::path& dir, LearnedAdmm& m) {
    auto params = m.params();
    nnet::save_params(dir, nnet::manifest("learned-admm", learned_config_json(m), params), params);
}

inline LearnedAdmm load_learned(const std::filesystem::path& dir) {
    const auto man = nnet::read_manifest(dir);
    if (man.at("kind").get<std::string>() != "learned-admm")
        throw Error("model at " + dir.string() + " is not a learned ADMM model");
    const auto& c = man.at("config");
    ReconConfig base;
    base.n_iters = c.at("n_iters").get<int>();
    base.eta = c.at("eta").get<double>();
    base.reg_weight = c.at("reg_weight").get<double>();
    base.reg_relative = true;
    base.transform = transform_from_string(c.at("transform").get<std::string>());
    base.cg_iters = c.at("cg_iters").get<int>();
    base.cg_tol = c.at("cg_tol").get<double>();
    LearnedAdmm m = make_learned_admm(base, c.at("width").get<std::size_t>(), Seed{0});
    nnet::load_params(dir, man, m.params());
    return m;
}

} // namespace rgmap::recon
