#include "rgmap/phantom/phantom.hpp"
#include "rgmap/recon/lplus_s.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

using namespace rgmap;
using namespace rgmap::acq;
using namespace rgmap::recon;

namespace {

double rel_err(const CArray& a, const CArray& b) {
    double n = 0.0, d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        n += std::norm(a[i] - b[i]);
        d += std::norm(b[i]);
    }
    return std::sqrt(n / d);
}

struct Scene {
    ContrastImageSet truth;
    CoilProfile coils;
    SamplingMask mask;
    KSpaceData y;
};

Scene make_scene(std::size_t n, std::size_t n_coils, double r, std::vector<double> tsl, std::uint64_t seed) {
    auto t = phantom::rasterize(phantom::random_phantom(n, n, Seed{seed}));
    Scene s;
    s.truth = phantom::synthesize(t.params, tsl, phantom::PhaseMode::SmoothQuadratic);
    s.coils = make_coils(n_coils, n, n, derive(Seed{seed}, 1));
    s.mask = r == 1.0 ? SamplingMask::full(tsl.size(), n, n)
                      : make_mask_set(n, n, tsl.size(), r, 1.0 / 16.0, derive(Seed{seed}, 2));
    s.y = forward(MeasurementOperator{s.coils, s.mask}, s.truth);
    return s;
}

} // namespace

TEST(SoftThreshold, RealAndComplex) {
    EXPECT_DOUBLE_EQ(soft_threshold(0.5, 0.2), 0.3);
    EXPECT_EQ(soft_threshold(-0.1, 0.2), 0.0);
    EXPECT_DOUBLE_EQ(soft_threshold(-0.5, 0.2), -0.3);
    const cplx c = soft_threshold(cplx(3.0, 4.0), 1.0);
    EXPECT_NEAR(c.real(), 2.4, 1e-15);
    EXPECT_NEAR(c.imag(), 3.2, 1e-15);
    EXPECT_EQ(soft_threshold(cplx(0.1, 0.1), 0.2), cplx{});
}

TEST(Haar, OrthonormalOnEvenAndOddGrids) {
    Rng rng(Seed{4});
    for (auto [ny, nx] : {std::pair<std::size_t, std::size_t>{16, 16}, {15, 12}, {9, 13}}) {
        CArray x({ny, nx});
        for (auto& v : x.vec()) v = cplx(rng.normal(), rng.normal());
        CArray w = x;
        haar2d(w.flat(), ny, nx);
        EXPECT_NEAR(norm2(w.flat()), norm2(x.flat()), 1e-12 * norm2(x.flat()));
        haar2d(w.flat(), ny, nx, true);
        EXPECT_LT(rel_err(w, x), 1e-14);
    }
}

TEST(Haar, KnownCoefficients) {
    CArray x({2, 2}, std::vector<cplx>{1.0, 2.0, 3.0, 4.0});
    haar2d(x.flat(), 2, 2);
    EXPECT_NEAR(x[0].real(), 5.0, 1e-14);  // coarse: sum / 2
    EXPECT_NEAR(x[1].real(), -1.0, 1e-14); // horizontal detail
    EXPECT_NEAR(x[2].real(), -2.0, 1e-14); // vertical detail
    EXPECT_NEAR(x[3].real(), 0.0, 1e-14);
}

TEST(Shrink, ConstantImageUnchangedAndZeroThresholdIsIdentity) {
    Rng rng(Seed{5});
    CArray c({2, 12, 10}, cplx(0.7, -0.2));
    for (auto tr : {Transform::HaarWavelet, Transform::FiniteDifference}) {
        CArray s = c;
        shrink_stack(s, tr, 10.0);
        EXPECT_LT(rel_err(s, c), 1e-14);
        CArray x({2, 12, 10});
        for (auto& v : x.vec()) v = cplx(rng.normal(), rng.normal());
        CArray y = x;
        shrink_stack(y, tr, 0.0);
        EXPECT_LT(rel_err(y, x), 1e-14);
    }
}

TEST(Shrink, IsNonExpansive) {
    Rng rng(Seed{6});
    for (auto tr : {Transform::HaarWavelet, Transform::FiniteDifference}) {
        for (int trial = 0; trial < 5; ++trial) {
            CArray a({1, 16, 16}), b({1, 16, 16});
            for (auto& v : a.vec()) v = cplx(rng.normal(), rng.normal());
            for (auto& v : b.vec()) v = cplx(rng.normal(), rng.normal());
            CArray d0(a.shape());
            for (std::size_t i = 0; i < a.size(); ++i) d0[i] = a[i] - b[i];
            shrink_stack(a, tr, 0.5);
            shrink_stack(b, tr, 0.5);
            CArray d1(a.shape());
            for (std::size_t i = 0; i < a.size(); ++i) d1[i] = a[i] - b[i];
            EXPECT_LE(norm2(d1.flat()), norm2(d0.flat()) * (1.0 + 1e-12));
        }
    }
}

TEST(ConjugateGradient, MatchesDirectSolve) {
    Rng rng(Seed{7});
    const int n = 12;
    Eigen::MatrixXcd B(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) B(i, j) = cplx(rng.normal(), rng.normal());
    const Eigen::MatrixXcd H = B.adjoint() * B + Eigen::MatrixXcd::Identity(n, n);
    CArray b({static_cast<std::size_t>(n)}), x({static_cast<std::size_t>(n)});
    Eigen::VectorXcd be(n);
    for (int i = 0; i < n; ++i) be[i] = b[i] = cplx(rng.normal(), rng.normal());
    const Eigen::VectorXcd ref = H.ldlt().solve(be);
    const auto apply = [&](const CArray& v, CArray& out) {
        out = CArray(v.shape());
        Eigen::Map<const Eigen::VectorXcd> vm(v.data(), n);
        Eigen::Map<Eigen::VectorXcd>(out.data(), n) = H * vm;
    };
    const auto res = conjugate_gradient(apply, b, x, 100, 1e-14);
    EXPECT_FALSE(res.diverged);
    for (int i = 0; i < n; ++i) EXPECT_NEAR(std::abs(x[i] - ref[i]), 0.0, 1e-10);
}

TEST(ZeroFilled, FullMaskRecoversTruthAndZeroGivesZero) {
    auto s = make_scene(32, 4, 1.0, {5, 60}, 1);
    auto zf = zero_filled(s.y, s.coils);
    EXPECT_LT(rel_err(zf.images, s.truth.images), 1e-12);
    KSpaceData zero = s.y;
    zero.y.fill(cplx{});
    auto z = zero_filled(zero, s.coils);
    for (auto v : z.images.vec()) EXPECT_EQ(v, cplx{});
    auto bad = make_coils(3, 32, 32, Seed{1});
    EXPECT_THROW(zero_filled(s.y, bad), ShapeError);
}

TEST(AdmmStep, FullMaskNoRegularizationHitsTruthInOneStep) {
    auto s = make_scene(32, 4, 1.0, {5, 60}, 2);
    ReconConfig cfg;
    MeasurementOperator op{s.coils, s.mask};
    auto st = admm_step(admm_init(s.y, s.coils), op, s.y, cfg);
    EXPECT_LT(rel_err(st.m.images, s.truth.images), cfg.cg_tol);
    EXPECT_EQ(st.iteration, 1);
}

TEST(AdmmStep, DualUpdateUnchangedWhenPrimalMatchesAuxiliary) {
    Rng rng(Seed{3});
    CArray beta({2, 8, 8}), m({2, 8, 8});
    for (auto& v : beta.vec()) v = cplx(rng.normal(), rng.normal());
    for (auto& v : m.vec()) v = cplx(rng.normal(), rng.normal());
    const CArray before = beta;
    dual_update(beta, m, m, 0.7);
    EXPECT_EQ(beta, before);
}

TEST(AdmmStep, NonFiniteDataNamesIteration) {
    auto s = make_scene(16, 2, 2.0, {5, 60}, 3);
    s.y.y[0] = cplx(std::nan(""), 0.0);
    s.y.mask.mask[0] = 1;
    ReconConfig cfg;
    try {
        admm_reconstruct(s.y, s.coils, s.y.mask, cfg);
        FAIL() << "expected a reconstruction error";
    } catch (const ReconError& e) {
        EXPECT_NE(std::string(e.what()).find("iteration 1"), std::string::npos) << e.what();
    }
}

TEST(AdmmReconstruct, FullMaskNoiseless) {
    auto s = make_scene(32, 4, 1.0, {5, 10, 60}, 4);
    ReconConfig cfg;
    cfg.reg_weight = 1e-3;
    auto m = admm_reconstruct(s.y, s.coils, s.mask, cfg);
    // Sparsity shrinkage is unbiased on the truth only up to reg_weight/eta;
    // with reg 0 the result is exact.
    cfg.reg_weight = 0.0;
    m = admm_reconstruct(s.y, s.coils, s.mask, cfg);
    EXPECT_LT(rel_err(m.images, s.truth.images), 1e-6);
}

TEST(AdmmReconstruct, RejectsZeroIterations) {
    auto s = make_scene(16, 2, 1.0, {5, 60}, 5);
    ReconConfig cfg;
    cfg.n_iters = 0;
    EXPECT_THROW(admm_reconstruct(s.y, s.coils, s.mask, cfg), Error);
    cfg.n_iters = 10;
    cfg.mode = Mode::Learned;
    EXPECT_THROW(admm_reconstruct(s.y, s.coils, s.mask, cfg), ReconError);
}

TEST(AdmmReconstruct, BeatsZeroFilledAt68AndIsDataConsistent) {
    for (std::uint64_t seed = 10; seed < 13; ++seed) {
        auto s = make_scene(48, 8, 6.8, {5, 60}, seed);
        auto zf = zero_filled(s.y, s.coils);
        ReconConfig cfg;
        cfg.eta = 0.05;
        cfg.reg_weight = 3e-4 * max_abs(zf.images);
        cfg.transform = Transform::FiniteDifference;
        auto m = admm_reconstruct(s.y, s.coils, s.mask, cfg);
        EXPECT_LT(rel_err(m.images, s.truth.images), rel_err(zf.images, s.truth.images));
        MeasurementOperator op{s.coils, s.mask};
        EXPECT_LE(data_consistency_residual(op, m.images, s.y),
                  data_consistency_residual(op, zf.images, s.y));
    }
}

TEST(AdmmReconstruct, Deterministic) {
    auto s = make_scene(32, 4, 3.0, {5, 60}, 6);
    ReconConfig cfg;
    cfg.reg_weight = 0.01;
    auto a = admm_reconstruct(s.y, s.coils, s.mask, cfg);
    auto b = admm_reconstruct(s.y, s.coils, s.mask, cfg);
    EXPECT_EQ(a.images, b.images);
}

TEST(AdmmReconstruct, NoRegularizationMatchesCgSense) {
    // Overdetermined case: 4 coils at R = 2. With a tiny penalty the first
    // M-update already solves the least-squares problem.
    auto s = make_scene(32, 4, 2.0, {5, 60}, 7);
    ReconConfig cfg;
    cfg.eta = 1e-9;
    cfg.cg_iters = 300;
    cfg.cg_tol = 1e-10;
    auto m = admm_reconstruct(s.y, s.coils, s.mask, cfg);
    auto ref = cg_sense(s.y, s.coils, 300, 1e-12);
    EXPECT_LT(rel_err(m.images, ref.images), 1e-7);
}

TEST(LplusS, ZeroDataGivesZeroComponents) {
    auto s = make_scene(16, 2, 2.0, {5, 10, 60}, 8);
    s.y.y.fill(cplx{});
    auto r = ls_reconstruct(s.y, s.coils, s.mask, LplusSConfig{});
    for (auto v : r.L.images.vec()) EXPECT_EQ(v, cplx{});
    for (auto v : r.S.images.vec()) EXPECT_EQ(v, cplx{});
}

TEST(LplusS, SingleCoilExactDataConsistency) {
    for (double rk : {4.6, 6.8}) {
        auto s = make_scene(32, 1, rk, {5, 10, 20, 40, 60}, 9);
        LplusSConfig cfg;
        cfg.lambda_L = cfg.lambda_S = 0.01;
        auto r = ls_reconstruct(s.y, s.coils, s.mask, cfg);
        EXPECT_LT(r.dc_residual, 1e-10);
    }
}

TEST(LplusS, ObjectiveNonIncreasing) {
    for (std::size_t nc : {1u, 6u}) {
        auto s = make_scene(32, nc, 4.6, {5, 10, 20, 40, 60}, 11);
        LplusSConfig cfg;
        cfg.lambda_L = 0.05;
        cfg.lambda_S = 0.02;
        cfg.max_iters = 30;
        cfg.tol = 1e-12;
        auto r = ls_reconstruct(s.y, s.coils, s.mask, cfg);
        ASSERT_EQ(r.objective.size(), 30u);
        for (std::size_t i = 1; i < r.objective.size(); ++i)
            EXPECT_LE(r.objective[i], r.objective[i - 1] + 1e-8) << "sweep " << i;
        EXPECT_FALSE(r.converged);
    }
}

TEST(LplusS, RankOneSeriesLandsInLowRankPart) {
    // Every pixel shares one T1rho, so the Casorati matrix has rank 1.
    auto t = phantom::rasterize(phantom::random_phantom(32, 32, Seed{12}));
    for (std::size_t p = 0; p < t.params.t1rho_ms.size(); ++p)
        if (t.params.valid_mask[p]) t.params.t1rho_ms[p] = 45.0;
    auto truth = phantom::synthesize(t.params, {5, 10, 20, 40, 60});
    auto coils = make_coils(4, 32, 32, Seed{1});
    auto mask = make_mask_set(32, 32, 5, 3.0, 1.0 / 16.0, Seed{2});
    auto y = forward(MeasurementOperator{coils, mask}, truth);
    LplusSConfig cfg;
    cfg.lambda_L = 1e-3;
    cfg.lambda_S = 1e3;
    cfg.exact_dc = false;
    auto r = ls_reconstruct(y, coils, mask, cfg);
    const double eL = norm2_sq(r.L.images.flat()), eS = norm2_sq(r.S.images.flat());
    EXPECT_GE(eL / (eL + eS), 0.95);
}

TEST(LplusS, RejectsSingleContrastAndBadConfig) {
    auto s = make_scene(16, 2, 2.0, {5}, 13);
    EXPECT_THROW(ls_reconstruct(s.y, s.coils, s.mask, LplusSConfig{}), ReconError);
    LplusSConfig bad;
    bad.lambda_L = 0.0;
    auto s2 = make_scene(16, 2, 2.0, {5, 60}, 13);
    EXPECT_THROW(ls_reconstruct(s2.y, s2.coils, s2.mask, bad), Error);
}

TEST(LplusS, Deterministic) {
    auto s = make_scene(16, 2, 2.0, {5, 20, 60}, 14);
    auto a = ls_reconstruct(s.y, s.coils, s.mask, LplusSConfig{});
    auto b = ls_reconstruct(s.y, s.coils, s.mask, LplusSConfig{});
    EXPECT_EQ(a.L.images, b.L.images);
    EXPECT_EQ(a.S.images, b.S.images);
}

TEST(Shrink, BackwardMatchesFiniteDifferences) {
    // Directional derivative of L(v, t) = Re<w, shrink(v, t)> along a random
    // direction; thresholds are placed away from coefficient moduli.
    Rng rng(Seed{31});
    for (Transform tr : {Transform::HaarWavelet, Transform::FiniteDifference}) {
        CArray v({2, 8, 6}), w(v.shape()), dir(v.shape());
        for (auto& x : v.vec()) x = cplx(rng.normal(), rng.normal());
        for (auto& x : w.vec()) x = cplx(rng.normal(), rng.normal());
        for (auto& x : dir.vec()) x = cplx(rng.normal(), rng.normal());
        const double t = 0.7;
        const auto loss = [&](const CArray& in, double th) {
            CArray z = in;
            shrink_stack(z, tr, th);
            double s = 0.0;
            for (std::size_t i = 0; i < z.size(); ++i) s += (std::conj(w[i]) * z[i]).real();
            return s;
        };
        CArray gv;
        const double gt = shrink_stack_backward(v, tr, t, w, gv);
        const double h = 1e-7;
        CArray vp = v, vm = v;
        for (std::size_t i = 0; i < v.size(); ++i) {
            vp[i] += h * dir[i];
            vm[i] -= h * dir[i];
        }
        double analytic = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) analytic += (std::conj(gv[i]) * dir[i]).real();
        const double fd = (loss(vp, t) - loss(vm, t)) / (2 * h);
        EXPECT_NEAR(analytic, fd, 1e-6 * std::max(1.0, std::abs(fd))) << to_string(tr);
        const double fdt = (loss(v, t + h) - loss(v, t - h)) / (2 * h);
        EXPECT_NEAR(gt, fdt, 1e-6 * std::max(1.0, std::abs(fdt))) << to_string(tr);
    }
}

TEST(AdmmReconstruct, RelativeRegMatchesAbsolute) {
    auto s = make_scene(32, 4, 4.6, {5, 60}, 17);
    const auto zf = zero_filled(s.y, s.coils);
    ReconConfig rel;
    rel.eta = 0.05;
    rel.reg_weight = 1e-3;
    rel.reg_relative = true;
    rel.transform = Transform::FiniteDifference;
    ReconConfig abs = rel;
    abs.reg_relative = false;
    abs.reg_weight = 1e-3 * max_abs(zf.images);
    EXPECT_EQ(admm_reconstruct(s.y, s.coils, s.mask, rel).images,
              admm_reconstruct(s.y, s.coils, s.mask, abs).images);
    auto st = admm_init(s.y, s.coils);
    EXPECT_THROW(admm_step(st, make_operator(s.y, s.coils), s.y, rel), Error);
}
