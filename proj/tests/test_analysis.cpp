#include "rgmap/analysis/fit.hpp"
#include "rgmap/analysis/metrics.hpp"
#include "rgmap/analysis/pgm.hpp"
#include "rgmap/phantom/phantom.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>

using namespace rgmap;
using namespace rgmap::analysis;

namespace {

const std::vector<double> kKneeTsl{5, 10, 20, 40, 60};

std::vector<double> series(double s0, double T, const std::vector<double>& t) {
    std::vector<double> s;
    for (double ti : t) s.push_back(s0 * std::exp(-ti / T));
    return s;
}

} // namespace

TEST(TwoPointFit, KnownValues) {
    auto r = two_point_fit(0.882497, 0.223130, 5, 60);
    ASSERT_TRUE(r);
    EXPECT_NEAR(r->t1rho_ms, 40.0, 1e-4);
    EXPECT_NEAR(r->s0, 1.0, 1e-5);
    // Exact inputs recover T1rho = 40 to rounding.
    r = two_point_fit(std::exp(-5.0 / 40), std::exp(-60.0 / 40), 5, 60);
    EXPECT_NEAR(r->t1rho_ms, 40.0, 1e-9);
    EXPECT_FALSE(two_point_fit(0.5, 0.5, 5, 60));
    EXPECT_FALSE(two_point_fit(0.4, 0.5, 5, 60));
    EXPECT_FALSE(two_point_fit(0.4, 0.0, 5, 60));
    EXPECT_THROW(two_point_fit(0.9, 0.5, 60, 5), Error);
}

TEST(TwoPointFit, ForwardThenInvertIsIdentity) {
    Rng rng(Seed{5});
    for (int k = 0; k < 1000; ++k) {
        const double s0 = rng.uniform(0.1, 2.0), T = rng.uniform(5.0, 300.0);
        const double t1 = rng.uniform(0.0, 20.0), t2 = t1 + rng.uniform(5.0, 80.0);
        auto r = two_point_fit(s0 * std::exp(-t1 / T), s0 * std::exp(-t2 / T), t1, t2);
        ASSERT_TRUE(r);
        EXPECT_NEAR(r->t1rho_ms / T, 1.0, 1e-12);
        EXPECT_NEAR(r->s0 / s0, 1.0, 1e-12);
    }
}

TEST(FitPixel, NoiselessFivePoint) {
    FitConfig cfg;
    auto f = fit_monoexp_pixel(series(1.0, 40.0, kKneeTsl), kKneeTsl, cfg, 0.0);
    EXPECT_TRUE(f.converged);
    EXPECT_TRUE(f.valid);
    EXPECT_NEAR(f.s0, 1.0, 1e-9);
    EXPECT_NEAR(f.t1rho_ms / 40.0, 1.0, 1e-9);
}

TEST(FitPixel, TwoPointMatchesClosedForm) {
    FitConfig cfg;
    const std::vector<double> t{1, 65};
    for (double T : {8.0, 40.0, 95.0}) {
        auto s = series(0.7, T, t);
        auto f = fit_monoexp_pixel(s, t, cfg, 0.0);
        auto c = two_point_fit(s[0], s[1], t[0], t[1]);
        EXPECT_TRUE(f.converged);
        EXPECT_NEAR(f.t1rho_ms, c->t1rho_ms, 1e-9 * c->t1rho_ms);
        EXPECT_NEAR(f.s0, c->s0, 1e-9);
    }
}

TEST(FitPixel, AllBelowFloorIsInvalid) {
    FitConfig cfg;
    auto f = fit_monoexp_pixel(series(0.01, 40.0, kKneeTsl), kKneeTsl, cfg, 0.05);
    EXPECT_FALSE(f.valid);
    EXPECT_EQ(f.t1rho_ms, 0.0);
}

TEST(FitPixel, NoisyMatchesGridSearchOracle) {
    // Brute force: S0 on a 1e-3 grid around the log-linear start, T on a
    // 0.01 ms grid over [1, 1000]. The LM optimum must be at least as good as
    // every grid point and sit within one S0 cell and two T cells of the grid
    // optimum.
    FitConfig cfg;
    Rng rng(Seed{21});
    for (int trial = 0; trial < 3; ++trial) {
        const double T0 = 30.0 + 25.0 * trial;
        auto s = series(0.9, T0, kKneeTsl);
        for (auto& v : s) v += 0.01 * rng.normal();
        auto f = fit_monoexp_pixel(s, kKneeTsl, cfg, 0.0);
        ASSERT_TRUE(f.converged);

        double best = 1e300, bs0 = 0, bT = 0;
        for (int i = -60; i <= 60; ++i) {
            const double s0 = std::round(f.s0 * 1000.0) / 1000.0 + i * 1e-3;
            for (int j = 0; j <= 99900; ++j) {
                const double T = 1.0 + 0.01 * j;
                const double c = monoexp_cost(s, kKneeTsl, s0, T);
                if (c < best) {
                    best = c;
                    bs0 = s0;
                    bT = T;
                }
            }
        }
        EXPECT_LE(f.residual, best + 1e-15);
        EXPECT_NEAR(f.s0, bs0, 1e-3);
        EXPECT_NEAR(f.t1rho_ms, bT, 0.02) << "T0=" << T0;
    }
}

TEST(FitMap, NoiselessKneePhantomRecovered) {
    auto t = phantom::rasterize(phantom::knee_preset(128, 128));
    auto set = phantom::synthesize(t.params, kKneeTsl);
    FitConfig cfg;
    const auto start = std::chrono::steady_clock::now();
    auto map = fit_map(set, cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    EXPECT_LT(secs, 2.0);
    double worst = 0.0;
    std::size_t nvalid = 0;
    for (std::size_t p = 0; p < map.t1rho_ms.size(); ++p) {
        if (!t.params.valid_mask[p]) {
            EXPECT_EQ(map.valid_mask[p], 0);
            EXPECT_EQ(map.t1rho_ms[p], 0.0);
            EXPECT_EQ(map.s0[p], 0.0);
            continue;
        }
        if (!map.valid_mask[p]) continue;
        ++nvalid;
        worst = std::max(worst, std::abs(map.t1rho_ms[p] - t.params.t1rho_ms[p]) / t.params.t1rho_ms[p]);
    }
    EXPECT_LT(worst, 1e-6);
    EXPECT_EQ(nvalid, static_cast<std::size_t>(std::count(t.params.valid_mask.vec().begin(),
                                                           t.params.valid_mask.vec().end(), 1)));
}

TEST(FitMap, TwoContrastPathUsesClosedForm) {
    auto t = phantom::rasterize(phantom::random_phantom(32, 32, Seed{3}));
    auto set = phantom::synthesize(t.params, {5, 60});
    auto map = fit_map(set, FitConfig{});
    auto mags = set.magnitudes();
    for (std::size_t p = 0; p < 32 * 32; ++p) {
        auto c = two_point_fit(mags[p], mags[1024 + p], 5, 60);
        if (map.valid_mask[p]) {
            ASSERT_TRUE(c);
            EXPECT_EQ(map.t1rho_ms[p], c->t1rho_ms);
        }
    }
}

TEST(FitMap, RejectsBadShapes) {
    EXPECT_THROW(fit_map(RArray({3, 8, 8}), {1, 2}, FitConfig{}), ShapeError);
    EXPECT_THROW(fit_map(RArray({1, 8, 8}), {1}, FitConfig{}), Error);
    FitConfig bad;
    bad.t1rho_min = 2000;
    EXPECT_THROW(bad.validate(), Error);
}

TEST(Nrmse, Values) {
    RArray a({2}, std::vector<double>{1, 2}), b({2}, std::vector<double>{2, 2});
    EXPECT_NEAR(nrmse(a, b), 0.35355339059327373, 1e-15);
    EXPECT_EQ(nrmse(b, b), 0.0);
    EXPECT_EQ(nrmse(RArray({2}, 0.0), b), 1.0);
    EXPECT_THROW(nrmse(a, RArray({2}, 0.0)), Error);
    MaskArray roi({2}, std::vector<std::uint8_t>{0, 1});
    EXPECT_EQ(nrmse(a, b, &roi), 0.0);
}

TEST(Nrmse, ScaleInvariant) {
    Rng rng(Seed{8});
    RArray e({50}), r({50});
    for (std::size_t i = 0; i < 50; ++i) {
        e[i] = rng.normal();
        r[i] = rng.normal();
    }
    for (double alpha : {1e-3, 0.7, 13.0, 4e5}) {
        RArray ea = e, ra = r;
        for (std::size_t i = 0; i < 50; ++i) {
            ea[i] *= alpha;
            ra[i] *= alpha;
        }
        EXPECT_NEAR(nrmse(ea, ra), nrmse(e, r), 1e-12);
    }
}

TEST(SnrDb, Values) {
    ComplexImage img(CArray({8, 8}, cplx(0.5, 0.0)));
    MaskArray roi({8, 8}, 1);
    EXPECT_NEAR(snr_db(img, roi, 0.05), 20.0, 1e-12);
    EXPECT_NEAR(snr_db(img, roi, 0.5 / std::pow(10.0, 1.5)), 30.0, 1e-12);
    EXPECT_NEAR(snr_db(img, roi, 0.5), 0.0, 1e-12);
    EXPECT_THROW(snr_db(img, MaskArray({8, 8}, 0), 0.1), Error);
    EXPECT_THROW(snr_db(img, roi, 0.0), Error);
}

TEST(RegionStats, ConventionAndConstant) {
    LabelArray labels({2, 4}, std::vector<std::int32_t>{1, 1, 1, 1, 2, 2, 0, 3});
    RArray v({2, 4}, std::vector<double>{3, 1, 4, 2, 40, 40, 99, 7});
    MaskArray valid({2, 4}, std::vector<std::uint8_t>{1, 1, 1, 1, 1, 1, 1, 0});
    auto rows = region_stats(v, labels, &valid);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].label, 1);
    EXPECT_DOUBLE_EQ(rows[0].median, 2.5);
    EXPECT_DOUBLE_EQ(rows[0].q1, 1.75);
    EXPECT_DOUBLE_EQ(rows[0].q3, 3.25);
    EXPECT_DOUBLE_EQ(rows[0].mean, 2.5);
    EXPECT_DOUBLE_EQ(rows[1].mean, 40.0);
    EXPECT_DOUBLE_EQ(rows[1].q1, 40.0);
    EXPECT_DOUBLE_EQ(rows[1].q3, 40.0);
    EXPECT_TRUE(rows[2].empty);
    EXPECT_EQ(rows[2].count, 0u);
}

TEST(RegionStats, MatchesBruteForce) {
    Rng rng(Seed{13});
    LabelArray labels({20, 20});
    RArray v({20, 20});
    for (std::size_t p = 0; p < 400; ++p) {
        labels[p] = static_cast<std::int32_t>(rng.below(4));
        v[p] = rng.normal();
    }
    for (const auto& row : region_stats(v, labels)) {
        std::vector<double> vals;
        for (std::size_t p = 0; p < 400; ++p)
            if (labels[p] == row.label) vals.push_back(v[p]);
        std::sort(vals.begin(), vals.end());
        const auto q = [&](double f) {
            const double pos = f * (vals.size() - 1);
            const std::size_t i = static_cast<std::size_t>(pos);
            return i + 1 < vals.size() ? vals[i] * (1 - (pos - i)) + vals[i + 1] * (pos - i) : vals[i];
        };
        double s = 0;
        for (double x : vals) s += x;
        EXPECT_NEAR(row.mean, s / vals.size(), 1e-12);
        EXPECT_NEAR(row.median, q(0.5), 1e-12);
        EXPECT_NEAR(row.q1, q(0.25), 1e-12);
        EXPECT_NEAR(row.q3, q(0.75), 1e-12);
        EXPECT_LE(row.q1, row.median);
        EXPECT_LE(row.median, row.q3);
    }
}

TEST(Pgm, HeaderAndScaling) {
    auto dir = std::filesystem::temp_directory_path() / "rgmap_test_analysis";
    std::filesystem::create_directories(dir);
    RArray img({2, 3}, std::vector<double>{0, 500, 1000, 2000, -5, 250});
    write_pgm16(dir / "m.pgm", img, 0, 1000);
    std::ifstream in(dir / "m.pgm", std::ios::binary);
    std::string magic;
    int w, h, maxval;
    in >> magic >> w >> h >> maxval;
    in.get();
    EXPECT_EQ(magic, "P5");
    EXPECT_EQ(w, 3);
    EXPECT_EQ(h, 2);
    EXPECT_EQ(maxval, 65535);
    std::vector<unsigned char> px(12);
    in.read(reinterpret_cast<char*>(px.data()), 12);
    auto level = [&](int i) { return px[2 * i] * 256 + px[2 * i + 1]; };
    EXPECT_EQ(level(0), 0);
    EXPECT_EQ(level(1), 32768);
    EXPECT_EQ(level(2), 65535);
    EXPECT_EQ(level(3), 65535);
    EXPECT_EQ(level(4), 0);
    EXPECT_EQ(level(5), 16384);
    EXPECT_TRUE(std::filesystem::exists(dir / "m.pgm.json"));
}
