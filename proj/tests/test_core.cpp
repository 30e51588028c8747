#include "rgmap/core/qtns.hpp"
#include "rgmap/core/rng.hpp"
#include "rgmap/core/types.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using namespace rgmap;

namespace {

fs::path tmp_file(const std::string& name) {
    auto dir = fs::temp_directory_path() / "rgmap_test_core";
    fs::create_directories(dir);
    return dir / name;
}

} // namespace

TEST(Qtns, TwoByTwoRealLayout) {
    RArray a({2, 2}, std::vector<double>{1, 2, 3, 4});
    auto path = tmp_file("real2x2.qtns");
    qtns::write(path, a);
    // 16-byte fixed header + 2 dims * 8 bytes, then 4 float64 values.
    EXPECT_EQ(fs::file_size(path), qtns::header_size(2) + 4 * sizeof(double));
    EXPECT_EQ(qtns::header_size(2), 32u);

    std::ifstream in(path, std::ios::binary);
    char magic[4];
    in.read(magic, 4);
    EXPECT_EQ(std::string(magic, 4), "QTNS");
    std::uint32_t words[3];
    in.read(reinterpret_cast<char*>(words), 12);
    EXPECT_EQ(words[0], 1u);
    EXPECT_EQ(words[1], 2u);
    EXPECT_EQ(words[2], 2u);

    auto back = qtns::read_as<double>(path);
    EXPECT_EQ(back, a);
}

TEST(Qtns, ZeroSizedRejected) {
    EXPECT_THROW(qtns::write(tmp_file("empty.qtns"), RArray(Shape{})), qtns::ZeroSizedError);
    EXPECT_THROW(qtns::write(tmp_file("empty0.qtns"), RArray(Shape{3, 0})), qtns::ZeroSizedError);
}

TEST(Qtns, ComplexZerosBitwise) {
    CArray z({3, 4, 5});
    auto path = tmp_file("cz.qtns");
    qtns::write(path, z);
    auto back = qtns::read_as<cplx>(path);
    ASSERT_EQ(back.shape(), z.shape());
    EXPECT_EQ(std::memcmp(back.data(), z.data(), z.size() * sizeof(cplx)), 0);
}

TEST(Qtns, RoundTripEveryDtypeIsBitwise) {
    Rng rng(Seed{7});
    const Shape s{3, 5, 2};
    Array<float> f(s);
    RArray d(s);
    Array<std::complex<float>> cf(s);
    CArray cd(s);
    MaskArray u(s);
    LabelArray l(s);
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = rng.normal() * 1e3;
        f[i] = static_cast<float>(rng.normal());
        cf[i] = {static_cast<float>(rng.normal()), static_cast<float>(rng.normal())};
        cd[i] = {rng.normal(), -rng.normal() * 1e-300};
        u[i] = static_cast<std::uint8_t>(rng.below(256));
        l[i] = static_cast<std::int32_t>(rng.next_u64());
    }
    qtns::AnyArray all[] = {f, d, cf, cd, u, l};
    for (std::size_t k = 0; k < std::size(all); ++k) {
        auto path = tmp_file("any" + std::to_string(k) + ".qtns");
        qtns::write(path, all[k]);
        auto back = qtns::read(path);
        EXPECT_EQ(back.index(), all[k].index());
        EXPECT_TRUE(back == all[k]) << "dtype slot " << k;
    }
}

TEST(Qtns, BadMagic) {
    auto path = tmp_file("badmagic.qtns");
    {
        std::ofstream out(path, std::ios::binary);
        out << "XXXX0000000000000000";
    }
    EXPECT_THROW(qtns::read(path), qtns::BadMagicError);
}

TEST(Qtns, TruncatedPayload) {
    RArray a({10}, std::vector<double>(10, 1.5));
    auto path = tmp_file("trunc.qtns");
    qtns::write(path, a);
    fs::resize_file(path, fs::file_size(path) - sizeof(double));
    EXPECT_THROW(qtns::read(path), qtns::TruncatedError);
}

TEST(Qtns, UnknownDtype) {
    RArray a({2}, std::vector<double>{1, 2});
    auto path = tmp_file("dtype.qtns");
    qtns::write(path, a);
    {
        std::fstream io(path, std::ios::binary | std::ios::in | std::ios::out);
        io.seekp(8);
        const std::uint32_t bogus = 42;
        io.write(reinterpret_cast<const char*>(&bogus), 4);
    }
    EXPECT_THROW(qtns::read(path), qtns::UnknownDTypeError);
}

TEST(Qtns, MissingFileNamesPath) {
    try {
        qtns::read("/nonexistent/dir/x.qtns");
        FAIL();
    } catch (const qtns::IoError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/x.qtns"), std::string::npos);
    }
    EXPECT_THROW(qtns::write("/nonexistent/dir/x.qtns", RArray({1}, 0.0)), qtns::IoError);
}

TEST(Rng, EqualSeedsEqualStreams) {
    Rng a(Seed{123}), b(Seed{123}), c(Seed{124});
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const double x = a.normal(), y = b.normal(), z = c.normal();
        EXPECT_EQ(x, y);
        differs |= (x != z);
    }
    EXPECT_TRUE(differs);
    EXPECT_NE(derive(Seed{1}, 0).value, derive(Seed{1}, 1).value);
    EXPECT_EQ(derive(Seed{1}, 5).value, derive(Seed{1}, 5).value);
}

TEST(Rng, NormalMoments) {
    Rng rng(Seed{99});
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        s += x;
        s2 += x * x;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

TEST(Types, ContrastImageSetInvariants) {
    EXPECT_THROW(ContrastImageSet(CArray({2, 8, 8}), {5.0}), ShapeError);
    EXPECT_THROW(ContrastImageSet(CArray({2, 8, 8}), {10.0, 5.0}), Error);
    EXPECT_THROW(ContrastImageSet(CArray({1, 8, 8}), {-1.0}), Error);
    EXPECT_NO_THROW(ContrastImageSet(CArray({2, 8, 8}), {0.0, 5.0}));
    EXPECT_THROW(ComplexImage(CArray({4, 8})), ShapeError);
    CArray bad({8, 8});
    bad[3] = cplx(std::nan(""), 0.0);
    EXPECT_THROW(ComplexImage{bad}, Error);
}
