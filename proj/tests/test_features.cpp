#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "scanpath3d/errors.hpp"
#include "scanpath3d/features.hpp"

using namespace scanpath3d;
using scanpath3d::testing::gradcheck;
using scanpath3d::testing::random_tensor;

namespace {

FeatureMap random_map(int c, int h, int w, std::mt19937_64& rng) {
    return {random_tensor({static_cast<std::size_t>(h) * w, static_cast<std::size_t>(c)}, rng, false), c, h, w};
}

FeatureMap shift_map(const FeatureMap& m, int shift) {
    std::vector<double> out(m.values.numel());
    for (int r = 0; r < m.height; ++r)
        for (int c = 0; c < m.width; ++c)
            for (int ch = 0; ch < m.channels; ++ch) {
                const int dst = (c + shift) % m.width;
                out[(static_cast<std::size_t>(r) * m.width + dst) * m.channels + ch] = m.at(ch, r, c);
            }
    return {Tensor::from(m.values.shape(), out), m.channels, m.height, m.width};
}

// Gnomonic tap position from an explicit tangent basis at (lat0, lon0 = 0).
std::pair<double, double> oracle_tap(double lat0, int i, int j, int height, int width) {
    const double step = 2.0 * kPi / width;
    const double x = j * step, y = -i * step;
    const Fixation center{std::cos(lat0), 0.0, std::sin(lat0)};
    const Fixation east{0.0, 1.0, 0.0};
    const Fixation north{-std::sin(lat0), 0.0, std::cos(lat0)};
    const Fixation p = normalized({center.x + x * east.x + y * north.x, center.y + x * east.y + y * north.y,
                                   center.z + x * east.z + y * north.z});
    const LatLon ll = unit3_to_latlon(p);
    const double row = (kPi / 2.0 - ll.lat) / kPi * height - 0.5;
    return {row, ll.lon * width / (2.0 * kPi)};
}

}  // namespace

TEST_CASE("identity 1x1 kernel reproduces the input") {
    std::mt19937_64 rng(1);
    const FeatureMap in = random_map(3, 8, 16, rng);
    std::vector<double> eye(9, 0.0);
    for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
    const FeatureMap out = spherical_conv2d(in, Tensor::from({1, 1, 3, 3}, eye));
    for (std::size_t i = 0; i < in.values.numel(); ++i) CHECK(out.values.at(i) == in.values.at(i));
}

TEST_CASE("constant input gives spatially uniform output") {
    std::mt19937_64 rng(2);
    FeatureMap in{Tensor::full({16 * 32, 2}, 0.7), 2, 16, 32};
    const Tensor kernel = random_tensor({3, 3, 2, 4}, rng, false);
    const FeatureMap out = spherical_conv2d(in, kernel);
    for (int ch = 0; ch < 4; ++ch) {
        const double ref = out.at(ch, 0, 0);
        for (int r = 0; r < 16; ++r)
            for (int c = 0; c < 32; ++c) CHECK(std::abs(out.at(ch, r, c) - ref) < 1e-12);
    }
}

TEST_CASE("equator taps coincide with integer offsets") {
    // Odd height puts a row center exactly on the equator.
    const int h = 129, w = 258, row = 64;
    REQUIRE(std::abs(pixel_to_latlon(row, 0, h, w).lat) < 1e-15);
    const auto taps = spherical_tap_offsets(row, h, w, 3);
    double worst = 0.0;
    int t = 0;
    for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j, ++t) {
            const auto [orow, ocol] = oracle_tap(0.0, i, j, h, w);
            CHECK(std::abs(taps[t].row - orow) < 1e-9);
            CHECK(std::abs(taps[t].col_delta - ocol) < 1e-9);
            worst = std::max({worst, std::abs(orow - (row + i)), std::abs(ocol - j)});
        }
    CHECK(worst <= 0.51);
}

TEST_CASE("tap offsets agree with the tangent-basis oracle away from the equator") {
    const int h = 32, w = 64;
    for (int row : {0, 5, 12, 20, 31}) {
        const double lat0 = pixel_to_latlon(row, 0, h, w).lat;
        const auto taps = spherical_tap_offsets(row, h, w, 5);
        int t = 0;
        for (int i = -2; i <= 2; ++i)
            for (int j = -2; j <= 2; ++j, ++t) {
                const auto [orow, ocol] = oracle_tap(lat0, i, j, h, w);
                CHECK(std::abs(taps[t].row - orow) < 1e-9);
                const double dc = std::remainder(taps[t].col_delta - ocol, static_cast<double>(w));
                CHECK(std::abs(dc) < 1e-9);
            }
    }
}

TEST_CASE("spherical conv is equivariant to column shifts") {
    std::mt19937_64 rng(3);
    const FeatureMap in = random_map(2, 16, 32, rng);
    const Tensor kernel = random_tensor({3, 3, 2, 3}, rng, false);
    const Tensor bias = random_tensor({3}, rng, false);
    const FeatureMap base = spherical_conv2d(in, kernel, bias);
    for (int shift : {1, 7, 31}) {
        const FeatureMap moved = spherical_conv2d(shift_map(in, shift), kernel, bias);
        const FeatureMap expected = shift_map(base, shift);
        double worst = 0.0;
        for (std::size_t i = 0; i < moved.values.numel(); ++i)
            worst = std::max(worst, std::abs(moved.values.at(i) - expected.values.at(i)));
        CHECK(worst < 1e-9);
    }
}

TEST_CASE("conv rejects even kernels and channel mismatches") {
    std::mt19937_64 rng(4);
    const FeatureMap in = random_map(2, 8, 16, rng);
    CHECK_THROWS_AS(spherical_conv2d(in, Tensor::zeros({2, 2, 2, 1})), ShapeMismatch);
    CHECK_THROWS_AS(spherical_conv2d(in, Tensor::zeros({3, 3, 5, 1})), ShapeMismatch);
}

TEST_CASE("conv gradients match finite differences") {
    std::mt19937_64 rng(5);
    Tensor x = random_tensor({8 * 16, 2}, rng);
    Tensor kernel = random_tensor({3, 3, 2, 2}, rng);
    Tensor probe = random_tensor({8 * 16, 2}, rng, false);
    auto f = [&] {
        const FeatureMap out = spherical_conv2d({x, 2, 8, 16}, kernel);
        return sum(mul(out.values, probe));
    };
    CHECK(gradcheck(f, {x, kernel}).max_rel_error < 1e-6);
}

TEST_CASE("pool_and_flatten shape, constant and single-pixel arithmetic") {
    FeatureMap constant{Tensor::full({128 * 256, 4}, 2.5), 4, 128, 256};
    const TokenSequence t = pool_and_flatten(constant);
    CHECK(t.values.shape() == Shape{512, 4});
    for (double v : t.values.data()) CHECK(v == 2.5);

    std::vector<double> one(16 * 32, 0.0);
    one[9 * 32 + 17] = 64.0;
    const TokenSequence s = pool_and_flatten({Tensor::from({16 * 32, 1}, one), 1, 16, 32});
    REQUIRE(s.length() == 8);
    int nonzero = 0;
    for (std::size_t i = 0; i < 8; ++i) {
        if (s.values.at(i) != 0.0) {
            ++nonzero;
            CHECK(s.values.at(i) == 1.0);
            CHECK(i == (9 / 8) * 4 + 17 / 8);
        }
    }
    CHECK(nonzero == 1);
    CHECK_THROWS_AS(pool_and_flatten({Tensor::zeros({12 * 24, 1}), 1, 12, 24}), IndivisibleShape);
}

TEST_CASE("token anchors round-trip through the pixel convention") {
    const TokenSequence t = pool_and_flatten({Tensor::zeros({128 * 256, 1}), 1, 128, 256});
    REQUIRE(t.length() == 512);
    for (std::size_t i = 0; i < t.length(); ++i) {
        const PixelIndex p = latlon_to_pixel(unit3_to_latlon(t.anchors[i]), 16, 32);
        CHECK(p.row == static_cast<int>(i / 32));
        CHECK(p.col == static_cast<int>(i % 32));
        // Same point as the center of the 8×8 block on the full grid.
        const LatLon full = pixel_to_latlon(p.row * 8 + 3.5, p.col * 8 + 3.5, 128, 256);
        CHECK(great_circle_distance(latlon_to_unit3(full), t.anchors[i]) < 1e-12);
    }
}

TEST_CASE("extract: toy shape contract and zero image") {
    ParameterSet params;
    Rng rng(6);
    ExtractorConfig cfg;
    cfg.height = 16;
    cfg.width = 32;
    cfg.stage_channels = {4, 4, 4};
    FeatureExtractor ex(cfg, params, rng);
    const FeatureMap f = ex.extract(EquirectImage(16, 32, 0.0));
    CHECK(f.shape() == Shape{12, 16, 32});
    for (double v : f.values.data()) CHECK(v == 0.0);

    EquirectImage img(16, 32);
    std::mt19937_64 g(6);
    for (double& v : img.rgb) v = std::uniform_real_distribution<double>()(g);
    const FeatureMap f2 = ex.extract(img);
    double mx = 0.0;
    for (double v : f2.values.data()) mx = std::max(mx, v);
    CHECK(mx > 0.0);
    CHECK_THROWS_AS(ex.extract(EquirectImage(8, 16)), ConfigMismatch);
}

TEST_CASE("extract: ablation variants keep the shape contract") {
    for (auto variant : {ExtractorVariant::kPlain2d, ExtractorVariant::kPatch}) {
        ParameterSet params;
        Rng rng(7);
        ExtractorConfig cfg;
        cfg.variant = variant;
        cfg.height = 16;
        cfg.width = 32;
        cfg.stage_channels = {2, 3, 5};
        FeatureExtractor ex(cfg, params, rng);
        EquirectImage img(16, 32, 0.5);
        const FeatureMap f = ex.extract(img);
        CHECK(f.shape() == Shape{10, 16, 32});
        CHECK(pool_and_flatten(f).values.shape() == Shape{8, 10});
    }
    CHECK(extractor_variant_from_string(to_string(ExtractorVariant::kPatch)) == ExtractorVariant::kPatch);
    CHECK_THROWS_AS(extractor_variant_from_string("vit"), InvalidConfig);
}

TEST_CASE("extract: default configuration produces 448 x 128 x 256 and 512 tokens") {
    ParameterSet params;
    Rng rng(8);
    FeatureExtractor ex(ExtractorConfig{}, params, rng);
    NoGradGuard ng;
    const FeatureMap f = ex.extract(EquirectImage(128, 256, 0.25));
    CHECK(f.shape() == Shape{448, 128, 256});
    const TokenSequence t = pool_and_flatten(f);
    CHECK(t.values.shape() == Shape{512, 448});
}
