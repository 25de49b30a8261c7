#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "scanpath3d/render.hpp"

using namespace scanpath3d;
namespace fs = std::filesystem;

namespace {

Fixation deg(double lat, double lon) { return latlon_to_unit3({deg_to_rad(lat), deg_to_rad(lon)}); }

Color at(const Rgb8Image& img, const Fixation& f) {
    const PixelIndex p = latlon_to_pixel(unit3_to_latlon(f), img.height, img.width);
    const std::uint8_t* px = img.px(p.row, p.col);
    return {px[0], px[1], px[2]};
}

bool painted(const Rgb8Image& img, int r, int c) {
    const std::uint8_t* px = img.px(r, c);
    return px[0] != 0 || px[1] != 0 || px[2] != 0;
}

}  // namespace

TEST_CASE("colour ramp runs purple to red") {
    CHECK(fixation_color(0, 30) == kRampStart);
    CHECK(fixation_color(29, 30) == kRampEnd);
    CHECK(fixation_color(0, 1) == kRampStart);
    const Color mid = fixation_color(1, 3);
    CHECK(mid[0] > kRampStart[0]);
    CHECK(mid[2] < kRampStart[2]);
}

TEST_CASE("geodesics split at the antimeridian") {
    const auto crossing = geodesic_polylines(deg(10, 170), deg(-5, -170), 128, 256);
    REQUIRE(crossing.size() == 2);
    CHECK(crossing[0].back()[0] == 255.5);
    CHECK(crossing[1].front()[0] == -0.5);
    CHECK(crossing[0].back()[1] == crossing[1].front()[1]);
    for (const auto& poly : crossing)
        for (std::size_t i = 0; i + 1 < poly.size(); ++i) CHECK(std::abs(poly[i + 1][0] - poly[i][0]) < 3.0);

    const auto plain = geodesic_polylines(deg(0, -10), deg(0, 10), 128, 256);
    REQUIRE(plain.size() == 1);
    CHECK(plain[0].size() == 11);

    // Over the pole the path climbs to the top row instead of running along the latitude.
    const auto polar = geodesic_polylines(deg(80, 0), deg(80, 179), 128, 256);
    double top = 1e9;
    for (const auto& poly : polar)
        for (const auto& p : poly) top = std::min(top, p[1]);
    CHECK(top < 1.0);
}

TEST_CASE("rendering keeps the size and colours the endpoints") {
    const Rgb8Image bg(128, 256);
    const std::vector<Scanpath> paths = {{deg(0, 0), deg(20, 40), deg(-30, 100), deg(5, -60)}};
    const Rgb8Image out = render_scanpaths(bg, paths);
    CHECK(out.height == 128);
    CHECK(out.width == 256);
    CHECK(at(out, paths[0].front()) == kRampStart);
    CHECK(at(out, paths[0].back()) == kRampEnd);
    CHECK(bg.pixels == Rgb8Image(128, 256).pixels);
}

TEST_CASE("a path across lon ±180 leaves the middle of the image untouched") {
    const Rgb8Image bg(128, 256);
    const std::vector<Scanpath> paths = {{deg(0, 165), deg(0, -165)}};
    const Rgb8Image out = render_scanpaths(bg, paths);
    for (int r = 0; r < 128; ++r)
        for (int c = 30; c < 226; ++c) REQUIRE_FALSE(painted(out, r, c));
    // The line itself reaches both borders on the equator rows.
    bool left = false, right = false;
    for (int r = 62; r <= 65; ++r) {
        left |= painted(out, r, 0);
        right |= painted(out, r, 255);
    }
    CHECK(left);
    CHECK(right);
}

TEST_CASE("saliency export helpers") {
    const std::vector<Scanpath> one = {{latlon_to_unit3(pixel_to_latlon(40, 100, 128, 256))}};
    const SaliencyMap map = saliency_from_scanpaths(one, build_grid(128, 256));
    const auto gray = to_gray8(map);
    const auto brightest = std::distance(gray.begin(), std::ranges::max_element(gray));
    const PixelIndex p = latlon_to_pixel(unit3_to_latlon(one[0][0]), 128, 256);
    CHECK(brightest == p.row * 256 + p.col);
    CHECK(gray[static_cast<std::size_t>(brightest)] == 255);
    CHECK(to_gray8(SaliencyMap(4, 8)) == std::vector<std::uint8_t>(32, 0));

    const fs::path file = fs::temp_directory_path() / "scanpath3d_raw_map.bin";
    write_raw_map(file, map);
    std::ifstream in(file, std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    REQUIRE(bytes.size() == 8 * map.values.size());
    std::uint64_t bits = 0;
    const std::size_t i = static_cast<std::size_t>(brightest);
    for (int b = 0; b < 8; ++b) bits |= std::uint64_t(static_cast<unsigned char>(bytes[8 * i + b])) << (8 * b);
    CHECK(std::bit_cast<double>(bits) == map.values[i]);
}
