#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "scanpath3d/errors.hpp"
#include "scanpath3d/geometry.hpp"

using namespace scanpath3d;

namespace {

constexpr double kTight = 1e-12;

Fixation random_unit(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    return normalized({n(rng), n(rng), n(rng)});
}

void check_close(const Fixation& a, const Fixation& b, double tol) {
    CHECK(std::abs(a.x - b.x) <= tol);
    CHECK(std::abs(a.y - b.y) <= tol);
    CHECK(std::abs(a.z - b.z) <= tol);
}

}  // namespace

TEST_CASE("latlon_to_unit3 convention anchors") {
    check_close(latlon_to_unit3({0, 0}), {1, 0, 0}, kTight);
    check_close(latlon_to_unit3({kPi / 2, 1.234}), {0, 0, 1}, kTight);
    check_close(latlon_to_unit3({0, kPi / 2}), {0, 1, 0}, kTight);
    CHECK(std::abs(latlon_to_unit3({0.3, -2.1}).norm() - 1.0) < kTight);
}

TEST_CASE("unit3_to_latlon poles, antimeridian and zero vector") {
    auto pole = unit3_to_latlon({0, 0, 1});
    CHECK(pole.lat == doctest::Approx(kPi / 2));
    CHECK(pole.lon == 0.0);
    auto origin = unit3_to_latlon({1, 0, 0});
    CHECK(origin.lat == 0.0);
    CHECK(origin.lon == 0.0);
    auto anti = unit3_to_latlon({-1, 0, 0});
    CHECK(anti.lon == doctest::Approx(-kPi));
    CHECK(anti.lon < kPi);
    CHECK_THROWS_AS(unit3_to_latlon({0, 0, 0}), ZeroVector);
}

TEST_CASE("latlon round trip on random samples") {
    std::mt19937_64 rng(7);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const Fixation p = random_unit(rng);
        const Fixation q = latlon_to_unit3(unit3_to_latlon(p));
        worst = std::max(worst, great_circle_distance(p, q));
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("normalize_longitude is half-open") {
    CHECK(normalize_longitude(kPi) == doctest::Approx(-kPi));
    CHECK(normalize_longitude(-kPi) == doctest::Approx(-kPi));
    CHECK(normalize_longitude(3 * kPi + 0.1) == doctest::Approx(-kPi + 0.1));
    CHECK(normalize_longitude(0.5) == doctest::Approx(0.5));
}

TEST_CASE("pixel_to_latlon cell centers") {
    // Frozen from the closed forms: π/2 − π·0.5/128 and 2π·0.5/256 − π.
    const LatLon ll = pixel_to_latlon(0, 0, 128, 256);
    CHECK(ll.lat == doctest::Approx(1.5585244804918115).epsilon(1e-14));
    CHECK(ll.lon == doctest::Approx(-3.129320807286708).epsilon(1e-14));
    const LatLon center = pixel_to_latlon(63.5, 127.5, 128, 256);
    CHECK(std::abs(center.lat) < kTight);
    CHECK(std::abs(center.lon) < kTight);
    CHECK_THROWS_AS(pixel_to_latlon(128, 0, 128, 256), OutOfRange);
    CHECK_THROWS_AS(pixel_to_latlon(0, -1, 128, 256), OutOfRange);
}

TEST_CASE("pixel round trip is exhaustive identity") {
    int mismatches = 0;
    for (int r = 0; r < 128; ++r)
        for (int c = 0; c < 256; ++c) {
            const PixelIndex p = latlon_to_pixel(pixel_to_latlon(r, c, 128, 256), 128, 256);
            if (p.row != r || p.col != c) ++mismatches;
        }
    CHECK(mismatches == 0);
}

TEST_CASE("great_circle_distance anchors and metric properties") {
    CHECK(great_circle_distance({1, 0, 0}, {1, 0, 0}) == 0.0);
    CHECK(great_circle_distance({1, 0, 0}, {0, 1, 0}) == doctest::Approx(kPi / 2));
    CHECK(great_circle_distance({1, 0, 0}, {-1, 0, 0}) == doctest::Approx(kPi));

    std::mt19937_64 rng(11);
    for (int i = 0; i < 2000; ++i) {
        const Fixation a = random_unit(rng), b = random_unit(rng), c = random_unit(rng);
        const double ab = great_circle_distance(a, b);
        CHECK(std::abs(ab - great_circle_distance(b, a)) < 1e-12);
        CHECK(great_circle_distance(a, c) <= ab + great_circle_distance(b, c) + 1e-9);
        CHECK(ab >= 0.0);
        CHECK(ab <= kPi);
    }
}

TEST_CASE("rotate_about_polar_axis") {
    check_close(rotate_about_polar_axis({1, 0, 0}, kPi / 2), {0, 1, 0}, kTight);
    check_close(rotate_about_polar_axis({0, 0, 1}, 0.77), {0, 0, 1}, kTight);

    std::mt19937_64 rng(3);
    const Fixation p = random_unit(rng);
    Fixation q = p;
    for (int k = 0; k < 6; ++k) q = rotate_about_polar_axis(q, kPi / 3);
    check_close(p, q, 1e-9);

    for (int i = 0; i < 1000; ++i) {
        const Fixation a = random_unit(rng), b = random_unit(rng);
        const double angle = 2 * kPi * std::uniform_real_distribution<double>()(rng);
        const double before = great_circle_distance(a, b);
        const double after = great_circle_distance(rotate_about_polar_axis(a, angle), rotate_about_polar_axis(b, angle));
        CHECK(std::abs(before - after) < 1e-9);
        CHECK(std::abs(rotate_about_polar_axis(a, angle).norm() - 1.0) < 1e-12);
    }
}

TEST_CASE("build_grid size, weights and symmetry") {
    const SphereGrid g = build_grid(128, 256);
    CHECK(g.size() == 32768);
    double total = 0.0;
    bool all_positive = true;
    for (double w : g.weights) {
        total += w;
        all_positive = all_positive && w > 0.0;
    }
    CHECK(all_positive);
    CHECK(std::abs(total - 4 * kPi) < 1e-6);
    CHECK(g.weights[g.index(63, 0)] > g.weights[g.index(0, 0)]);
    CHECK(g.weights[g.index(0, 5)] == doctest::Approx(g.weights[g.index(127, 5)]));
    for (const auto& p : g.points) {
        if (std::abs(p.norm() - 1.0) > 1e-12) FAIL("non-unit grid point");
    }
}
