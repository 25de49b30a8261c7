#include "scanpath3d/geometry.hpp"

#include <algorithm>
#include <string>

#include "scanpath3d/errors.hpp"

namespace scanpath3d {

double normalize_longitude(double lon) {
    double r = std::fmod(lon + kPi, 2.0 * kPi);
    if (r < 0.0) r += 2.0 * kPi;
    r -= kPi;
    // fmod can land exactly on +π after the shift back.
    if (r >= kPi) r -= 2.0 * kPi;
    return r;
}

Fixation latlon_to_unit3(const LatLon& ll) {
    const double c = std::cos(ll.lat);
    return {c * std::cos(ll.lon), c * std::sin(ll.lon), std::sin(ll.lat)};
}

LatLon unit3_to_latlon(const Fixation& p) {
    const double n = p.norm();
    if (n < 1e-9) throw ZeroVector("cannot take lat/lon of a null vector");
    const double rxy = std::hypot(p.x, p.y);
    const double lat = std::atan2(p.z, rxy);
    double lon = 0.0;
    if (rxy > 1e-15 * n) lon = normalize_longitude(std::atan2(p.y, p.x));
    return {lat, lon};
}

LatLon pixel_to_latlon(int row, int col, int height, int width) {
    if (row < 0 || row >= height || col < 0 || col >= width) {
        throw OutOfRange("pixel (" + std::to_string(row) + ", " + std::to_string(col) +
                         ") outside " + std::to_string(height) + "x" + std::to_string(width));
    }
    return pixel_to_latlon(static_cast<double>(row), static_cast<double>(col), height, width);
}

LatLon pixel_to_latlon(double row, double col, int height, int width) {
    return {kPi / 2.0 - kPi * (row + 0.5) / height, 2.0 * kPi * (col + 0.5) / width - kPi};
}

std::pair<double, double> latlon_to_pixel_frac(const LatLon& ll, int height, int width) {
    const double row = (kPi / 2.0 - ll.lat) / kPi * height - 0.5;
    const double col = (ll.lon + kPi) / (2.0 * kPi) * width - 0.5;
    return {row, col};
}

PixelIndex latlon_to_pixel(const LatLon& ll, int height, int width) {
    const auto [r, c] = latlon_to_pixel_frac({ll.lat, normalize_longitude(ll.lon)}, height, width);
    int row = static_cast<int>(std::lround(r));
    int col = static_cast<int>(std::lround(c));
    row = std::clamp(row, 0, height - 1);
    col = ((col % width) + width) % width;
    return {row, col};
}

double great_circle_distance(const Fixation& a, const Fixation& b) {
    return std::atan2(cross(a, b).norm(), a.dot(b));
}

Fixation rotate_about_polar_axis(const Fixation& p, double angle) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    return {c * p.x - s * p.y, s * p.x + c * p.y, p.z};
}

Fixation normalized(const Fixation& p) {
    const double n = p.norm();
    if (n < 1e-9) throw ZeroVector("cannot normalize a null vector");
    return {p.x / n, p.y / n, p.z / n};
}

double cell_solid_angle(int row, int height, int width) {
    const double lat_top = kPi / 2.0 - kPi * row / height;
    const double lat_bottom = kPi / 2.0 - kPi * (row + 1) / height;
    return (2.0 * kPi / width) * (std::sin(lat_top) - std::sin(lat_bottom));
}

SphereGrid build_grid(int height, int width) {
    if (height < 1 || width < 1) throw OutOfRange("grid needs at least one cell");
    SphereGrid g;
    g.height = height;
    g.width = width;
    g.points.reserve(static_cast<std::size_t>(height) * width);
    g.weights.reserve(g.points.capacity());
    for (int r = 0; r < height; ++r) {
        const double w = cell_solid_angle(r, height, width);
        for (int c = 0; c < width; ++c) {
            g.points.push_back(latlon_to_unit3(pixel_to_latlon(r, c, height, width)));
            g.weights.push_back(w);
        }
    }
    return g;
}

}  // namespace scanpath3d
