#pragma once

// Sphere geometry shared by every other module.
//
// Convention: z is the polar axis, x points toward (lat 0, lon 0), y toward
// (lat 0, lon +90°). Equirectangular pixels use cell centers: row 0 is the
// northernmost row, column 0 starts at lon = -π.

#include <array>
#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

namespace scanpath3d {

inline constexpr double kPi = std::numbers::pi;

/// A point on the unit sphere. The origin is reserved for the decoder's
/// initial query and never produced by the conversions below.
struct Fixation {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double norm() const { return std::sqrt(x * x + y * y + z * z); }
    double dot(const Fixation& o) const { return x * o.x + y * o.y + z * o.z; }
    bool operator==(const Fixation&) const = default;
};

inline Fixation cross(const Fixation& a, const Fixation& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline constexpr Fixation kOriginQuery{0.0, 0.0, 0.0};

struct LatLon {
    double lat = 0.0;  // [-π/2, π/2]
    double lon = 0.0;  // [-π, π)
};

struct PixelIndex {
    int row = 0;
    int col = 0;
    bool operator==(const PixelIndex&) const = default;
};

/// Wraps any longitude into [-π, π).
double normalize_longitude(double lon);

inline double deg_to_rad(double d) { return d * kPi / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / kPi; }

Fixation latlon_to_unit3(const LatLon& ll);

/// Throws ZeroVector for |p| < 1e-9. Poles report lon = 0.
LatLon unit3_to_latlon(const Fixation& p);

/// Cell-center latitude/longitude of an integer pixel. Throws OutOfRange.
LatLon pixel_to_latlon(int row, int col, int height, int width);

/// Same convention, fractional indices (no range check).
LatLon pixel_to_latlon(double row, double col, int height, int width);

/// Nearest cell containing `ll`.
PixelIndex latlon_to_pixel(const LatLon& ll, int height, int width);

/// Fractional (row, col) such that integer values land on cell centers.
std::pair<double, double> latlon_to_pixel_frac(const LatLon& ll, int height, int width);

double great_circle_distance(const Fixation& a, const Fixation& b);

Fixation rotate_about_polar_axis(const Fixation& p, double angle);

/// Renormalizes to unit length; throws ZeroVector on a null vector.
Fixation normalized(const Fixation& p);

/// Latitude-longitude sampling lattice with per-cell solid angles.
struct SphereGrid {
    int height = 0;
    int width = 0;
    std::vector<Fixation> points;  // row-major, cell centers
    std::vector<double> weights;   // steradians

    std::size_t size() const { return points.size(); }
    std::size_t index(int row, int col) const {
        return static_cast<std::size_t>(row) * static_cast<std::size_t>(width) +
               static_cast<std::size_t>(col);
    }
};

SphereGrid build_grid(int height = 128, int width = 256);

/// Solid angle of one cell in `row` of an H×W equirectangular grid.
double cell_solid_angle(int row, int height, int width);

}  // namespace scanpath3d
