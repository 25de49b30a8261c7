#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "scanpath3d/image.hpp"
#include "scanpath3d/metrics.hpp"

namespace scanpath3d {

using Color = std::array<std::uint8_t, 3>;

inline constexpr Color kRampStart{128, 0, 160};  // purple
inline constexpr Color kRampEnd{230, 0, 0};      // red

/// Linear purple→red ramp over step index; a one-fixation path is purple.
Color fixation_color(std::size_t index, std::size_t count);

/// Fractional (x, y) pixel coordinates; integers land on cell centers.
using Point2 = std::array<double, 2>;

/// Geodesic a→b sampled at `samples` + 1 points and projected to the image,
/// split into separate polylines wherever it crosses lon = ±180°.
std::vector<std::vector<Point2>> geodesic_polylines(const Fixation& a, const Fixation& b, int height, int width,
                                                    int samples = 10);

struct RenderOptions {
    int samples_per_segment = 10;
    int radius = 0;  // 0: max(3, height / 80)
    int line_width = 0;  // 0: max(1, height / 400)
};

/// Draws each path over a copy of `background`: connecting geodesics first,
/// then fixation discs with a dark rim.
Rgb8Image render_scanpaths(const Rgb8Image& background, std::span<const Scanpath> paths,
                           const RenderOptions& opts = {});

/// Max-normalized 8-bit grayscale; an all-zero map stays black.
std::vector<std::uint8_t> to_gray8(const SaliencyMap& map);

/// Raw little-endian f64 values, row-major.
void write_raw_map(const std::filesystem::path& path, const SaliencyMap& map);

}  // namespace scanpath3d
