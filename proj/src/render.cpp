#include "scanpath3d/render.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

#include "scanpath3d/errors.hpp"
#include "scanpath3d/fileio.hpp"

namespace scanpath3d {

namespace {

Fixation combine(const Fixation& a, double sa, const Fixation& b, double sb) {
    return {a.x * sa + b.x * sb, a.y * sa + b.y * sb, a.z * sa + b.z * sb};
}

Fixation slerp(const Fixation& a, const Fixation& b, double t) {
    const double omega = great_circle_distance(a, b);
    if (omega < 1e-12) return a;
    if (kPi - omega < 1e-9) {
        // Antipodal: any great circle works; go through a fixed perpendicular.
        Fixation axis = cross(a, Fixation{0.0, 0.0, 1.0});
        if (axis.norm() < 1e-9) axis = cross(a, Fixation{0.0, 1.0, 0.0});
        const Fixation perp = normalized(cross(axis, a));
        return normalized(combine(a, std::cos(t * kPi), perp, std::sin(t * kPi)));
    }
    const double s = std::sin(omega);
    return normalized(combine(a, std::sin((1.0 - t) * omega) / s, b, std::sin(t * omega) / s));
}

Point2 project(const Fixation& p, int height, int width) {
    const auto [row, col] = latlon_to_pixel_frac(unit3_to_latlon(p), height, width);
    return {col, row};
}

void put(Rgb8Image& img, int x, int y, const Color& c) {
    if (y < 0 || y >= img.height) return;
    x = ((x % img.width) + img.width) % img.width;
    std::uint8_t* px = img.px(y, x);
    px[0] = c[0];
    px[1] = c[1];
    px[2] = c[2];
}

void disc(Rgb8Image& img, double cx, double cy, int r, const Color& c) {
    const int x0 = static_cast<int>(std::lround(cx)), y0 = static_cast<int>(std::lround(cy));
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
            if (dx * dx + dy * dy <= r * r) put(img, x0 + dx, y0 + dy, c);
}

void line(Rgb8Image& img, const Point2& a, const Point2& b, int width, const Color& c) {
    const double len = std::hypot(b[0] - a[0], b[1] - a[1]);
    const int steps = std::max(1, static_cast<int>(std::ceil(len * 2.0)));
    const int r = width / 2;
    for (int i = 0; i <= steps; ++i) {
        const double t = static_cast<double>(i) / steps;
        const double x = a[0] + t * (b[0] - a[0]), y = a[1] + t * (b[1] - a[1]);
        if (r == 0) {
            put(img, static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y)), c);
        } else {
            disc(img, x, y, r, c);
        }
    }
}

Color mix(const Color& a, const Color& b, double t) {
    Color out;
    for (int i = 0; i < 3; ++i) out[i] = static_cast<std::uint8_t>(std::lround(a[i] + t * (b[i] - a[i])));
    return out;
}

}  // namespace

Color fixation_color(std::size_t index, std::size_t count) {
    const double t = count <= 1 ? 0.0 : static_cast<double>(index) / static_cast<double>(count - 1);
    return mix(kRampStart, kRampEnd, t);
}

std::vector<std::vector<Point2>> geodesic_polylines(const Fixation& a, const Fixation& b, int height, int width,
                                                    int samples) {
    const double left = -0.5, right = width - 0.5;
    std::vector<std::vector<Point2>> out(1);
    Point2 prev = project(a, height, width);
    out.back().push_back(prev);
    for (int i = 1; i <= samples; ++i) {
        const Point2 cur = project(slerp(a, b, static_cast<double>(i) / samples), height, width);
        const double dx = cur[0] - prev[0];
        if (std::abs(dx) > width / 2.0) {
            // Unwrap, find where the chord meets the seam, and restart on the other side.
            const double unwrapped = dx > 0 ? cur[0] - width : cur[0] + width;
            const double edge = dx > 0 ? left : right;
            const double t = (edge - prev[0]) / (unwrapped - prev[0]);
            const double y = prev[1] + t * (cur[1] - prev[1]);
            out.back().push_back({edge, y});
            out.push_back({{dx > 0 ? right : left, y}});
        }
        out.back().push_back(cur);
        prev = cur;
    }
    return out;
}

Rgb8Image render_scanpaths(const Rgb8Image& background, std::span<const Scanpath> paths, const RenderOptions& opts) {
    Rgb8Image img = background;
    const int radius = opts.radius > 0 ? opts.radius : std::max(3, img.height / 80);
    const int width = opts.line_width > 0 ? opts.line_width : std::max(1, img.height / 400);
    for (const auto& path : paths) {
        for (std::size_t i = 0; i + 1 < path.size(); ++i) {
            const Color c = mix(fixation_color(i, path.size()), fixation_color(i + 1, path.size()), 0.5);
            for (const auto& poly : geodesic_polylines(path[i], path[i + 1], img.height, img.width,
                                                       opts.samples_per_segment)) {
                for (std::size_t k = 0; k + 1 < poly.size(); ++k) line(img, poly[k], poly[k + 1], width, c);
            }
        }
        for (std::size_t i = 0; i < path.size(); ++i) {
            const Point2 p = project(path[i], img.height, img.width);
            disc(img, p[0], p[1], radius + 1, Color{20, 20, 20});
            disc(img, p[0], p[1], radius, fixation_color(i, path.size()));
        }
    }
    return img;
}

std::vector<std::uint8_t> to_gray8(const SaliencyMap& map) {
    const double hi = map.values.empty() ? 0.0 : *std::ranges::max_element(map.values);
    std::vector<std::uint8_t> out(map.values.size(), 0);
    if (!(hi > 0.0)) return out;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::max(0.0, map.values[i]) / hi));
    }
    return out;
}

void write_raw_map(const std::filesystem::path& path, const SaliencyMap& map) {
    std::string bytes;
    bytes.reserve(map.values.size() * 8);
    for (double v : map.values) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
    }
    write_atomically(path, [&](const std::filesystem::path& tmp) {
        std::ofstream out(tmp, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw ParseError("failed writing " + tmp.string());
    });
}

}  // namespace scanpath3d
