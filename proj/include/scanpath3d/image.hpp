#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace scanpath3d {

/// Equirectangular RGB image with channel values in [0, 1], stored row-major
/// as height × width × 3.
struct EquirectImage {
    int height = 0;
    int width = 0;
    std::vector<double> rgb;

    EquirectImage() = default;
    EquirectImage(int h, int w, double fill = 0.0)
        : height(h), width(w), rgb(static_cast<std::size_t>(h) * w * 3, fill) {}

    double& at(int row, int col, int ch) {
        return rgb[(static_cast<std::size_t>(row) * width + col) * 3 + ch];
    }
    double at(int row, int col, int ch) const {
        return rgb[(static_cast<std::size_t>(row) * width + col) * 3 + ch];
    }
};

/// 8-bit RGB raster used for rendering output.
struct Rgb8Image {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;  // height × width × 3

    Rgb8Image() = default;
    Rgb8Image(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0) {}
    std::uint8_t* px(int row, int col) { return &pixels[(static_cast<std::size_t>(row) * width + col) * 3]; }
    const std::uint8_t* px(int row, int col) const {
        return &pixels[(static_cast<std::size_t>(row) * width + col) * 3];
    }
};

/// Decodes PNG or binary/ASCII PPM by magic bytes. Throws ImageDecode.
Rgb8Image read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Rgb8Image& image);
void write_png_gray(const std::filesystem::path& path, int height, int width,
                    const std::vector<std::uint8_t>& gray);
void write_ppm(const std::filesystem::path& path, const Rgb8Image& image);

EquirectImage to_equirect(const Rgb8Image& image);
Rgb8Image to_rgb8(const EquirectImage& image);

/// Bilinear resize with cell-center alignment and longitudinal wrap.
EquirectImage resize_bilinear(const EquirectImage& image, int height, int width);

/// Reads and resizes in one step.
EquirectImage load_equirect(const std::filesystem::path& path, int height, int width);

/// Cyclic column shift: output column (c + shift) mod W takes input column c.
EquirectImage shift_columns(const EquirectImage& image, int shift);

}  // namespace scanpath3d
