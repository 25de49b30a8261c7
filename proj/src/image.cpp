#include "scanpath3d/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "scanpath3d/errors.hpp"

namespace scanpath3d {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Rgb8Image read_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw ImageDecode("cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageDecode("libpng init failed");
    }
    Rgb8Image img;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageDecode("corrupt PNG " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    img = Rgb8Image(static_cast<int>(png_get_image_height(png, info)),
                    static_cast<int>(png_get_image_width(png, info)));
    rows.resize(static_cast<std::size_t>(img.height));
    for (int r = 0; r < img.height; ++r) rows[r] = img.px(r, 0);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png_impl(const std::filesystem::path& path, int height, int width, int color_type,
                    int channels, const std::uint8_t* data) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw ImageDecode("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw ImageDecode("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw ImageDecode("PNG encode failed for " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < height; ++r) {
        png_write_row(png, const_cast<png_bytep>(data + static_cast<std::size_t>(r) * width * channels));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// Reads the next PPM header token, skipping '#' comments.
std::string ppm_token(std::istream& in) {
    std::string tok;
    char c;
    while (in.get(c)) {
        if (c == '#') {
            std::string skip;
            std::getline(in, skip);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(c);
    }
    return tok;
}

Rgb8Image read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ImageDecode("cannot open " + path.string());
    const std::string magic = ppm_token(in);
    if (magic != "P6" && magic != "P3") throw ImageDecode("unsupported PPM magic in " + path.string());
    int w = 0, h = 0, maxv = 0;
    try {
        w = std::stoi(ppm_token(in));
        h = std::stoi(ppm_token(in));
        maxv = std::stoi(ppm_token(in));
    } catch (const std::exception&) {
        throw ImageDecode("bad PPM header in " + path.string());
    }
    if (w <= 0 || h <= 0 || maxv <= 0 || maxv > 255) throw ImageDecode("bad PPM header in " + path.string());
    Rgb8Image img(h, w);
    if (magic == "P6") {
        in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
        if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
            throw ImageDecode("truncated PPM " + path.string());
        }
    } else {
        for (auto& p : img.pixels) {
            const std::string t = ppm_token(in);
            if (t.empty()) throw ImageDecode("truncated PPM " + path.string());
            p = static_cast<std::uint8_t>(std::stoi(t));
        }
    }
    if (maxv != 255) {
        for (auto& p : img.pixels) p = static_cast<std::uint8_t>(std::lround(p * 255.0 / maxv));
    }
    return img;
}

}  // namespace

Rgb8Image read_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ImageDecode("cannot open " + path.string());
    unsigned char sig[8] = {};
    in.read(reinterpret_cast<char*>(sig), 8);
    in.close();
    if (png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
    if (sig[0] == 'P' && (sig[1] == '6' || sig[1] == '3')) return read_ppm(path);
    throw ImageDecode("unrecognized image format: " + path.string());
}

void write_png(const std::filesystem::path& path, const Rgb8Image& image) {
    write_png_impl(path, image.height, image.width, PNG_COLOR_TYPE_RGB, 3, image.pixels.data());
}

void write_png_gray(const std::filesystem::path& path, int height, int width,
                    const std::vector<std::uint8_t>& gray) {
    write_png_impl(path, height, width, PNG_COLOR_TYPE_GRAY, 1, gray.data());
}

void write_ppm(const std::filesystem::path& path, const Rgb8Image& image) {
    std::ofstream out(path, std::ios::binary);
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()),
              static_cast<std::streamsize>(image.pixels.size()));
}

EquirectImage to_equirect(const Rgb8Image& image) {
    EquirectImage out(image.height, image.width);
    for (std::size_t i = 0; i < image.pixels.size(); ++i) out.rgb[i] = image.pixels[i] / 255.0;
    return out;
}

Rgb8Image to_rgb8(const EquirectImage& image) {
    Rgb8Image out(image.height, image.width);
    for (std::size_t i = 0; i < image.rgb.size(); ++i) {
        out.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.rgb[i], 0.0, 1.0) * 255.0));
    }
    return out;
}

EquirectImage resize_bilinear(const EquirectImage& image, int height, int width) {
    if (image.height == height && image.width == width) return image;
    EquirectImage out(height, width);
    const double sy = static_cast<double>(image.height) / height;
    const double sx = static_cast<double>(image.width) / width;
    for (int r = 0; r < height; ++r) {
        const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, image.height - 1);
        const double wy = fy - y0;
        for (int c = 0; c < width; ++c) {
            const double fx = (c + 0.5) * sx - 0.5;
            const int xf = static_cast<int>(std::floor(fx));
            const double wx = fx - xf;
            const int x0 = ((xf % image.width) + image.width) % image.width;
            const int x1 = (x0 + 1) % image.width;
            for (int ch = 0; ch < 3; ++ch) {
                const double top = (1 - wx) * image.at(y0, x0, ch) + wx * image.at(y0, x1, ch);
                const double bot = (1 - wx) * image.at(y1, x0, ch) + wx * image.at(y1, x1, ch);
                out.at(r, c, ch) = (1 - wy) * top + wy * bot;
            }
        }
    }
    return out;
}

EquirectImage load_equirect(const std::filesystem::path& path, int height, int width) {
    return resize_bilinear(to_equirect(read_image(path)), height, width);
}

EquirectImage shift_columns(const EquirectImage& image, int shift) {
    EquirectImage out(image.height, image.width);
    const int w = image.width;
    const int s = ((shift % w) + w) % w;
    for (int r = 0; r < image.height; ++r)
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < 3; ++ch) out.at(r, (c + s) % w, ch) = image.at(r, c, ch);
    return out;
}

}  // namespace scanpath3d
