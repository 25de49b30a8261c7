#include "scanpath3d/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <tuple>

#include "scanpath3d/errors.hpp"

namespace scanpath3d {

std::string to_string(ExtractorVariant v) {
    switch (v) {
        case ExtractorVariant::kSpherical: return "spherical";
        case ExtractorVariant::kPlain2d: return "plain2d";
        case ExtractorVariant::kPatch: return "patch";
    }
    return "spherical";
}

ExtractorVariant extractor_variant_from_string(const std::string& s) {
    if (s == "spherical") return ExtractorVariant::kSpherical;
    if (s == "plain2d") return ExtractorVariant::kPlain2d;
    if (s == "patch") return ExtractorVariant::kPatch;
    throw InvalidConfig("unknown extractor variant '" + s + "'");
}

int ExtractorConfig::channels() const {
    return std::accumulate(stage_channels.begin(), stage_channels.end(), 0);
}

FeatureMap feature_map_from_image(const EquirectImage& image) {
    FeatureMap m;
    m.channels = 3;
    m.height = image.height;
    m.width = image.width;
    m.values = Tensor::from({static_cast<std::size_t>(image.height) * image.width, 3}, image.rgb);
    return m;
}

// ---------------------------------------------------------------------------
// Operator construction

namespace {

using OperatorKey = std::tuple<int, int, int, int, int, int>;

std::shared_ptr<const SparseMatrix> cached(const OperatorKey& key,
                                           const std::function<SparseMatrix()>& build) {
    static std::mutex mu;
    static std::map<OperatorKey, std::shared_ptr<const SparseMatrix>> cache;
    {
        std::lock_guard lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    auto op = std::make_shared<const SparseMatrix>(build());
    std::lock_guard lock(mu);
    return cache.emplace(key, op).first->second;
}

inline int wrap(int c, int w) { return ((c % w) + w) % w; }

// Bilinear sample at fractional (row, col); rows clamp, columns wrap.
void push_bilinear(SparseMatrix& s, double row, int col_base, double col_frac, int height, int width) {
    const double fy = std::clamp(row, 0.0, height - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, height - 1);
    const double wy = fy - y0;
    const int x0 = wrap(col_base, width);
    const int x1 = wrap(col_base + 1, width);
    const double wx = col_frac;
    const auto idx = [width](int r, int c) { return static_cast<std::size_t>(r) * width + c; };
    s.push(idx(y0, x0), (1 - wy) * (1 - wx));
    s.push(idx(y0, x1), (1 - wy) * wx);
    s.push(idx(y1, x0), wy * (1 - wx));
    s.push(idx(y1, x1), wy * wx);
}

void check_kernel_size(int k) {
    if (k < 1 || k % 2 == 0) throw ShapeMismatch("kernel size must be odd, got " + std::to_string(k));
}

}  // namespace

std::vector<TapOffset> spherical_tap_offsets(int row, int height, int width, int k) {
    check_kernel_size(k);
    const int radius = k / 2;
    const double step = 2.0 * kPi / width;
    const double lat0 = pixel_to_latlon(static_cast<double>(row), 0.0, height, width).lat;
    const double s0 = std::sin(lat0), c0 = std::cos(lat0);
    std::vector<TapOffset> taps;
    taps.reserve(static_cast<std::size_t>(k) * k);
    for (int i = -radius; i <= radius; ++i) {
        for (int j = -radius; j <= radius; ++j) {
            // Tangent-plane coordinates: x east, y north. Row index grows southward.
            const double x = j * step;
            const double y = -i * step;
            const double rho = std::hypot(x, y);
            double lat = lat0, dlon = 0.0;
            if (rho > 0.0) {
                const double c = std::atan(rho);
                const double sc = std::sin(c), cc = std::cos(c);
                lat = std::asin(std::clamp(cc * s0 + y * sc * c0 / rho, -1.0, 1.0));
                dlon = std::atan2(x * sc, rho * c0 * cc - y * s0 * sc);
            }
            const double frow = (kPi / 2.0 - lat) / kPi * height - 0.5;
            taps.push_back({frow, dlon * width / (2.0 * kPi)});
        }
    }
    return taps;
}

std::shared_ptr<const SparseMatrix> spherical_sampling_operator(int height, int width, int k) {
    check_kernel_size(k);
    return cached({0, height, width, k, 0, 0}, [=] {
        SparseMatrix s;
        s.cols = static_cast<std::size_t>(height) * width;
        for (int r = 0; r < height; ++r) {
            // The pattern depends on latitude only; the same offsets are reused
            // for every column, which makes the operator exactly shift-equivariant.
            const auto taps = spherical_tap_offsets(r, height, width, k);
            std::vector<std::pair<int, double>> col_parts;
            for (const auto& t : taps) {
                const double f = std::floor(t.col_delta);
                col_parts.emplace_back(static_cast<int>(f), t.col_delta - f);
            }
            for (int c = 0; c < width; ++c) {
                for (std::size_t t = 0; t < taps.size(); ++t) {
                    push_bilinear(s, taps[t].row, c + col_parts[t].first, col_parts[t].second, height, width);
                    s.end_row();
                }
            }
        }
        return s;
    });
}

std::shared_ptr<const SparseMatrix> plain_sampling_operator(int height, int width, int k) {
    check_kernel_size(k);
    return cached({1, height, width, k, 0, 0}, [=] {
        SparseMatrix s;
        s.cols = static_cast<std::size_t>(height) * width;
        const int radius = k / 2;
        for (int r = 0; r < height; ++r)
            for (int c = 0; c < width; ++c)
                for (int i = -radius; i <= radius; ++i)
                    for (int j = -radius; j <= radius; ++j) {
                        const int rr = r + i, cc = c + j;
                        if (rr >= 0 && rr < height && cc >= 0 && cc < width) {
                            s.push(static_cast<std::size_t>(rr) * width + cc, 1.0);
                        }
                        s.end_row();
                    }
        return s;
    });
}

namespace {
SparseMatrix pool2(int height, int width, bool solid_angle) {
    if (height % 2 || width % 2) {
        throw IndivisibleShape("2x pooling of " + std::to_string(height) + "x" + std::to_string(width));
    }
    SparseMatrix s;
    s.cols = static_cast<std::size_t>(height) * width;
    for (int r = 0; r < height / 2; ++r) {
        const double w0 = solid_angle ? cell_solid_angle(2 * r, height, width) : 1.0;
        const double w1 = solid_angle ? cell_solid_angle(2 * r + 1, height, width) : 1.0;
        const double norm = 2.0 * (w0 + w1);
        for (int c = 0; c < width / 2; ++c) {
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) {
                    s.push(static_cast<std::size_t>(2 * r + a) * width + 2 * c + b, (a ? w1 : w0) / norm);
                }
            s.end_row();
        }
    }
    return s;
}
}  // namespace

std::shared_ptr<const SparseMatrix> spherical_pool_operator(int height, int width) {
    return cached({2, height, width, 0, 0, 0}, [=] { return pool2(height, width, true); });
}

std::shared_ptr<const SparseMatrix> plain_pool_operator(int height, int width) {
    return cached({3, height, width, 0, 0, 0}, [=] { return pool2(height, width, false); });
}

std::shared_ptr<const SparseMatrix> bilinear_upsample_operator(int from_h, int from_w, int to_h, int to_w) {
    return cached({4, from_h, from_w, to_h, to_w, 0}, [=] {
        SparseMatrix s;
        s.cols = static_cast<std::size_t>(from_h) * from_w;
        const double sy = static_cast<double>(from_h) / to_h;
        const double sx = static_cast<double>(from_w) / to_w;
        for (int r = 0; r < to_h; ++r) {
            const double fy = (r + 0.5) * sy - 0.5;
            for (int c = 0; c < to_w; ++c) {
                const double fx = (c + 0.5) * sx - 0.5;
                const double fl = std::floor(fx);
                push_bilinear(s, fy, static_cast<int>(fl), fx - fl, from_h, from_w);
                s.end_row();
            }
        }
        return s;
    });
}

std::shared_ptr<const SparseMatrix> average_pool_operator(int height, int width, int pool_rows, int pool_cols) {
    if (pool_rows < 1 || pool_cols < 1 || height % pool_rows || width % pool_cols) {
        throw IndivisibleShape(std::to_string(height) + "x" + std::to_string(width) + " map with " +
                               std::to_string(pool_rows) + "x" + std::to_string(pool_cols) + " pooling");
    }
    return cached({5, height, width, pool_rows, pool_cols, 0}, [=] {
        SparseMatrix s;
        s.cols = static_cast<std::size_t>(height) * width;
        const double w = 1.0 / (pool_rows * pool_cols);
        for (int r = 0; r < height / pool_rows; ++r)
            for (int c = 0; c < width / pool_cols; ++c) {
                for (int a = 0; a < pool_rows; ++a)
                    for (int b = 0; b < pool_cols; ++b) {
                        s.push(static_cast<std::size_t>(r * pool_rows + a) * width + c * pool_cols + b, w);
                    }
                s.end_row();
            }
        return s;
    });
}

namespace {

// Patch rows ordered (patch, row-in-patch, col-in-patch); reshaped to patches × (p·p·C).
std::shared_ptr<const SparseMatrix> patch_gather_operator(int height, int width, int p) {
    return cached({6, height, width, p, 0, 0}, [=] {
        SparseMatrix s;
        s.cols = static_cast<std::size_t>(height) * width;
        for (int pr = 0; pr < height / p; ++pr)
            for (int pc = 0; pc < width / p; ++pc)
                for (int a = 0; a < p; ++a)
                    for (int b = 0; b < p; ++b) {
                        s.push(static_cast<std::size_t>(pr * p + a) * width + pc * p + b, 1.0);
                        s.end_row();
                    }
        return s;
    });
}

std::shared_ptr<const SparseMatrix> nearest_upsample_operator(int from_h, int from_w, int factor) {
    return cached({7, from_h, from_w, factor, 0, 0}, [=] {
        SparseMatrix s;
        s.cols = static_cast<std::size_t>(from_h) * from_w;
        for (int r = 0; r < from_h * factor; ++r)
            for (int c = 0; c < from_w * factor; ++c) {
                s.push(static_cast<std::size_t>(r / factor) * from_w + c / factor, 1.0);
                s.end_row();
            }
        return s;
    });
}

FeatureMap conv_with(const FeatureMap& input, const Tensor& kernel, const Tensor& bias, bool spherical) {
    if (kernel.rank() != 4 || kernel.dim(0) != kernel.dim(1) ||
        kernel.dim(2) != static_cast<std::size_t>(input.channels)) {
        throw ShapeMismatch("kernel " + shape_str(kernel.shape()) + " for input " + shape_str(input.shape()));
    }
    const int k = static_cast<int>(kernel.dim(0));
    check_kernel_size(k);
    const std::size_t cout = kernel.dim(3);
    if (bias.defined() && bias.shape() != Shape{cout}) {
        throw ShapeMismatch("bias " + shape_str(bias.shape()) + " for kernel " + shape_str(kernel.shape()));
    }
    const std::size_t pixels = static_cast<std::size_t>(input.height) * input.width;
    const std::size_t cin = static_cast<std::size_t>(input.channels);
    const std::size_t taps = static_cast<std::size_t>(k) * k;
    Tensor out;
    if (k == 1) {
        out = matmul(input.values, reshape(kernel, {cin, cout}));
    } else {
        auto op = spherical ? spherical_sampling_operator(input.height, input.width, k)
                            : plain_sampling_operator(input.height, input.width, k);
        Tensor sampled = reshape(spmm(op, input.values), {pixels, taps * cin});
        out = matmul(sampled, reshape(kernel, {taps * cin, cout}));
    }
    if (bias.defined()) out = add(out, bias);
    return {out, static_cast<int>(cout), input.height, input.width};
}

FeatureMap apply_operator(const std::shared_ptr<const SparseMatrix>& op, const FeatureMap& m, int h, int w) {
    return {spmm(op, m.values), m.channels, h, w};
}

}  // namespace

FeatureMap spherical_conv2d(const FeatureMap& input, const Tensor& kernel, const Tensor& bias) {
    return conv_with(input, kernel, bias, true);
}

FeatureMap plain_conv2d(const FeatureMap& input, const Tensor& kernel, const Tensor& bias) {
    return conv_with(input, kernel, bias, false);
}

TokenSequence pool_and_flatten(const FeatureMap& map, int pool_rows, int pool_cols) {
    auto op = average_pool_operator(map.height, map.width, pool_rows, pool_cols);
    TokenSequence seq;
    seq.values = spmm(op, map.values);
    const int h = map.height / pool_rows, w = map.width / pool_cols;
    seq.anchors.reserve(static_cast<std::size_t>(h) * w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) seq.anchors.push_back(latlon_to_unit3(pixel_to_latlon(r, c, h, w)));
    return seq;
}

// ---------------------------------------------------------------------------
// Extractor

FeatureExtractor::FeatureExtractor(const ExtractorConfig& cfg, ParameterSet& params, Rng& rng) : cfg_(cfg) {
    if (cfg_.height < 1 || cfg_.width != 2 * cfg_.height) {
        throw InvalidConfig("extractor image must be H x 2H, got " + std::to_string(cfg_.height) + "x" +
                            std::to_string(cfg_.width));
    }
    if (cfg_.stage_channels.empty()) throw InvalidConfig("extractor needs at least one stage");
    for (int c : cfg_.stage_channels) {
        if (c < 1) throw InvalidConfig("stage channels must be positive");
    }
    if (cfg_.height % cfg_.pool_rows || cfg_.width % cfg_.pool_cols) {
        throw IndivisibleShape("image " + std::to_string(cfg_.height) + "x" + std::to_string(cfg_.width) +
                               " not divisible by token pooling " + std::to_string(cfg_.pool_rows) + "x" +
                               std::to_string(cfg_.pool_cols));
    }
    const std::size_t k = static_cast<std::size_t>(cfg_.kernel_size);
    if (cfg_.variant == ExtractorVariant::kPatch) {
        const int p = cfg_.patch_size;
        if (p < 1 || cfg_.height % p || cfg_.width % p) throw IndivisibleShape("patch size does not tile the image");
        const std::size_t in = static_cast<std::size_t>(p) * p * 3;
        const std::size_t out = static_cast<std::size_t>(cfg_.channels());
        patch_weight_ = params.add("extractor.patch.weight", {in, out});
        patch_bias_ = params.add("extractor.patch.bias", {out});
        xavier_uniform(patch_weight_, in, out, rng);
        return;
    }
    check_kernel_size(cfg_.kernel_size);
    const int down = 1 << (cfg_.stage_channels.size() - 1);
    if (cfg_.height % down || cfg_.width % down) {
        throw IndivisibleShape("image not divisible by stage downsampling factor " + std::to_string(down));
    }
    std::size_t cin = 3;
    for (std::size_t s = 0; s < cfg_.stage_channels.size(); ++s) {
        const std::size_t cout = static_cast<std::size_t>(cfg_.stage_channels[s]);
        const std::string name = "extractor.stage" + std::to_string(s);
        Tensor kern = params.add(name + ".kernel", {k, k, cin, cout});
        xavier_uniform(kern, k * k * cin, k * k * cout, rng);
        kernels_.push_back(kern);
        biases_.push_back(params.add(name + ".bias", {cout}));
        cin = cout;
    }
}

FeatureMap FeatureExtractor::extract(const EquirectImage& image) const {
    if (image.height != cfg_.height || image.width != cfg_.width) {
        throw ConfigMismatch("image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                             " but extractor expects " + std::to_string(cfg_.height) + "x" +
                             std::to_string(cfg_.width));
    }
    const FeatureMap input = feature_map_from_image(image);
    if (cfg_.variant == ExtractorVariant::kPatch) {
        const int p = cfg_.patch_size;
        const int h = cfg_.height / p, w = cfg_.width / p;
        Tensor patches = reshape(spmm(patch_gather_operator(cfg_.height, cfg_.width, p), input.values),
                                 {static_cast<std::size_t>(h) * w, static_cast<std::size_t>(p) * p * 3});
        Tensor tokens = add(matmul(patches, patch_weight_), patch_bias_);
        return {spmm(nearest_upsample_operator(h, w, p), tokens), cfg_.channels(), cfg_.height, cfg_.width};
    }
    const bool spherical = cfg_.variant == ExtractorVariant::kSpherical;
    std::vector<Tensor> scales;
    FeatureMap x = input;
    for (std::size_t s = 0; s < kernels_.size(); ++s) {
        if (s > 0) {
            auto pool = spherical ? spherical_pool_operator(x.height, x.width) : plain_pool_operator(x.height, x.width);
            x = apply_operator(pool, x, x.height / 2, x.width / 2);
        }
        x = conv_with(x, kernels_[s], biases_[s], spherical);
        x.values = relu(x.values);
        if (x.height == cfg_.height) {
            scales.push_back(x.values);
        } else {
            scales.push_back(spmm(bilinear_upsample_operator(x.height, x.width, cfg_.height, cfg_.width), x.values));
        }
    }
    Tensor all = scales.size() == 1 ? scales.front() : concat(scales, 1);
    return {all, cfg_.channels(), cfg_.height, cfg_.width};
}

}  // namespace scanpath3d
