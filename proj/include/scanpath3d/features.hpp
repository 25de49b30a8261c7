#pragma once

#include <memory>
#include <string>
#include <vector>

#include "scanpath3d/geometry.hpp"
#include "scanpath3d/image.hpp"
#include "scanpath3d/nn.hpp"
#include "scanpath3d/tensor.hpp"

namespace scanpath3d {

enum class ExtractorVariant {
    kSpherical,  // tangent-plane kernels (default)
    kPlain2d,    // integer-offset kernels with zero padding
    kPatch,      // ViT-style 8×8 patch embedding
};

std::string to_string(ExtractorVariant v);
ExtractorVariant extractor_variant_from_string(const std::string& s);

struct ExtractorConfig {
    ExtractorVariant variant = ExtractorVariant::kSpherical;
    int height = 128;
    int width = 256;
    std::vector<int> stage_channels{128, 128, 192};
    int kernel_size = 3;
    int patch_size = 8;
    // Token pooling window. 8×8 gives the 16×32 = 512 token layout.
    int pool_rows = 8;
    int pool_cols = 8;

    int channels() const;
    int token_count() const { return (height / pool_rows) * (width / pool_cols); }
};

/// Feature map stored pixel-major: values is (height·width) × channels.
struct FeatureMap {
    Tensor values;
    int channels = 0;
    int height = 0;
    int width = 0;

    Shape shape() const {
        return {static_cast<std::size_t>(channels), static_cast<std::size_t>(height),
                static_cast<std::size_t>(width)};
    }
    double at(int channel, int row, int col) const {
        return values.at((static_cast<std::size_t>(row) * width + col) * channels + channel);
    }
};

/// Token sequence with one sphere anchor per token.
struct TokenSequence {
    Tensor values;  // L × C
    std::vector<Fixation> anchors;

    std::size_t length() const { return anchors.size(); }
};

FeatureMap feature_map_from_image(const EquirectImage& image);

// Cached constant operators on H×W equirectangular grids.

/// (H·W·k²) × (H·W): row (pixel·k² + tap) bilinearly samples the pixel's tangent-plane tap.
std::shared_ptr<const SparseMatrix> spherical_sampling_operator(int height, int width, int k);
std::shared_ptr<const SparseMatrix> plain_sampling_operator(int height, int width, int k);
/// 2× downsampling by solid-angle weighted 2×2 averaging.
std::shared_ptr<const SparseMatrix> spherical_pool_operator(int height, int width);
std::shared_ptr<const SparseMatrix> plain_pool_operator(int height, int width);
std::shared_ptr<const SparseMatrix> bilinear_upsample_operator(int from_h, int from_w, int to_h, int to_w);
std::shared_ptr<const SparseMatrix> average_pool_operator(int height, int width, int pool_rows, int pool_cols);

/// Fractional source (row, col offset) for each kernel tap at a given row,
/// ordered row-major over the k×k taps. Exposed for tests.
struct TapOffset {
    double row = 0.0;      // absolute fractional row
    double col_delta = 0.0;  // column offset relative to the output column
};
std::vector<TapOffset> spherical_tap_offsets(int row, int height, int width, int k);

/// kernel: k × k × Cin × Cout; bias (optional): Cout.
FeatureMap spherical_conv2d(const FeatureMap& input, const Tensor& kernel, const Tensor& bias = {});
FeatureMap plain_conv2d(const FeatureMap& input, const Tensor& kernel, const Tensor& bias = {});

/// 8×8 (configurable) average pooling then row-major flatten. Throws IndivisibleShape.
TokenSequence pool_and_flatten(const FeatureMap& map, int pool_rows = 8, int pool_cols = 8);

class FeatureExtractor {
   public:
    FeatureExtractor() = default;
    FeatureExtractor(const ExtractorConfig& cfg, ParameterSet& params, Rng& rng);

    /// Throws ConfigMismatch when the image size differs from the config.
    FeatureMap extract(const EquirectImage& image) const;
    const ExtractorConfig& config() const { return cfg_; }

   private:
    ExtractorConfig cfg_;
    std::vector<Tensor> kernels_;
    std::vector<Tensor> biases_;
    Tensor patch_weight_;
    Tensor patch_bias_;
};

}  // namespace scanpath3d
