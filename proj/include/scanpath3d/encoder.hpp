#pragma once

#include <span>
#include <vector>

#include "scanpath3d/features.hpp"
#include "scanpath3d/nn.hpp"

namespace scanpath3d {

struct EncoderConfig {
    std::size_t dim = 128;
    std::size_t layers = 4;
    std::size_t heads = 8;
    std::size_t ffn_hidden = 64;
    double dropout = 0.0;
};

/// Sizes of the x/y/z blocks of the 3D code: 42/42/44 for D = 128.
std::array<std::size_t, 3> positional_block_sizes(std::size_t dim);

/// Fixed sinusoidal code of each anchor's (x, y, z). Within a block of size B,
/// entry pair j holds sin(v·ω_j), cos(v·ω_j) with ω_j = 100^(2j/B); an odd
/// trailing entry holds the sine only.
Tensor positional_encoding_3d(std::span<const Fixation> anchors, std::size_t dim);

/// Post-norm transformer encoder layer.
struct EncoderLayer {
    MultiHeadAttention attention;
    LayerNorm norm1;
    FeedForward ffn;
    LayerNorm norm2;

    EncoderLayer() = default;
    EncoderLayer(ParameterSet& params, const std::string& name, const EncoderConfig& cfg, Rng& rng);
    Tensor operator()(const Tensor& x, const ForwardContext& ctx, std::vector<Tensor>* attn = nullptr) const;
};

class Encoder3d {
   public:
    Encoder3d() = default;
    Encoder3d(std::size_t in_channels, const EncoderConfig& cfg, ParameterSet& params, Rng& rng);

    /// Per-token affine C → D.
    Tensor embed(const Tensor& tokens) const { return embedding_(tokens); }
    /// Runs the layer stack on P_0.
    Tensor encode(const Tensor& p0, const ForwardContext& ctx = {}, std::vector<Tensor>* attn = nullptr) const;
    /// embed → + 3D positional code → encode.
    Tensor forward(const TokenSequence& tokens, const ForwardContext& ctx = {}) const;

    const EncoderConfig& config() const { return cfg_; }
    const Linear& embedding() const { return embedding_; }

   private:
    EncoderConfig cfg_;
    Linear embedding_;
    std::vector<EncoderLayer> layers_;
};

}  // namespace scanpath3d
