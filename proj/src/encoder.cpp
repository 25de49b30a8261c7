#include "scanpath3d/encoder.hpp"

#include <cmath>

#include "scanpath3d/errors.hpp"

namespace scanpath3d {

std::array<std::size_t, 3> positional_block_sizes(std::size_t dim) {
    const std::size_t b = 2 * (dim / 6);
    return {b, b, dim - 2 * b};
}

Tensor positional_encoding_3d(std::span<const Fixation> anchors, std::size_t dim) {
    const auto blocks = positional_block_sizes(dim);
    std::vector<double> out(anchors.size() * dim);
    for (std::size_t t = 0; t < anchors.size(); ++t) {
        const double coords[3] = {anchors[t].x, anchors[t].y, anchors[t].z};
        std::size_t offset = 0;
        for (int axis = 0; axis < 3; ++axis) {
            const std::size_t b = blocks[axis];
            for (std::size_t i = 0; i < b; i += 2) {
                const double omega = std::pow(100.0, static_cast<double>(i) / static_cast<double>(b));
                const double v = coords[axis] * omega;
                out[t * dim + offset + i] = std::sin(v);
                if (i + 1 < b) out[t * dim + offset + i + 1] = std::cos(v);
            }
            offset += b;
        }
    }
    return Tensor::from({anchors.size(), dim}, std::move(out));
}

EncoderLayer::EncoderLayer(ParameterSet& params, const std::string& name, const EncoderConfig& cfg, Rng& rng)
    : attention(params, name + ".self_attn", cfg.dim, cfg.heads, rng),
      norm1(params, name + ".norm1", cfg.dim),
      ffn(params, name + ".ffn", cfg.dim, cfg.ffn_hidden, rng),
      norm2(params, name + ".norm2", cfg.dim) {}

Tensor EncoderLayer::operator()(const Tensor& x, const ForwardContext& ctx, std::vector<Tensor>* attn) const {
    Tensor h = norm1(add(x, dropout(attention(x, x, {}, attn), ctx)));
    return norm2(add(h, dropout(ffn(h, ctx), ctx)));
}

Encoder3d::Encoder3d(std::size_t in_channels, const EncoderConfig& cfg, ParameterSet& params, Rng& rng)
    : cfg_(cfg), embedding_(params, "encoder.embedding", in_channels, cfg.dim, rng) {
    if (cfg_.heads == 0 || cfg_.dim % cfg_.heads != 0) {
        throw InvalidConfig("encoder dim " + std::to_string(cfg_.dim) + " not divisible by heads " +
                            std::to_string(cfg_.heads));
    }
    for (std::size_t i = 0; i < cfg_.layers; ++i) {
        layers_.emplace_back(params, "encoder.layers." + std::to_string(i), cfg_, rng);
    }
}

Tensor Encoder3d::encode(const Tensor& p0, const ForwardContext& ctx, std::vector<Tensor>* attn) const {
    Tensor x = p0;
    for (const auto& layer : layers_) x = layer(x, ctx, attn);
    return x;
}

Tensor Encoder3d::forward(const TokenSequence& tokens, const ForwardContext& ctx) const {
    Tensor p0 = add(embed(tokens.values), positional_encoding_3d(tokens.anchors, cfg_.dim));
    return encode(p0, ctx);
}

}  // namespace scanpath3d
