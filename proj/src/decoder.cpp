#include "scanpath3d/decoder.hpp"

#include <cmath>

#include "scanpath3d/errors.hpp"

namespace scanpath3d {

Tensor positional_encoding_1d(std::size_t steps, std::size_t dim) {
    std::vector<double> out(steps * dim);
    for (std::size_t p = 0; p < steps; ++p) {
        for (std::size_t i = 0; i < dim; i += 2) {
            const double angle =
                static_cast<double>(p) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(dim));
            out[p * dim + i] = std::sin(angle);
            if (i + 1 < dim) out[p * dim + i + 1] = std::cos(angle);
        }
    }
    return Tensor::from({steps, dim}, std::move(out));
}

DecoderLayer::DecoderLayer(ParameterSet& params, const std::string& name, const DecoderConfig& cfg, Rng& rng)
    : self_attention(params, name + ".self_attn", cfg.dim, cfg.heads, rng),
      norm1(params, name + ".norm1", cfg.dim),
      cross_attention(params, name + ".cross_attn", cfg.dim, cfg.heads, rng),
      norm2(params, name + ".norm2", cfg.dim),
      ffn(params, name + ".ffn", cfg.dim, cfg.ffn_hidden, rng),
      norm3(params, name + ".norm3", cfg.dim) {}

FixationDecoder::FixationDecoder(const DecoderConfig& cfg, ParameterSet& params, Rng& rng)
    : cfg_(cfg), embedding_(params, "decoder.embedding", 3, cfg.dim, rng) {
    if (cfg_.heads == 0 || cfg_.dim % cfg_.heads != 0) {
        throw InvalidConfig("decoder dim " + std::to_string(cfg_.dim) + " not divisible by heads " +
                            std::to_string(cfg_.heads));
    }
    if (cfg_.max_length == 0) throw InvalidConfig("decoder max_length must be positive");
    for (std::size_t i = 0; i < cfg_.layers; ++i) {
        layers_.emplace_back(params, "decoder.layers." + std::to_string(i), cfg_, rng);
    }
}

Tensor FixationDecoder::embed_fixations(std::span<const Fixation> fixations) const {
    std::vector<double> xyz;
    xyz.reserve(fixations.size() * 3);
    for (const auto& p : fixations) xyz.insert(xyz.end(), {p.x, p.y, p.z});
    return embedding_(Tensor::from({fixations.size(), 3}, std::move(xyz)));
}

Tensor FixationDecoder::decode_teacher_forced(std::span<const Fixation> inputs, const Tensor& memory,
                                              const ForwardContext& ctx, std::vector<Tensor>* cross_attn) const {
    const std::size_t t = inputs.size();
    if (t == 0) throw SequenceTooLong("empty decoder input");
    if (t > cfg_.max_length) {
        throw SequenceTooLong(std::to_string(t) + " steps exceeds max_length " + std::to_string(cfg_.max_length));
    }
    const auto mask = causal_mask(t);
    Tensor x = add(embed_fixations(inputs), positional_encoding_1d(t, cfg_.dim));
    for (const auto& layer : layers_) {
        x = layer.norm1(add(x, dropout(layer.self_attention(x, x, mask), ctx)));
        x = layer.norm2(add(x, dropout(layer.cross_attention(x, memory, {}, cross_attn), ctx)));
        x = layer.norm3(add(x, dropout(layer.ffn(x, ctx), ctx)));
    }
    return x;
}

Tensor FixationDecoder::decode_step(std::span<const Fixation> history, const Tensor& memory,
                                    DecoderCache* cache) const {
    const std::size_t t = history.size();
    if (t == 0) throw SequenceTooLong("decode_step needs at least p_0");
    if (t > cfg_.max_length) {
        throw SequenceTooLong(std::to_string(t) + " steps exceeds max_length " + std::to_string(cfg_.max_length));
    }
    if (cache == nullptr) {
        Tensor all = decode_teacher_forced(history, memory);
        return slice(all, 0, t - 1, t);
    }
    if (cache->length != t - 1) {
        throw CacheInconsistent("cache holds " + std::to_string(cache->length) + " steps, history implies " +
                                std::to_string(t - 1));
    }
    if (cache->layers.size() != layers_.size()) cache->layers.resize(layers_.size());

    Tensor x = add(embed_fixations(history.subspan(t - 1)), slice(positional_encoding_1d(t, cfg_.dim), 0, t - 1, t));
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const DecoderLayer& layer = layers_[l];
        DecoderCache::Layer& c = cache->layers[l];
        const auto& sa = layer.self_attention;
        Tensor k_new = sa.k(x), v_new = sa.v(x);
        c.self_keys = c.self_keys.defined() ? concat({c.self_keys, k_new}, 0) : k_new;
        c.self_values = c.self_values.defined() ? concat({c.self_values, v_new}, 0) : v_new;
        x = layer.norm1(add(x, sa.o(sa.attend(sa.q(x), c.self_keys, c.self_values))));

        const auto& ca = layer.cross_attention;
        if (!c.cross_keys.defined()) {
            c.cross_keys = ca.k(memory);
            c.cross_values = ca.v(memory);
        }
        x = layer.norm2(add(x, ca.o(ca.attend(ca.q(x), c.cross_keys, c.cross_values))));
        x = layer.norm3(add(x, layer.ffn(x, {})));
    }
    cache->length = t;
    return x;
}

}  // namespace scanpath3d
