#pragma once

#include <span>
#include <vector>

#include "scanpath3d/geometry.hpp"
#include "scanpath3d/nn.hpp"

namespace scanpath3d {

struct DecoderConfig {
    std::size_t dim = 128;
    std::size_t layers = 4;
    std::size_t heads = 8;
    std::size_t ffn_hidden = 64;
    std::size_t max_length = 30;
    double dropout = 0.0;
};

/// Standard sinusoidal step code: row p, column 2i → sin(p / 10000^(2i/D)),
/// column 2i+1 → cos of the same angle.
Tensor positional_encoding_1d(std::size_t steps, std::size_t dim);

/// Post-norm decoder layer: causal self-attention, cross-attention, FFN.
struct DecoderLayer {
    MultiHeadAttention self_attention;
    LayerNorm norm1;
    MultiHeadAttention cross_attention;
    LayerNorm norm2;
    FeedForward ffn;
    LayerNorm norm3;

    DecoderLayer() = default;
    DecoderLayer(ParameterSet& params, const std::string& name, const DecoderConfig& cfg, Rng& rng);
};

/// Per-layer projected keys/values reused across incremental steps.
struct DecoderCache {
    struct Layer {
        Tensor self_keys;
        Tensor self_values;
        Tensor cross_keys;
        Tensor cross_values;
    };
    std::vector<Layer> layers;
    std::size_t length = 0;  // steps already decoded
};

class FixationDecoder {
   public:
    FixationDecoder() = default;
    FixationDecoder(const DecoderConfig& cfg, ParameterSet& params, Rng& rng);

    /// Affine 3 → D per fixation; one row per input.
    Tensor embed_fixations(std::span<const Fixation> fixations) const;

    /// inputs = p_0 … p_{T-1}; returns Z_1 … Z_T as T × D. Throws SequenceTooLong.
    Tensor decode_teacher_forced(std::span<const Fixation> inputs, const Tensor& memory,
                                 const ForwardContext& ctx = {},
                                 std::vector<Tensor>* cross_attn = nullptr) const;

    /// history = p_0 … p_{t-1}; returns Z_t as 1 × D. With a cache only the
    /// newest input is processed, and the cache must hold exactly t-1 steps
    /// (CacheInconsistent otherwise). Without a cache the full prefix is rerun.
    Tensor decode_step(std::span<const Fixation> history, const Tensor& memory, DecoderCache* cache) const;

    const DecoderConfig& config() const { return cfg_; }

   private:
    DecoderConfig cfg_;
    Linear embedding_;
    std::vector<DecoderLayer> layers_;
};

}  // namespace scanpath3d
