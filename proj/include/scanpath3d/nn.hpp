#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "scanpath3d/tensor.hpp"

namespace scanpath3d {

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) with 53 random bits; identical across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Derives an independent stream seed from a base seed and a tag.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

/// Ordered, named collection of learnable leaves. Order is creation order and
/// is what the checkpoint format and optimizer state rely on.
class ParameterSet {
   public:
    Tensor add(const std::string& name, const Shape& shape);
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    std::size_t count() const;  // total scalar count
    Tensor find(const std::string& name) const;
    void zero_grad();

   private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

/// Glorot-uniform fill: U(-s, s) with s = sqrt(6 / (fan_in + fan_out)).
void xavier_uniform(Tensor& w, std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Per-call training state. Dropout is active only when rng is set and p > 0.
struct ForwardContext {
    double dropout = 0.0;
    Rng* rng = nullptr;
};

Tensor dropout(const Tensor& x, const ForwardContext& ctx);

struct Linear {
    Tensor weight;  // in × out
    Tensor bias;    // out

    Linear() = default;
    Linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
    Tensor operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }
};

struct LayerNorm {
    Tensor gamma;
    Tensor beta;
    double eps = 1e-5;

    LayerNorm() = default;
    LayerNorm(ParameterSet& params, const std::string& name, std::size_t dim);
    Tensor operator()(const Tensor& x) const;
};

struct FeedForward {
    Linear in;
    Linear out;

    FeedForward() = default;
    FeedForward(ParameterSet& params, const std::string& name, std::size_t dim, std::size_t hidden,
                Rng& rng);
    Tensor operator()(const Tensor& x, const ForwardContext& ctx) const;
};

/// Scaled dot-product multi-head attention with separate Q/K/V/O projections.
struct MultiHeadAttention {
    Linear q, k, v, o;
    std::size_t heads = 1;

    MultiHeadAttention() = default;
    MultiHeadAttention(ParameterSet& params, const std::string& name, std::size_t dim,
                       std::size_t heads, Rng& rng);

    /// `mask` (optional) has query_len × key_len entries; nonzero blocks attention.
    /// When `weights_out` is given, per-head attention matrices are appended to it.
    Tensor operator()(const Tensor& query, const Tensor& keys_values,
                      std::span<const std::uint8_t> mask = {},
                      std::vector<Tensor>* weights_out = nullptr) const;

    /// Attention over already-projected keys and values (decoder cache path).
    Tensor attend(const Tensor& projected_query, const Tensor& projected_keys,
                  const Tensor& projected_values, std::span<const std::uint8_t> mask = {},
                  std::vector<Tensor>* weights_out = nullptr) const;
};

/// Upper-triangular causal mask: entry (i, j) blocked when j > i.
std::vector<std::uint8_t> causal_mask(std::size_t n);

}  // namespace scanpath3d
