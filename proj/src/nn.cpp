#include "scanpath3d/nn.hpp"

#include <cmath>
#include <limits>

#include "scanpath3d/errors.hpp"

namespace scanpath3d {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
    // splitmix64 finalizer over the combined words
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Tensor ParameterSet::add(const std::string& name, const Shape& shape) {
    for (const auto& [n, _] : items_) {
        if (n == name) throw InvalidConfig("duplicate parameter name " + name);
    }
    Tensor t = Tensor::zeros(shape, true);
    items_.emplace_back(name, t);
    return t;
}

std::size_t ParameterSet::count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : items_) n += t.numel();
    return n;
}

Tensor ParameterSet::find(const std::string& name) const {
    for (const auto& [n, t] : items_) {
        if (n == name) return t;
    }
    return {};
}

void ParameterSet::zero_grad() {
    for (auto& [_, t] : items_) {
        Tensor h = t;
        h.zero_grad();
    }
}

void xavier_uniform(Tensor& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : w.mutable_data()) v = (2.0 * uniform01(rng) - 1.0) * s;
}

Tensor dropout(const Tensor& x, const ForwardContext& ctx) {
    if (ctx.dropout <= 0.0 || ctx.rng == nullptr) return x;
    const double keep = 1.0 - ctx.dropout;
    std::vector<double> mask(x.numel());
    for (double& m : mask) m = uniform01(*ctx.rng) < keep ? 1.0 / keep : 0.0;
    return mul(x, Tensor::from(x.shape(), std::move(mask)));
}

Linear::Linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out,
               Rng& rng) {
    weight = params.add(name + ".weight", {in, out});
    bias = params.add(name + ".bias", {out});
    xavier_uniform(weight, in, out, rng);
}

LayerNorm::LayerNorm(ParameterSet& params, const std::string& name, std::size_t dim) {
    gamma = params.add(name + ".gamma", {dim});
    beta = params.add(name + ".beta", {dim});
    for (double& g : gamma.mutable_data()) g = 1.0;
}

Tensor LayerNorm::operator()(const Tensor& x) const {
    return add(mul(layer_norm(x, x.rank() - 1, eps), gamma), beta);
}

FeedForward::FeedForward(ParameterSet& params, const std::string& name, std::size_t dim,
                         std::size_t hidden, Rng& rng)
    : in(params, name + ".in", dim, hidden, rng), out(params, name + ".out", hidden, dim, rng) {}

Tensor FeedForward::operator()(const Tensor& x, const ForwardContext& ctx) const {
    return out(dropout(relu(in(x)), ctx));
}

MultiHeadAttention::MultiHeadAttention(ParameterSet& params, const std::string& name,
                                       std::size_t dim, std::size_t heads_, Rng& rng)
    : q(params, name + ".q", dim, dim, rng),
      k(params, name + ".k", dim, dim, rng),
      v(params, name + ".v", dim, dim, rng),
      o(params, name + ".o", dim, dim, rng),
      heads(heads_) {
    if (heads == 0 || dim % heads != 0) {
        throw InvalidConfig("model dim " + std::to_string(dim) + " not divisible by " +
                            std::to_string(heads) + " heads");
    }
}

Tensor MultiHeadAttention::operator()(const Tensor& query, const Tensor& keys_values,
                                      std::span<const std::uint8_t> mask,
                                      std::vector<Tensor>* weights_out) const {
    return o(attend(q(query), k(keys_values), v(keys_values), mask, weights_out));
}

Tensor MultiHeadAttention::attend(const Tensor& pq, const Tensor& pk, const Tensor& pv,
                                  std::span<const std::uint8_t> mask,
                                  std::vector<Tensor>* weights_out) const {
    const std::size_t dim = pq.dim(1);
    const std::size_t head_dim = dim / heads;
    const double scale_factor = 1.0 / std::sqrt(static_cast<double>(head_dim));
    std::vector<Tensor> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t b = h * head_dim, e = b + head_dim;
        Tensor qh = slice(pq, 1, b, e);
        Tensor kh = slice(pk, 1, b, e);
        Tensor vh = slice(pv, 1, b, e);
        Tensor scores = scale(matmul(qh, transpose(kh)), scale_factor);
        if (!mask.empty()) scores = masked_fill(scores, mask, -std::numeric_limits<double>::infinity());
        Tensor w = softmax(scores, 1);
        if (weights_out) weights_out->push_back(w);
        outs.push_back(matmul(w, vh));
    }
    return heads == 1 ? outs.front() : concat(outs, 1);
}

std::vector<std::uint8_t> causal_mask(std::size_t n) {
    std::vector<std::uint8_t> m(n * n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) m[i * n + j] = 1;
    return m;
}

}  // namespace scanpath3d
