#include "scanpath3d/optimizer.hpp"

#include <cmath>

#include "scanpath3d/errors.hpp"

namespace scanpath3d {

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
    if (epoch < cfg.warmup_epochs) {
        return cfg.lr * static_cast<double>(epoch + 1) / static_cast<double>(cfg.warmup_epochs);
    }
    const std::size_t halvings = (epoch - cfg.warmup_epochs) / cfg.halve_every;
    return cfg.lr * std::ldexp(1.0, -static_cast<int>(halvings));
}

AdamState AdamState::zeros_like(const ParameterSet& params) {
    AdamState s;
    for (const auto& [name, p] : params.items()) {
        s.m.emplace_back(p.numel(), 0.0);
        s.v.emplace_back(p.numel(), 0.0);
    }
    return s;
}

void optimizer_step(ParameterSet& params, AdamState& state, double lr, const TrainConfig& cfg) {
    const auto& items = params.items();
    if (state.m.size() != items.size() || state.v.size() != items.size()) {
        throw ShapeMismatch("optimizer state holds " + std::to_string(state.m.size()) + " buffers for " +
                            std::to_string(items.size()) + " parameters");
    }
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (state.m[i].size() != items[i].second.numel() || state.v[i].size() != items[i].second.numel()) {
            throw ShapeMismatch("optimizer state for " + items[i].first + " has " + std::to_string(state.m[i].size()) +
                                " entries, parameter has shape " + shape_str(items[i].second.shape()));
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    const double decay = 1.0 - lr * cfg.weight_decay;
    for (std::size_t i = 0; i < items.size(); ++i) {
        Tensor p = items[i].second;
        const auto& g = p.impl()->grad;
        auto data = p.mutable_data();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < data.size(); ++j) {
            const double gj = g.empty() ? 0.0 : g[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            data[j] *= decay;
            data[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.eps);
        }
    }
}

double global_grad_norm(const ParameterSet& params) {
    double sq = 0.0;
    for (const auto& [name, p] : params.items())
        for (double g : p.impl()->grad) sq += g * g;
    return std::sqrt(sq);
}

double clip_gradients(ParameterSet& params, double max_norm) {
    const double norm = global_grad_norm(params);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (const auto& [name, p] : params.items())
            for (double& g : p.impl()->grad) g *= s;
    }
    return norm;
}

}  // namespace scanpath3d
