#pragma once

#include <cstdint>
#include <vector>

#include "scanpath3d/config.hpp"
#include "scanpath3d/nn.hpp"

namespace scanpath3d {

/// Linear warmup to cfg.lr over warmup_epochs, then halved every halve_every epochs.
double lr_schedule(std::size_t epoch, const TrainConfig& cfg);

/// First and second moment accumulators, one buffer per parameter in set order.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t step = 0;

    static AdamState zeros_like(const ParameterSet& params);
};

/// AdamW: p ← p·(1 − lr·wd), then the bias-corrected Adam update from the
/// accumulated gradients. Parameters that never received a gradient see g = 0.
/// Throws ShapeMismatch when `state` does not match `params`.
void optimizer_step(ParameterSet& params, AdamState& state, double lr, const TrainConfig& cfg);

double global_grad_norm(const ParameterSet& params);

/// Rescales all gradients so their global L2 norm is at most max_norm. Returns the norm before clipping.
double clip_gradients(ParameterSet& params, double max_norm);

}  // namespace scanpath3d
