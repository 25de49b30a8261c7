#pragma once

// Central finite-difference oracle shared by the gradient tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "scanpath3d/tensor.hpp"

namespace scanpath3d::testing {

struct GradReport {
    double max_rel_error = 0.0;  // |g_ad − g_fd| / max(1, |g_fd|)
    std::size_t checked = 0;
};

/// `loss` must rebuild the graph from the leaves on every call.
/// `stride` > 1 checks every stride-th entry of each leaf.
inline GradReport gradcheck(const std::function<Tensor()>& loss, std::vector<Tensor> leaves, double h = 1e-5,
                            std::size_t stride = 1) {
    for (auto& l : leaves) l.zero_grad();
    Tensor value = loss();
    backward(value);
    GradReport report;
    for (auto& leaf : leaves) {
        const std::vector<double> ad = leaf.grad();
        auto data = leaf.mutable_data();
        for (std::size_t i = 0; i < data.size(); i += stride) {
            const double saved = data[i];
            double plus, minus;
            {
                NoGradGuard ng;
                data[i] = saved + h;
                plus = loss().item();
                data[i] = saved - h;
                minus = loss().item();
            }
            data[i] = saved;
            const double fd = (plus - minus) / (2.0 * h);
            report.max_rel_error = std::max(report.max_rel_error, std::abs(ad[i] - fd) / std::max(1.0, std::abs(fd)));
            ++report.checked;
        }
    }
    return report;
}

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, bool requires_grad = true, double lo = -1.0,
                            double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = u(rng);
    return Tensor::from(shape, std::move(v), requires_grad);
}

}  // namespace scanpath3d::testing
