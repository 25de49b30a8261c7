#include "scanpath3d/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scanpath3d/errors.hpp"

namespace scanpath3d {

namespace {
const double kLog2Pi = std::log(2.0 * kPi);
}

MixtureHead::MixtureHead(std::size_t dim, const MdnConfig& cfg, ParameterSet& params, Rng& rng) : cfg_(cfg) {
    if (cfg_.components < 1) throw InvalidConfig("mixture needs K >= 1");
    if (cfg_.hidden < 1) throw InvalidConfig("mixture hidden size must be positive");
    const std::size_t k = cfg_.components, h = cfg_.hidden;
    mean_head_ = {Linear(params, "mdn.mean.hidden", dim, h, rng), Linear(params, "mdn.mean.out", h, 3 * k, rng)};
    cov_head_ = {Linear(params, "mdn.cov.hidden", dim, h, rng), Linear(params, "mdn.cov.out", h, 6 * k, rng)};
    weight_head_ = {Linear(params, "mdn.weight.hidden", dim, h, rng), Linear(params, "mdn.weight.out", h, k, rng)};
}

MdnOutputs MixtureHead::forward(const Tensor& z) const {
    const std::size_t t = z.dim(0), k = cfg_.components;
    MdnOutputs out;
    out.steps = t;
    out.components = k;
    out.means = reshape(mean_head_(z), {t * k, 3});
    out.cholesky = reshape(cov_head_(z), {t * k, 6});
    out.logits = weight_head_(z);
    return out;
}

MixtureParams MixtureHead::mdn_params(const Tensor& z) const {
    if (z.rank() != 2 || z.dim(0) != 1) throw ShapeMismatch("mdn_params expects 1 x D, got " + shape_str(z.shape()));
    return params_at(forward(z), 0);
}

MixtureParams params_at(const MdnOutputs& out, std::size_t t) {
    const std::size_t k = out.components;
    MixtureParams p;
    p.components.resize(k);
    const auto logits = out.logits.data().subspan(t * k, k);
    const double mx = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) total += std::exp(logits[i] - mx);
    for (std::size_t i = 0; i < k; ++i) {
        auto& c = p.components[i];
        const auto mu = out.means.data().subspan((t * k + i) * 3, 3);
        const auto raw = out.cholesky.data().subspan((t * k + i) * 6, 6);
        c.mean = {mu[0], mu[1], mu[2]};
        const double l11 = std::exp(raw[0]), l22 = std::exp(raw[1]), l33 = std::exp(raw[2]);
        const double l21 = raw[3], l31 = raw[4], l32 = raw[5];
        // Σ = L Lᵀ
        const double s11 = l11 * l11;
        const double s21 = l21 * l11;
        const double s22 = l21 * l21 + l22 * l22;
        const double s31 = l31 * l11;
        const double s32 = l31 * l21 + l32 * l22;
        const double s33 = l31 * l31 + l32 * l32 + l33 * l33;
        c.covariance = {s11, s21, s31, s21, s22, s32, s31, s32, s33};
        c.weight = std::exp(logits[i] - mx) / total;
    }
    return p;
}

Tensor mixture_nll(const MdnOutputs& out, std::span<const Fixation> targets) {
    const std::size_t t = out.steps, k = out.components;
    if (targets.size() != t) {
        throw ShapeMismatch("nll over " + std::to_string(t) + " steps with " + std::to_string(targets.size()) +
                            " targets");
    }
    std::vector<double> xyz;
    xyz.reserve(t * 3);
    for (const auto& p : targets) xyz.insert(xyz.end(), {p.x, p.y, p.z});
    std::vector<std::size_t> repeat(t * k);
    for (std::size_t i = 0; i < t * k; ++i) repeat[i] = i / k;
    const Tensor target = gather_rows(Tensor::from({t, 3}, std::move(xyz)), repeat);

    // Solve L y = (p - μ) by forward substitution; 1 / L_ii = exp(-a_i).
    const Tensor d = sub(target, out.means);
    const auto col = [](const Tensor& m, std::size_t c) { return slice(m, 1, c, c + 1); };
    const Tensor d1 = col(d, 0), d2 = col(d, 1), d3 = col(d, 2);
    const Tensor& L = out.cholesky;
    const Tensor a1 = col(L, 0), a2 = col(L, 1), a3 = col(L, 2);
    const Tensor l21 = col(L, 3), l31 = col(L, 4), l32 = col(L, 5);
    const Tensor y1 = mul(d1, exp(scale(a1, -1.0)));
    const Tensor y2 = mul(sub(d2, mul(l21, y1)), exp(scale(a2, -1.0)));
    const Tensor y3 = mul(sub(sub(d3, mul(l31, y1)), mul(l32, y2)), exp(scale(a3, -1.0)));
    const Tensor quad = add(add(square(y1), square(y2)), square(y3));
    const Tensor log_det_half = add(add(a1, a2), a3);
    Tensor log_n = add_scalar(sub(scale(quad, -0.5), log_det_half), -1.5 * kLog2Pi);
    log_n = reshape(log_n, {t, k});

    const Tensor joint = add(log_n, log_softmax(out.logits, 1));
    return scale(mean(logsumexp(joint, 1)), -1.0);
}

// ---------------------------------------------------------------------------

std::array<double, 9> cholesky3(const std::array<double, 9>& a) {
    std::array<double, 9> l{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = a[i * 3 + j];
            for (int p = 0; p < j; ++p) s -= l[i * 3 + p] * l[j * 3 + p];
            if (i == j) {
                if (!(s > 0.0)) throw NumericalFailure("covariance is not positive definite");
                l[i * 3 + i] = std::sqrt(s);
            } else {
                l[i * 3 + j] = s / l[j * 3 + j];
            }
        }
    }
    return l;
}

MixtureDensity::MixtureDensity(const MixtureParams& params) {
    comps_.reserve(params.components.size());
    for (const auto& c : params.components) {
        const auto l = cholesky3(c.covariance);
        Prepared p;
        p.mean = c.mean;
        p.chol = {l[0], l[3], l[4], l[6], l[7], l[8]};
        p.log_weight = std::log(c.weight);
        p.log_norm = -1.5 * kLog2Pi - (std::log(l[0]) + std::log(l[4]) + std::log(l[8]));
        comps_.push_back(p);
    }
}

std::vector<double> MixtureDensity::component_log_terms(const Fixation& p) const {
    std::vector<double> terms;
    terms.reserve(comps_.size());
    for (const auto& c : comps_) {
        const double d1 = p.x - c.mean[0], d2 = p.y - c.mean[1], d3 = p.z - c.mean[2];
        const double y1 = d1 / c.chol[0];
        const double y2 = (d2 - c.chol[1] * y1) / c.chol[2];
        const double y3 = (d3 - c.chol[3] * y1 - c.chol[4] * y2) / c.chol[5];
        terms.push_back(c.log_weight + c.log_norm - 0.5 * (y1 * y1 + y2 * y2 + y3 * y3));
    }
    return terms;
}

double MixtureDensity::log_pdf(const Fixation& p) const {
    const auto terms = component_log_terms(p);
    const double mx = *std::max_element(terms.begin(), terms.end());
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double t : terms) s += std::exp(t - mx);
    return mx + std::log(s);
}

double MixtureDensity::pdf(const Fixation& p) const {
    double s = 0.0;
    for (double t : component_log_terms(p)) s += std::exp(t);
    return s;
}

double mixture_pdf(const Fixation& p, const MixtureParams& params) { return MixtureDensity(params).pdf(p); }

double nll_loss(std::span<const Fixation> targets, std::span<const MixtureParams> params) {
    if (targets.empty() || targets.size() != params.size()) {
        throw ShapeMismatch("nll_loss needs one mixture per target");
    }
    double total = 0.0;
    for (std::size_t t = 0; t < targets.size(); ++t) total += MixtureDensity(params[t]).log_pdf(targets[t]);
    return -total / static_cast<double>(targets.size());
}

std::vector<double> grid_probabilities(const MixtureParams& params, const SphereGrid& grid,
                                       const SamplingOptions& opts) {
    const MixtureDensity density(params);
    std::vector<double> logw(grid.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double lw = density.log_pdf(grid.points[i]);
        if (opts.solid_angle_weighting) lw += std::log(grid.weights[i]);
        logw[i] = lw;
        mx = std::max(mx, lw);
    }
    if (!std::isfinite(mx)) throw DegenerateDistribution("no grid cell has positive mass");
    double total = 0.0;
    for (double& w : logw) {
        w = std::exp(w - mx);
        total += w;
    }
    if (mx + std::log(total) < std::log(1e-300)) {
        throw DegenerateDistribution("total grid mass below 1e-300");
    }
    for (double& w : logw) w /= total;
    return logw;
}

std::size_t sample_index(std::span<const double> probabilities, Rng& rng) {
    std::vector<double> cdf(probabilities.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        acc += probabilities[i];
        cdf[i] = acc;
    }
    const double u = uniform01(rng) * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.end()) --it;
    // Never land on a zero-probability cell at the tail.
    while (it != cdf.begin() && probabilities[static_cast<std::size_t>(it - cdf.begin())] == 0.0) --it;
    return static_cast<std::size_t>(it - cdf.begin());
}

Fixation sample_fixation(const MixtureParams& params, const SphereGrid& grid, Rng& rng, const SamplingOptions& opts) {
    const auto probs = grid_probabilities(params, grid, opts);
    if (opts.argmax) {
        return grid.points[static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin())];
    }
    return grid.points[sample_index(probs, rng)];
}

}  // namespace scanpath3d
