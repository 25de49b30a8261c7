#pragma once

#include <array>
#include <span>
#include <vector>

#include "scanpath3d/geometry.hpp"
#include "scanpath3d/nn.hpp"

namespace scanpath3d {

struct MdnConfig {
    std::size_t components = 5;
    std::size_t hidden = 16;
};

struct GaussianComponent {
    std::array<double, 3> mean{};
    std::array<double, 9> covariance{};  // row-major, symmetric positive definite
    double weight = 0.0;
};

struct MixtureParams {
    std::vector<GaussianComponent> components;
};

/// Raw head outputs for T steps and K components.
///   means:    (T·K) × 3, used directly as μ
///   cholesky: (T·K) × 6 as [log L11, log L22, log L33, L21, L31, L32]
///   logits:   T × K, softmax gives the weights
struct MdnOutputs {
    Tensor means;
    Tensor cholesky;
    Tensor logits;
    std::size_t steps = 0;
    std::size_t components = 0;
};

/// Converts step t of the raw outputs into explicit mixture parameters.
MixtureParams params_at(const MdnOutputs& out, std::size_t t);

/// Three independent MLPs (D → hidden → out, relu) for means, Cholesky factors and weights.
class MixtureHead {
   public:
    MixtureHead() = default;
    MixtureHead(std::size_t dim, const MdnConfig& cfg, ParameterSet& params, Rng& rng);

    MdnOutputs forward(const Tensor& hidden_states) const;
    MixtureParams mdn_params(const Tensor& hidden_state) const;
    const MdnConfig& config() const { return cfg_; }

   private:
    struct Mlp {
        Linear hidden;
        Linear out;
        Tensor operator()(const Tensor& x) const { return out(relu(hidden(x))); }
    };
    MdnConfig cfg_;
    Mlp mean_head_;
    Mlp cov_head_;
    Mlp weight_head_;
};

/// Differentiable -(1/T) Σ_t log Σ_i π_i N(p*_t | μ_i, Σ_i) in log-sum-exp form.
Tensor mixture_nll(const MdnOutputs& out, std::span<const Fixation> targets);

/// Precomputed Cholesky factors for repeated density evaluation.
class MixtureDensity {
   public:
    /// Throws NumericalFailure if any covariance is not positive definite.
    explicit MixtureDensity(const MixtureParams& params);

    double log_pdf(const Fixation& p) const;
    double pdf(const Fixation& p) const;
    /// log(π_i) + log N_i(p) for each component.
    std::vector<double> component_log_terms(const Fixation& p) const;

   private:
    struct Prepared {
        std::array<double, 3> mean;
        std::array<double, 6> chol;  // L11, L21, L22, L31, L32, L33
        double log_weight;
        double log_norm;  // -1.5 log 2π - Σ log L_ii
    };
    std::vector<Prepared> comps_;
};

/// Lower Cholesky factor of a 3×3 SPD matrix. Throws NumericalFailure.
std::array<double, 9> cholesky3(const std::array<double, 9>& a);

double mixture_pdf(const Fixation& p, const MixtureParams& params);

/// Plain-value NLL in log-sum-exp form.
double nll_loss(std::span<const Fixation> targets, std::span<const MixtureParams> params);

struct SamplingOptions {
    bool solid_angle_weighting = true;
    bool argmax = false;  // debug only
};

/// Normalized categorical distribution over grid cells. Throws DegenerateDistribution
/// when the unnormalized mass is below 1e-300.
std::vector<double> grid_probabilities(const MixtureParams& params, const SphereGrid& grid,
                                       const SamplingOptions& opts = {});

/// Inverse-CDF draw from normalized probabilities.
std::size_t sample_index(std::span<const double> probabilities, Rng& rng);

Fixation sample_fixation(const MixtureParams& params, const SphereGrid& grid, Rng& rng,
                         const SamplingOptions& opts = {});

}  // namespace scanpath3d
