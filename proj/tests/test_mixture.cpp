#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "scanpath3d/errors.hpp"
#include "scanpath3d/mixture.hpp"

using namespace scanpath3d;
using scanpath3d::testing::gradcheck;
using scanpath3d::testing::random_tensor;

namespace {

const double kGaussPeak = std::pow(2.0 * kPi, -1.5);

GaussianComponent isotropic(const Fixation& mean, double variance, double weight = 1.0) {
    GaussianComponent c;
    c.mean = {mean.x, mean.y, mean.z};
    c.covariance = {variance, 0, 0, 0, variance, 0, 0, 0, variance};
    c.weight = weight;
    return c;
}

GaussianComponent random_component(std::mt19937_64& rng, double weight) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    // A Aᵀ + 0.1 I is safely positive definite.
    double a[9];
    for (double& v : a) v = u(rng);
    GaussianComponent c;
    for (int i = 0; i < 3; ++i) {
        c.mean[i] = u(rng);
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += a[i * 3 + k] * a[j * 3 + k];
            c.covariance[i * 3 + j] = s + (i == j ? 0.1 : 0.0);
        }
    }
    c.weight = weight;
    return c;
}

MixtureParams random_params(std::mt19937_64& rng, int k) {
    std::uniform_real_distribution<double> u(0.1, 1.0);
    std::vector<double> w(k);
    double total = 0.0;
    for (double& v : w) total += (v = u(rng));
    MixtureParams p;
    for (int i = 0; i < k; ++i) p.components.push_back(random_component(rng, w[i] / total));
    return p;
}

// Explicit adjugate inverse and determinant, no Cholesky.
double dense_pdf(const Fixation& p, const MixtureParams& params) {
    double total = 0.0;
    for (const auto& c : params.components) {
        const auto& m = c.covariance;
        const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                           m[2] * (m[3] * m[7] - m[4] * m[6]);
        const double inv[9] = {(m[4] * m[8] - m[5] * m[7]) / det, (m[2] * m[7] - m[1] * m[8]) / det,
                               (m[1] * m[5] - m[2] * m[4]) / det, (m[5] * m[6] - m[3] * m[8]) / det,
                               (m[0] * m[8] - m[2] * m[6]) / det, (m[2] * m[3] - m[0] * m[5]) / det,
                               (m[3] * m[7] - m[4] * m[6]) / det, (m[1] * m[6] - m[0] * m[7]) / det,
                               (m[0] * m[4] - m[1] * m[3]) / det};
        const double d[3] = {p.x - c.mean[0], p.y - c.mean[1], p.z - c.mean[2]};
        double q = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) q += d[i] * inv[i * 3 + j] * d[j];
        total += c.weight * std::exp(-0.5 * q) / std::sqrt(std::pow(2.0 * kPi, 3) * det);
    }
    return total;
}

MdnOutputs raw_outputs(std::size_t t, std::size_t k, std::mt19937_64& rng, bool requires_grad) {
    MdnOutputs out;
    out.steps = t;
    out.components = k;
    out.means = random_tensor({t * k, 3}, rng, requires_grad);
    out.cholesky = random_tensor({t * k, 6}, rng, requires_grad, -0.5, 0.5);
    out.logits = random_tensor({t, k}, rng, requires_grad);
    return out;
}

}  // namespace

TEST_CASE("pdf at the mean of a unit Gaussian") {
    const Fixation p = normalized({0.2, 0.4, -0.9});
    MixtureParams one{{isotropic(p, 1.0)}};
    CHECK(std::abs(mixture_pdf(p, one) - kGaussPeak) < 1e-12);
    CHECK(std::abs(kGaussPeak - 0.0634936) < 1e-7);
    MixtureParams two{{isotropic(p, 1.0, 0.5), isotropic(p, 1.0, 0.5)}};
    CHECK(std::abs(mixture_pdf(p, two) - kGaussPeak) < 1e-12);
}

TEST_CASE("pdf matches the dense-inverse oracle") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    double worst = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        const MixtureParams params = random_params(rng, 1 + trial % 5);
        const Fixation p{g(rng), g(rng), g(rng)};
        const double ref = dense_pdf(p, params);
        worst = std::max(worst, std::abs(mixture_pdf(p, params) - ref) / std::max(ref, 1e-300));
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("NLL analytic anchor and log-sum-exp vs direct formula") {
    const std::vector<Fixation> path = {{1, 0, 0}, {0, 1, 0}, normalized({1, 1, 1})};
    std::vector<MixtureParams> params;
    for (const auto& p : path) params.push_back({{isotropic(p, 1.0)}});
    CHECK(std::abs(nll_loss(path, params) - 1.5 * std::log(2.0 * kPi)) < 1e-10);
    CHECK(std::abs(1.5 * std::log(2.0 * kPi) - 2.7568156) < 1e-7);

    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Fixation> targets;
        std::vector<MixtureParams> ps;
        double direct = 0.0;
        for (int t = 0; t < 4; ++t) {
            targets.push_back(normalized({g(rng), g(rng), g(rng)}));
            ps.push_back(random_params(rng, 3));
            direct -= std::log(dense_pdf(targets.back(), ps.back())) / 4.0;
        }
        CHECK(std::abs(nll_loss(targets, ps) - direct) < 1e-10);
    }
}

TEST_CASE("zero raw outputs give mu = 0, identity covariance and uniform weights") {
    MdnOutputs out;
    out.steps = 1;
    out.components = 4;
    out.means = Tensor::zeros({4, 3});
    out.cholesky = Tensor::zeros({4, 6});
    out.logits = Tensor::zeros({1, 4});
    const MixtureParams p = params_at(out, 0);
    for (const auto& c : p.components) {
        CHECK(c.mean == std::array<double, 3>{0, 0, 0});
        CHECK(c.covariance == std::array<double, 9>{1, 0, 0, 0, 1, 0, 0, 0, 1});
        CHECK(c.weight == 0.25);
    }
    const Fixation origin{0, 0, 0};
    CHECK(std::abs(mixture_nll(out, std::span<const Fixation>(&origin, 1)).item() - 1.5 * std::log(2.0 * kPi)) <
          1e-12);
}

TEST_CASE("tensor NLL agrees with the plain-double path") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 20; ++trial) {
        const MdnOutputs out = raw_outputs(5, 3, rng, false);
        std::vector<Fixation> targets;
        std::vector<MixtureParams> ps;
        for (std::size_t t = 0; t < 5; ++t) {
            targets.push_back(normalized({g(rng), g(rng), g(rng)}));
            ps.push_back(params_at(out, t));
        }
        CHECK(std::abs(mixture_nll(out, targets).item() - nll_loss(targets, ps)) < 1e-10);
    }
}

TEST_CASE("adding a constant to all logits leaves the loss unchanged") {
    std::mt19937_64 rng(4);
    MdnOutputs out = raw_outputs(3, 4, rng, false);
    const std::vector<Fixation> targets = {{1, 0, 0}, {0, 0, 1}, {0, -1, 0}};
    const double before = mixture_nll(out, targets).item();
    out.logits = add_scalar(out.logits, 17.25);
    CHECK(std::abs(mixture_nll(out, targets).item() - before) < 1e-12);
}

TEST_CASE("NLL gradients match finite differences") {
    std::mt19937_64 rng(5);
    const MdnOutputs out = raw_outputs(4, 2, rng, true);
    const std::vector<Fixation> targets = {{1, 0, 0}, {0, 0, 1}, normalized({1, -1, 0}), normalized({0, 2, 1})};
    auto f = [&] { return mixture_nll(out, targets); };
    CHECK(gradcheck(f, {out.means, out.cholesky, out.logits}).max_rel_error < 1e-7);
}

TEST_CASE("mixture head shapes and validity") {
    ParameterSet params;
    Rng rng(6);
    MixtureHead head(8, MdnConfig{}, params, rng);
    std::mt19937_64 g(7);
    const Tensor z = random_tensor({3, 8}, g, false);
    const MdnOutputs out = head.forward(z);
    CHECK(out.means.shape() == Shape{15, 3});
    CHECK(out.cholesky.shape() == Shape{15, 6});
    CHECK(out.logits.shape() == Shape{3, 5});
    const MixtureParams p = head.mdn_params(slice(z, 0, 1, 2));
    REQUIRE(p.components.size() == 5);
    double total = 0.0;
    for (const auto& c : p.components) {
        total += c.weight;
        CHECK_NOTHROW(cholesky3(c.covariance));
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
    CHECK_THROWS_AS(head.mdn_params(z), ShapeMismatch);
    CHECK_THROWS_AS(cholesky3({1, 2, 0, 2, 1, 0, 0, 0, 1}), NumericalFailure);
}

TEST_CASE("grid probabilities are normalized and solid-angle weighted") {
    const SphereGrid grid = build_grid(128, 256);
    MixtureParams flat{{isotropic({0, 0, 0}, 1e6)}};
    const auto probs = grid_probabilities(flat, grid);
    double total = 0.0;
    for (double p : probs) total += p;
    CHECK(std::abs(total - 1.0) < 1e-12);
    for (std::size_t i = 0; i < grid.size(); i += 997)
        CHECK(std::abs(probs[i] - grid.weights[i] / (4.0 * kPi)) < 1e-9);

    SamplingOptions literal;
    literal.solid_angle_weighting = false;
    const auto raw = grid_probabilities(flat, grid, literal);
    CHECK(std::abs(raw[0] - 1.0 / grid.size()) < 1e-10);
}

TEST_CASE("tight mixture concentrates on its grid point") {
    const SphereGrid grid = build_grid(128, 256);
    const std::size_t target = grid.index(40, 77);
    MixtureParams tight{{isotropic(grid.points[target], 1e-6)}};
    Rng rng(8);
    const auto probs = grid_probabilities(tight, grid);
    int hits = 0;
    for (int i = 0; i < 10000; ++i) hits += sample_index(probs, rng) == target;
    CHECK(hits > 9990);
    for (int i = 0; i < 20; ++i) CHECK(sample_fixation(tight, grid, rng) == grid.points[target]);
    SamplingOptions argmax;
    argmax.argmax = true;
    CHECK(sample_fixation(tight, grid, rng, argmax) == grid.points[target]);
}

TEST_CASE("diffuse mixture reproduces latitude-band frequencies") {
    const SphereGrid grid = build_grid(128, 256);
    MixtureParams flat{{isotropic({0, 0, 0}, 1e6)}};
    const auto probs = grid_probabilities(flat, grid);
    std::vector<double> expected(128, 0.0), observed(128, 0.0);
    for (std::size_t i = 0; i < grid.size(); ++i) expected[i / 256] += probs[i];
    Rng rng(9);
    const int n = 100000;
    for (int i = 0; i < n; ++i) observed[sample_index(probs, rng) / 256] += 1.0 / n;
    double tv = 0.0;
    for (int r = 0; r < 128; ++r) tv += 0.5 * std::abs(observed[r] - expected[r]);
    CHECK(tv < 0.03);
}

TEST_CASE("sampling is seed-deterministic and skips empty cells") {
    const SphereGrid grid = build_grid(128, 256);
    std::mt19937_64 g(10);
    const MixtureParams params = random_params(g, 5);
    Rng a(11), b(11);
    for (int i = 0; i < 20; ++i) CHECK(sample_fixation(params, grid, a) == sample_fixation(params, grid, b));

    const std::vector<double> probs = {0.0, 0.5, 0.0, 0.5, 0.0};
    Rng rng(12);
    for (int i = 0; i < 5000; ++i) {
        const std::size_t k = sample_index(probs, rng);
        CHECK((k == 1 || k == 3));
    }
}

TEST_CASE("far-away mixture is degenerate") {
    const SphereGrid grid = build_grid(16, 32);
    MixtureParams far{{isotropic({100, 0, 0}, 1e-4)}};
    Rng rng(13);
    CHECK_THROWS_AS(sample_fixation(far, grid, rng), DegenerateDistribution);
}
