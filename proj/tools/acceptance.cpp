// Acceptance run: one PASS/FAIL line per criterion, tolerances fixed below.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "oracles.hpp"
#include "scanpath3d/checkpoint.hpp"
#include "scanpath3d/errors.hpp"
#include "scanpath3d/fileio.hpp"
#include "scanpath3d/trainer.hpp"

using namespace scanpath3d;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kGradTol = 1e-4;
constexpr double kGradBudgetSec = 60.0;
constexpr double kPdfTol = 1e-12;
constexpr double kNllTol = 1e-10;
constexpr double kTvTol = 0.02;
constexpr std::size_t kDraws = 1'000'000;
constexpr double kGridStepBudgetMs = 50.0;
constexpr std::size_t kCausalSteps = 30;
constexpr double kIncrementalTol = 1e-10;
constexpr std::size_t kOverfitSteps = 500;
constexpr double kOverfitNats = 2.0;
constexpr double kOverfitDtwRatio = 0.5;
constexpr double kOverfitBudgetSec = 600.0;
constexpr int kMetricCases = 200;
constexpr double kMetricTol = 1e-9;
constexpr double kSaliencyTol = 1e-9;
constexpr double kRoundTripTol = 1e-9;
constexpr double kSolidAngleTol = 1e-6;
constexpr double kRotationTol = 1e-9;

struct Outcome {
    bool pass = false;
    std::string detail;
    std::vector<std::string> notes;  // printed as indented info lines

    Outcome() = default;
    Outcome(bool p, std::string d, std::vector<std::string> n = {})
        : pass(p), detail(std::move(d)), notes(std::move(n)) {}
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a.at(i) - b.at(i)));
    return worst;
}

Fixation random_unit(Rng& rng) {
    std::normal_distribution<double> n;
    return normalized({n(rng), n(rng), n(rng)});
}

Fixation at_deg(double lat, double lon) { return latlon_to_unit3({deg_to_rad(lat), deg_to_rad(lon)}); }

GaussianComponent isotropic(const Fixation& mean, double variance, double weight) {
    GaussianComponent c;
    c.mean = {mean.x, mean.y, mean.z};
    c.covariance = {variance, 0, 0, 0, variance, 0, 0, 0, variance};
    c.weight = weight;
    return c;
}

// 1 -----------------------------------------------------------------------

Outcome gradient_check() {
    const auto t0 = std::chrono::steady_clock::now();
    const ModelConfig cfg = tiny_model_config();
    ScanpathModel model(cfg, 21);
    EquirectImage img(cfg.extractor.height, cfg.extractor.width);
    Rng rng(22);
    for (double& v : img.rgb) v = uniform01(rng);
    std::vector<Fixation> targets;
    for (int i = 0; i < 4; ++i) targets.push_back(random_unit(rng));
    auto loss = [&] { return model.scanpath_loss(model.encode_image(img), targets); };

    model.parameters().zero_grad();
    backward(loss());
    double worst = 0.0;
    std::size_t checked = 0;
    const double h = 1e-5;
    for (const auto& [name, p] : model.parameters().items()) {
        Tensor leaf = p;
        const auto ad = leaf.grad();
        auto data = leaf.mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            NoGradGuard no_grad;
            const double saved = data[i];
            data[i] = saved + h;
            const double plus = loss().item();
            data[i] = saved - h;
            const double minus = loss().item();
            data[i] = saved;
            const double fd = (plus - minus) / (2 * h);
            worst = std::max(worst, std::abs(ad[i] - fd) / std::max(1.0, std::abs(fd)));
            ++checked;
        }
    }
    const double sec = seconds_since(t0);
    return {worst < kGradTol && sec < kGradBudgetSec,
            fmt("max rel error %.3g over all %zu parameters (tol %g), %.1f s (budget %.0f s)", worst, checked,
                kGradTol, sec, kGradBudgetSec)};
}

// 2 -----------------------------------------------------------------------

Outcome analytic_mdn() {
    const double peak = std::pow(2 * kPi, -1.5);
    const Fixation mean = at_deg(20, 30);
    const MixtureParams unit{{isotropic(mean, 1.0, 1.0)}};
    const double pdf_err = std::abs(mixture_pdf(mean, unit) - peak);

    const double anchor = 1.5 * std::log(2 * kPi);
    const std::vector<Fixation> targets = {mean};
    const std::vector<MixtureParams> per_step = {unit};
    const double nll_err = std::abs(nll_loss(targets, per_step) - anchor);

    // Same anchor through the differentiable path: raw Cholesky zeros give Σ = I.
    MdnOutputs raw;
    raw.steps = 1;
    raw.components = 1;
    raw.means = Tensor::from({1, 3}, {mean.x, mean.y, mean.z});
    raw.cholesky = Tensor::zeros({1, 6});
    raw.logits = Tensor::zeros({1, 1});
    const double tensor_err = std::abs(mixture_nll(raw, targets).item() - anchor);

    const bool pass = pdf_err < kPdfTol && nll_err < kNllTol && tensor_err < kNllTol;
    return {pass, fmt("|pdf - (2pi)^-1.5| = %.2g (tol %g); |NLL - 1.5 log 2pi| = %.2g plain, %.2g tensor (tol %g)",
                      pdf_err, kPdfTol, nll_err, tensor_err, kNllTol)};
}

// 3 -----------------------------------------------------------------------

struct TvResult {
    double tv = 0.0;
    double ideal_tv = 0.0;  // expected TV of an exact sampler at this sample size
    std::size_t support = 0;
    double chi2 = 0.0;
    std::size_t chi2_bins = 0;
    double chi2_z = 0.0;
};

TvResult sampling_tv(const MixtureParams& params, const SphereGrid& grid, std::uint64_t seed) {
    const auto probs = grid_probabilities(params, grid);
    std::vector<std::uint32_t> counts(probs.size(), 0);
    Rng rng(seed);
    for (std::size_t i = 0; i < kDraws; ++i) ++counts[sample_index(probs, rng)];
    TvResult r;
    const double n = static_cast<double>(kDraws);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        r.tv += 0.5 * std::abs(counts[i] / n - probs[i]);
        // E|X/N − p| for X ~ Binomial(N, p), normal approximation.
        r.ideal_tv += 0.5 * std::sqrt(2.0 * probs[i] * (1.0 - probs[i]) / (kPi * n));
        r.support += probs[i] > 0.0;
    }
    // Pearson chi-square on 8×8 blocks of cells with expected count ≥ 5.
    std::vector<double> obs(512, 0.0), expct(512, 0.0);
    for (int row = 0; row < grid.height; ++row)
        for (int col = 0; col < grid.width; ++col) {
            const std::size_t i = grid.index(row, col);
            const std::size_t b = static_cast<std::size_t>(row / 8) * 32 + col / 8;
            obs[b] += counts[i];
            expct[b] += probs[i] * n;
        }
    for (std::size_t b = 0; b < obs.size(); ++b) {
        if (expct[b] < 5.0) continue;
        r.chi2 += (obs[b] - expct[b]) * (obs[b] - expct[b]) / expct[b];
        ++r.chi2_bins;
    }
    const double dof = static_cast<double>(r.chi2_bins) - 1.0;
    // Wilson–Hilferty: approximately standard normal under the null.
    r.chi2_z = (std::cbrt(r.chi2 / dof) - (1.0 - 2.0 / (9.0 * dof))) / std::sqrt(2.0 / (9.0 * dof));
    return r;
}

Outcome sampling_fidelity() {
    const SphereGrid& grid = sampling_grid();
    const MixtureParams tight{{isotropic(at_deg(25, -60), 1e-4, 0.7), isotropic(at_deg(-10, 100), 1e-4, 0.3)}};
    const MixtureParams diffuse{{isotropic({0.5, 0.0, 0.5}, 1.0, 0.6), isotropic({-0.3, 0.4, -0.2}, 1.0, 0.4)}};
    const TvResult t = sampling_tv(tight, grid, 31);
    const TvResult d = sampling_tv(diffuse, grid, 32);

    // sample_fixation must be exactly the draw measured above.
    Rng a(33), b(33);
    const auto probs = grid_probabilities(diffuse, grid);
    bool same_path = true;
    for (int i = 0; i < 50; ++i) same_path &= sample_fixation(diffuse, grid, a) == grid.points[sample_index(probs, b)];

    // One decoding step's grid evaluation with a K=5 mixture.
    Rng g(34);
    MixtureParams five;
    for (int k = 0; k < 5; ++k) five.components.push_back(isotropic(random_unit(g), 0.05, 0.2));
    Rng s(35);
    const int reps = 20;
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) sample_fixation(five, grid, s);
    const double ms = 1000.0 * seconds_since(t0) / reps;

    Outcome o;
    o.pass = t.tv < kTvTol && d.tv < kTvTol && ms < kGridStepBudgetMs && same_path;
    o.detail = fmt("TV tight %.4f, diffuse %.4f (tol %.2f, %zu draws); grid step %.2f ms (budget %.0f ms)", t.tv, d.tv,
                   kTvTol, kDraws, ms, kGridStepBudgetMs);
    o.notes.push_back(fmt("tight: support %zu cells, exact-sampler expected TV %.4f", t.support, t.ideal_tv));
    o.notes.push_back(fmt("diffuse: support %zu cells, exact-sampler expected TV %.4f; an exact sampler cannot "
                          "reach %.2f per-cell TV on this support with %zu draws",
                          d.support, d.ideal_tv, kTvTol, kDraws));
    o.notes.push_back(fmt("diffuse goodness of fit on 8x8 blocks: chi2 %.1f over %zu blocks, z = %.2f "
                          "(|z| < 3 is consistent with exact sampling)",
                          d.chi2, d.chi2_bins, d.chi2_z));
    o.notes.push_back(fmt("observed/expected TV ratio: tight %.3f, diffuse %.3f", t.tv / t.ideal_tv, d.tv / d.ideal_tv));
    return o;
}

// 4 -----------------------------------------------------------------------

Outcome decoder_causality() {
    DecoderConfig cfg;
    cfg.dim = 16;
    cfg.layers = 2;
    cfg.heads = 4;
    cfg.ffn_hidden = 32;
    cfg.max_length = kCausalSteps;
    ParameterSet params;
    Rng rng(41);
    FixationDecoder dec(cfg, params, rng);
    NoGradGuard no_grad;
    std::vector<double> mem(16 * 16);
    for (double& v : mem) v = 2 * uniform01(rng) - 1;
    const Tensor memory = Tensor::from({16, 16}, mem);
    std::vector<Fixation> inputs{kOriginQuery};
    for (std::size_t i = 1; i < kCausalSteps; ++i) inputs.push_back(random_unit(rng));
    const Tensor base = dec.decode_teacher_forced(inputs, memory);

    std::size_t violations = 0, inert = 0;
    for (std::size_t s = 1; s < kCausalSteps; ++s) {
        auto perturbed = inputs;
        for (std::size_t j = s; j < kCausalSteps; ++j) perturbed[j] = random_unit(rng);
        const Tensor out = dec.decode_teacher_forced(perturbed, memory);
        for (std::size_t t = 0; t < s; ++t)
            for (std::size_t c = 0; c < cfg.dim; ++c) violations += out.at(t, c) != base.at(t, c);
        bool changed = false;
        for (std::size_t c = 0; c < cfg.dim; ++c) changed |= out.at(s, c) != base.at(s, c);
        inert += !changed;
    }

    DecoderCache cache;
    double worst = 0.0;
    for (std::size_t t = 1; t <= kCausalSteps; ++t) {
        const Tensor step = dec.decode_step(std::span<const Fixation>(inputs).first(t), memory, &cache);
        worst = std::max(worst, max_abs_diff(step, slice(base, 0, t - 1, t)));
    }
    return {violations == 0 && inert == 0 && worst < kIncrementalTol,
            fmt("%zu bit changes in earlier rows over %zu perturbations (future rows unchanged in %zu); "
                "incremental vs teacher-forced max diff %.2g (tol %g)",
                violations, kCausalSteps - 1, inert, worst, kIncrementalTol)};
}

// 5 -----------------------------------------------------------------------

EquirectImage synthetic_scene(const Scanpath& path, int height, int width) {
    EquirectImage img(height, width);
    const SphereGrid grid = build_grid(height, width);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            const Fixation p = grid.points[grid.index(r, c)];
            double blob[3] = {0.0, 0.0, 0.0};
            for (std::size_t i = 0; i < path.size(); ++i) {
                const double d = great_circle_distance(p, path[i]);
                const double w = std::exp(-d * d / (2 * 0.08 * 0.08));
                blob[i % 3] += w;
            }
            for (int ch = 0; ch < 3; ++ch) {
                const double base = 0.15 + 0.1 * std::sin(3.0 * c * 2 * kPi / width + ch) * std::cos(r * kPi / height);
                img.at(r, c, ch) = std::clamp(base + blob[ch], 0.0, 1.0);
            }
        }
    return img;
}

double mean_dtw(const std::vector<Scanpath>& paths, const Scanpath& truth) {
    double s = 0.0;
    for (const auto& p : paths) s += dtw(p, truth);
    return s / static_cast<double>(paths.size());
}

Outcome overfit() {
    const auto t0 = std::chrono::steady_clock::now();
    const Scanpath truth = {at_deg(0, 0),     at_deg(10, 35),  at_deg(25, 70),  at_deg(5, 110),  at_deg(-20, 150),
                            at_deg(-30, -160), at_deg(-5, -120), at_deg(20, -80), at_deg(40, -40), at_deg(15, -10)};

    ModelConfig mc;
    mc.extractor.height = 128;
    mc.extractor.width = 256;
    mc.extractor.stage_channels = {8, 8, 8};
    mc.extractor.pool_rows = 8;
    mc.extractor.pool_cols = 8;
    mc.encoder = {.dim = 16, .layers = 1, .heads = 2, .ffn_hidden = 32, .dropout = 0.0};
    mc.decoder = {.dim = 16, .layers = 1, .heads = 2, .ffn_hidden = 32, .max_length = 10, .dropout = 0.0};
    mc.mdn = {.components = 3, .hidden = 16};

    TrainConfig tc;
    tc.batch = 5;
    tc.lr = 1e-3;
    tc.warmup_epochs = 10;
    tc.halve_every = 1000;
    tc.grad_clip = 1.0;
    tc.total_epochs = kOverfitSteps;
    tc.rotation_steps = 0;
    tc.seed = 51;

    TrainingSet data;
    data.image_ids = {"synthetic"};
    data.images = {synthetic_scene(truth, 128, 256)};
    for (int i = 0; i < 5; ++i) data.samples.push_back({0, truth});

    ScanpathModel model(mc, 52);
    auto eval_nll = [&] {
        NoGradGuard no_grad;
        return model.scanpath_loss(model.encode_image(data.images[0]), truth).item();
    };
    const double initial = eval_nll();
    const TrainResult r = train(model, data, ValidationSet{}, tc);
    const double final_nll = eval_nll();

    // 50-step moving average of the training loss, sampled every 50 steps.
    std::vector<double> ma;
    for (std::size_t end = 50; end <= r.losses.size(); end += 50) {
        double s = 0.0;
        for (std::size_t i = end - 50; i < end; ++i) s += r.losses[i].loss;
        ma.push_back(s / 50.0);
    }
    std::size_t ma_rises = 0;
    for (std::size_t i = 1; i < ma.size(); ++i) ma_rises += ma[i] > ma[i - 1];

    Tensor memory;
    {
        NoGradGuard no_grad;
        memory = model.encode_image(data.images[0]);
    }
    Rng rng(53);
    std::vector<Scanpath> generated, uniform;
    for (int m = 0; m < 10; ++m) generated.push_back(model.generate_scanpath(memory, truth.size(), rng));
    Rng urng(54);
    for (int m = 0; m < 10; ++m) {
        Scanpath p;
        for (std::size_t i = 0; i < truth.size(); ++i) p.push_back(random_unit(urng));
        uniform.push_back(p);
    }
    const double dtw_model = mean_dtw(generated, truth);
    const double dtw_uniform = mean_dtw(uniform, truth);
    const double sec = seconds_since(t0);

    Outcome o;
    o.pass = r.steps == kOverfitSteps && initial - final_nll >= kOverfitNats &&
             dtw_model <= kOverfitDtwRatio * dtw_uniform && sec < kOverfitBudgetSec;
    o.detail = fmt("NLL %.3f -> %.3f (drop %.2f nats, need %.1f) after %llu steps; DTW model %.1f vs uniform %.1f "
                   "(ratio %.3f, need <= %.1f); %.0f s (budget %.0f s)",
                   initial, final_nll, initial - final_nll, kOverfitNats, static_cast<unsigned long long>(r.steps),
                   dtw_model, dtw_uniform, dtw_model / dtw_uniform, kOverfitDtwRatio, sec, kOverfitBudgetSec);
    std::string trace = "50-step moving average:";
    for (double v : ma) trace += fmt(" %.3f", v);
    o.notes.push_back(trace);
    o.notes.push_back(fmt("moving-average increases: %zu of %zu windows", ma_rises, ma.empty() ? 0 : ma.size() - 1));
    return o;
}

// 6 -----------------------------------------------------------------------

Outcome metric_oracles() {
    using namespace oracles;
    std::mt19937_64 rng(61);
    std::size_t lev_bad = 0;
    double dtw_err = 0, tde_err = 0, sm_err = 0, rec_err = 0, ss_err = 0;
    for (int c = 0; c < kMetricCases; ++c) {
        const Scanpath a = random_path(rng, 1, 6, false), b = random_path(rng, 1, 6, false);
        std::vector<int> sa, sb;
        for (const auto& p : a) sa.push_back(oracle_bin(p, 16, 32));
        for (const auto& p : b) sb.push_back(oracle_bin(p, 16, 32));
        lev_bad += lev(a, b) != lev_oracle(sa, sb, sa.size(), sb.size());
        dtw_err = std::max(dtw_err, std::abs(dtw(a, b) - dtw_oracle(a, b)));
        sm_err = std::max(sm_err, std::abs(scanmatch(a, b) - scanmatch_oracle(a, b)));
    }
    for (int c = 0; c < kMetricCases; ++c) {
        const Scanpath a = random_path(rng, 3, 6, false), b = random_path(rng, 3, 6, false);
        tde_err = std::max(tde_err, std::abs(tde(a, b) - tde_oracle(a, b, 3)));
    }
    for (int c = 0; c < kMetricCases; ++c) {
        const Scanpath a = random_path(rng, 1, 6, false);
        const Scanpath b = random_path(rng, a.size(), a.size(), false);
        rec_err = std::max(rec_err, std::abs(rec(a, b) - rec_oracle(a, b)));
    }
    for (int c = 0; c < kMetricCases; ++c) {
        const std::vector<Scanpath> human = {random_path(rng, 1, 6, false), random_path(rng, 1, 6, false)};
        const ClusterSet clusters = build_clusters(human, 12, 7);
        const Scanpath a = random_path(rng, 1, 6, false), b = random_path(rng, 1, 6, false);
        std::vector<int> sa, sb;
        for (const auto& p : a) sa.push_back(clusters.nearest(p));
        for (const auto& p : b) sb.push_back(clusters.nearest(p));
        const double ref = align_oracle(sa.size(), sb.size(),
                                        [&](std::size_t i, std::size_t j) { return sa[i] == sb[j] ? 1.0 : 0.0; }) /
                           static_cast<double>(std::max(sa.size(), sb.size()));
        ss_err = std::max(ss_err, std::abs(sequence_score(a, b, clusters) - ref));
    }
    std::size_t identity_bad = 0;
    for (int c = 0; c < kMetricCases; ++c) {
        const Scanpath a = random_path(rng, 3, 6, false);
        const std::vector<Scanpath> ctx = {a};
        identity_bad += lev(a, a) != 0;
        identity_bad += dtw(a, a) != 0.0;
        identity_bad += tde(a, a) != 0.0;
        identity_bad += std::abs(scanmatch(a, a) - 1.0) > kMetricTol;
        identity_bad += rec(a, a) < 100.0 / static_cast<double>(a.size()) - kMetricTol;
        identity_bad += sequence_score(a, a, build_clusters(ctx)) != 1.0;
    }
    const double worst = std::max({dtw_err, tde_err, sm_err, rec_err, ss_err});
    return {lev_bad == 0 && worst < kMetricTol && identity_bad == 0,
            fmt("%d cases each; LEV mismatches %zu; max error DTW %.1g, TDE %.1g, ScanMatch %.1g, REC %.1g, SS %.1g "
                "(tol %g); identity failures %zu",
                kMetricCases, lev_bad, dtw_err, tde_err, sm_err, rec_err, ss_err, kMetricTol, identity_bad)};
}

// 7 -----------------------------------------------------------------------

Outcome saliency_anchors() {
    const SphereGrid grid = build_grid(128, 256);
    std::mt19937_64 rng(71);
    const std::vector<Scanpath> paths = {oracles::random_path(rng, 6, 6, false),
                                         oracles::random_path(rng, 6, 6, false)};
    const SaliencyMap m = saliency_from_scanpaths(paths, grid);
    const SaliencyMap fix = fixation_map(paths);
    std::size_t support = 0, n_fix = 0;
    for (double v : m.values) support += v > 0.0;
    for (double v : fix.values) n_fix += v > 0.0;

    const double cc_err = std::abs(cc(m, m) - 1.0);
    const double sim_err = std::abs(sim(m, m) - 1.0);
    const double kld_self = kld(m, m);
    // KLD uses ε = 1e-12 in the ratio denominator, which biases the self-score by at most ε per supported cell.
    const double kld_tol = 1e-12 * static_cast<double>(support);
    const double nss_const = nss(SaliencyMap(128, 256, 0.25), fix);

    SaliencyMap separating(128, 256);
    std::uniform_real_distribution<double> low(0.0, 0.4), high(0.6, 1.0);
    for (std::size_t i = 0; i < fix.values.size(); ++i) separating.values[i] = fix.values[i] > 0 ? high(rng) : low(rng);
    const double auc = auc_judd(separating, fix);
    const double auc_tol = 1.0 / static_cast<double>(n_fix);

    return {cc_err < kSaliencyTol && sim_err < kSaliencyTol && std::abs(kld_self) <= kld_tol && nss_const == 0.0 &&
                std::abs(auc - 1.0) <= auc_tol,
            fmt("|CC-1| %.1g, |SIM-1| %.1g (tol %g); KLD(m,m) %.2g (tol %.2g = 1e-12 x %zu cells); NSS(const) %g; "
                "AUC-Judd %.6f (tol 1/%zu fixated cells)",
                cc_err, sim_err, kSaliencyTol, kld_self, kld_tol, support, nss_const, auc, n_fix)};
}

// 8 -----------------------------------------------------------------------

Outcome geometry() {
    const SphereGrid grid = build_grid(128, 256);
    double worst_rt = 0.0, total = 0.0, worst_rot = 0.0;
    for (int r = 0; r < grid.height; ++r)
        for (int c = 0; c < grid.width; ++c) {
            const LatLon ll = pixel_to_latlon(r, c, grid.height, grid.width);
            const LatLon back = unit3_to_latlon(latlon_to_unit3(ll));
            const double dlon = std::abs(std::remainder(back.lon - ll.lon, 2 * kPi));
            worst_rt = std::max({worst_rt, std::abs(back.lat - ll.lat), dlon});
            total += cell_solid_angle(r, grid.height, grid.width);

            Fixation p = grid.points[grid.index(r, c)];
            const Fixation start = p;
            for (int k = 0; k < 6; ++k) p = rotate_about_polar_axis(p, kPi / 3);
            worst_rot = std::max(worst_rot, great_circle_distance(p, start));
        }
    const double area_err = std::abs(total - 4 * kPi);
    return {worst_rt < kRoundTripTol && area_err < kSolidAngleTol && worst_rot < kRotationTol,
            fmt("round trip %.2g rad (tol %g) over %zu points; |sum solid angle - 4pi| %.2g (tol %g); six 60 deg "
                "rotations %.2g rad (tol %g)",
                worst_rt, kRoundTripTol, grid.size(), area_err, kSolidAngleTol, worst_rot, kRotationTol)};
}

// 9 -----------------------------------------------------------------------

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome reproducibility(const fs::path& work) {
    const fs::path toy = fs::path(SCANPATH3D_TEST_ASSETS) / "toy" / "manifest.json";
    RunConfig cfg;
    cfg.model = tiny_model_config();
    cfg.train.batch = 4;
    cfg.train.lr = 1e-2;
    cfg.train.warmup_epochs = 1;
    cfg.train.total_epochs = 3;
    cfg.train.validation_images = 1;
    cfg.train.validation_samples = 2;
    cfg.model.encoder.dropout = cfg.model.decoder.dropout = 0.1;
    fs::remove_all(work);
    fs::create_directories(work);
    write_text_atomically(work / "config.json", to_json(cfg).dump(2));

    auto run = [](std::vector<std::string> args) {
        args.insert(args.begin(), "scanpath3d");
        std::ostringstream out, err;
        const int code = cli::run(args, out, err);
        if (code != 0) throw std::runtime_error("command failed: " + err.str());
        return out.str();
    };
    const std::string c = (work / "config.json").string();
    for (const char* tag : {"a", "b"}) {
        run({"--config", c, "--seed", "91", "--threads", "1", "train", "--dataset", toy.string(), "--out",
             (work / (std::string("train_") + tag)).string()});
        run({"--config", c, "--seed", "92", "--threads", "1", "generate", "--checkpoint",
             (work / "train_a" / "model").string(), "--dataset", toy.string(), "--samples", "10", "--length", "30",
             "--out", (work / (std::string("gen_") + tag + ".jsonl")).string()});
    }
    std::size_t compared = 0, differing = 0;
    for (const auto& entry : fs::recursive_directory_iterator(work / "train_a")) {
        if (!entry.is_regular_file()) continue;
        const fs::path rel = fs::relative(entry.path(), work / "train_a");
        ++compared;
        differing += file_bytes(entry.path()) != file_bytes(work / "train_b" / rel);
    }
    ++compared;
    differing += file_bytes(work / "gen_a.jsonl") != file_bytes(work / "gen_b.jsonl");
    const bool nonempty = fs::file_size(work / "gen_a.jsonl") > 0;
    return {differing == 0 && compared > 3 && nonempty,
            fmt("%zu of %zu output files differ between two seeded runs (train: checkpoints, logs, snapshot; "
                "generate: JSON lines)",
                differing, compared)};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::vector<int> only;
    std::vector<int> expect_fail;
    std::string work = (fs::temp_directory_path() / "scanpath3d_acceptance").string();
    app.add_option("--only", only, "Run only these criteria");
    app.add_option("--expect-fail", expect_fail,
                   "Criteria reported as FAIL that do not turn the exit status red; the run still fails if one of "
                   "them passes, so the list must match reality exactly");
    app.add_option("--work-dir", work, "Scratch directory");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient correctness", gradient_check},
        {"analytic MDN values", analytic_mdn},
        {"sampling fidelity", sampling_fidelity},
        {"decoder causality and mode equivalence", decoder_causality},
        {"overfit sanity", overfit},
        {"metric oracles", metric_oracles},
        {"saliency metric anchors", saliency_anchors},
        {"geometry", geometry},
        {"reproducibility", [&] { return reproducibility(work); }},
    };
    const std::set<int> selected(only.begin(), only.end()), expected(expect_fail.begin(), expect_fail.end());
    std::set<int> failed;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what(), {}};
        }
        if (!o.pass) failed.insert(id);
        std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << " | "
                  << o.detail << std::endl;
        for (const auto& n : o.notes) std::cout << "    " << n << std::endl;
    }
    std::set<int> expected_run;
    for (int id : expected)
        if (selected.empty() || selected.count(id)) expected_run.insert(id);
    if (failed == expected_run) {
        if (!failed.empty()) std::cout << "failing criteria match the expected list" << std::endl;
        return 0;
    }
    std::cout << "failing criteria differ from the expected list" << std::endl;
    return 1;
}
