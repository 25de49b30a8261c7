#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "scanpath3d/geometry.hpp"

namespace scanpath3d {

using Scanpath = std::vector<Fixation>;

/// Lat-lon bin of a fixation on a rows × cols lattice (row-major id).
int bin_id(const Fixation& p, int rows, int cols);
Fixation bin_center(int id, int rows, int cols);
std::vector<int> bin_string(const Scanpath& path, int rows, int cols);

std::size_t lev(const Scanpath& a, const Scanpath& b, int rows = 16, int cols = 32);

enum class DtwMode { kSphericalDegrees, kEquirectPixels };

struct DtwOptions {
    DtwMode mode = DtwMode::kSphericalDegrees;
    int height = 128;  // pixel mode resolution
    int width = 256;
};

double dtw(const Scanpath& a, const Scanpath& b, const DtwOptions& opts = {});

/// Symmetrized time-delay embedding distance in degrees. Throws PathTooShort.
double tde(const Scanpath& a, const Scanpath& b, std::size_t k = 3);

double scanmatch(const Scanpath& a, const Scanpath& b, int rows = 8, int cols = 16);

/// Cross-recurrence percentage. Throws LengthMismatch.
double rec(const Scanpath& a, const Scanpath& b, double threshold_deg = 8.0);

struct ClusterSet {
    std::vector<Fixation> centers;
    int nearest(const Fixation& p) const;
};

/// Seeded k-means over the pooled fixations; k is capped at the number of distinct points.
ClusterSet build_clusters(std::span<const Scanpath> paths, std::size_t k = 12, std::uint64_t seed = 0,
                          int max_iterations = 100);

/// Throws EmptyClusterSet.
double sequence_score(const Scanpath& a, const Scanpath& b, const ClusterSet& clusters);

struct MetricConfig {
    int lev_rows = 16;
    int lev_cols = 32;
    DtwOptions dtw;
    std::size_t tde_k = 3;
    int scanmatch_rows = 8;
    int scanmatch_cols = 16;
    double rec_threshold_deg = 8.0;
    std::size_t ss_clusters = 12;
    std::uint64_t ss_seed = 0;
};

struct MetricScores {
    double lev = 0.0;
    double dtw = 0.0;
    double tde = 0.0;  // NaN when no pair reaches the embedding length
    double scanmatch = 0.0;
    double rec = 0.0;
    double ss = 0.0;
    std::size_t pairs = 0;
    std::size_t tde_pairs = 0;
};

/// Mean of every metric over all predicted × human pairs. Each pair is truncated
/// to the human path's length (and to the shorter of the two where needed).
MetricScores evaluate_protocol(std::span<const Scanpath> predicted, std::span<const Scanpath> human,
                               const MetricConfig& cfg = {});

// Saliency ---------------------------------------------------------------

struct SaliencyMap {
    int height = 128;
    int width = 256;
    std::vector<double> values;  // row-major

    SaliencyMap() = default;
    SaliencyMap(int h, int w, double fill = 0.0) : height(h), width(w), values(std::size_t(h) * w, fill) {}
    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
};

inline constexpr double kSaliencySigma = 0.035;  // radians

SaliencyMap fixation_map(std::span<const Scanpath> paths, int height = 128, int width = 256);

/// Sum of von Mises–Fisher kernels (κ = 1/σ²) over grid points, normalized to sum 1.
SaliencyMap saliency_from_scanpaths(std::span<const Scanpath> paths, const SphereGrid& grid,
                                    double sigma = kSaliencySigma);

double auc_judd(const SaliencyMap& saliency, const SaliencyMap& fixations);
double nss(const SaliencyMap& saliency, const SaliencyMap& fixations);
double cc(const SaliencyMap& a, const SaliencyMap& b);
double sim(const SaliencyMap& a, const SaliencyMap& b);
double kld(const SaliencyMap& predicted, const SaliencyMap& ground_truth);

struct SaliencyScores {
    double auc_judd = 0.0;
    double nss = 0.0;
    double cc = 0.0;
    double sim = 0.0;
    double kld = 0.0;
};

SaliencyScores saliency_metrics(const SaliencyMap& predicted, const SaliencyMap& ground_truth,
                                const SaliencyMap& fixations);

}  // namespace scanpath3d
