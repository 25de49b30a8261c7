#include "scanpath3d/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <tuple>

#include "scanpath3d/errors.hpp"

namespace scanpath3d {

namespace {

double degrees_between(const Fixation& a, const Fixation& b) { return rad_to_deg(great_circle_distance(a, b)); }

void require_nonempty(const Scanpath& a, const Scanpath& b, const char* metric) {
    if (a.empty() || b.empty()) throw PathTooShort(std::string(metric) + " needs nonempty scanpaths");
}

/// Needleman–Wunsch with zero gap score: best total substitution credit.
template <typename Score>
double align_gapless_zero(std::size_t n, std::size_t m, Score score) {
    std::vector<double> prev(m + 1, 0.0), cur(m + 1, 0.0);
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = 0.0;
        for (std::size_t j = 1; j <= m; ++j) {
            cur[j] = std::max({prev[j - 1] + score(i - 1, j - 1), prev[j], cur[j - 1]});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

void require_same_shape(const SaliencyMap& a, const SaliencyMap& b) {
    if (a.height != b.height || a.width != b.width || a.values.size() != b.values.size()) {
        throw ShapeMismatch("saliency maps " + std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                            std::to_string(b.height) + "x" + std::to_string(b.width));
    }
}

std::vector<double> sum_normalized(const SaliencyMap& m) {
    double total = 0.0;
    for (double v : m.values) total += v;
    std::vector<double> out(m.values);
    if (total > 0.0)
        for (double& v : out) v /= total;
    return out;
}

// Shifted by the first sample so constant inputs give exactly zero spread.
std::pair<double, double> mean_std(std::span<const double> v) {
    const double ref = v.front();
    double shift = 0.0;
    for (double x : v) shift += x - ref;
    shift /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - ref - shift) * (x - ref - shift);
    return {ref + shift, std::sqrt(var / static_cast<double>(v.size()))};
}

}  // namespace

int bin_id(const Fixation& p, int rows, int cols) {
    const PixelIndex px = latlon_to_pixel(unit3_to_latlon(p), rows, cols);
    return px.row * cols + px.col;
}

Fixation bin_center(int id, int rows, int cols) { return latlon_to_unit3(pixel_to_latlon(id / cols, id % cols, rows, cols)); }

std::vector<int> bin_string(const Scanpath& path, int rows, int cols) {
    std::vector<int> out;
    out.reserve(path.size());
    for (const auto& p : path) out.push_back(bin_id(p, rows, cols));
    return out;
}

std::size_t lev(const Scanpath& a, const Scanpath& b, int rows, int cols) {
    const auto sa = bin_string(a, rows, cols), sb = bin_string(b, rows, cols);
    std::vector<std::size_t> prev(sb.size() + 1), cur(sb.size() + 1);
    for (std::size_t j = 0; j <= sb.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= sa.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= sb.size(); ++j) {
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (sa[i - 1] == sb[j - 1] ? 0 : 1)});
        }
        std::swap(prev, cur);
    }
    return prev[sb.size()];
}

double dtw(const Scanpath& a, const Scanpath& b, const DtwOptions& opts) {
    require_nonempty(a, b, "dtw");
    std::function<double(const Fixation&, const Fixation&)> dist;
    if (opts.mode == DtwMode::kSphericalDegrees) {
        dist = degrees_between;
    } else {
        dist = [&](const Fixation& p, const Fixation& q) {
            const auto fp = latlon_to_pixel_frac(unit3_to_latlon(p), opts.height, opts.width);
            const auto fq = latlon_to_pixel_frac(unit3_to_latlon(q), opts.height, opts.width);
            return std::hypot(fp.first - fq.first, fp.second - fq.second);
        };
    }
    const std::size_t n = a.size(), m = b.size();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
    prev[0] = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = inf;
        for (std::size_t j = 1; j <= m; ++j) {
            cur[j] = dist(a[i - 1], b[j - 1]) + std::min({prev[j], cur[j - 1], prev[j - 1]});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

double tde(const Scanpath& a, const Scanpath& b, std::size_t k) {
    if (k == 0) throw InvalidConfig("tde embedding length must be positive");
    if (a.size() < k || b.size() < k) {
        throw PathTooShort("tde needs paths of length >= " + std::to_string(k) + ", got " + std::to_string(a.size()) +
                           " and " + std::to_string(b.size()));
    }
    auto directed = [k](const Scanpath& x, const Scanpath& y) {
        double total = 0.0;
        const std::size_t nx = x.size() - k + 1, ny = y.size() - k + 1;
        for (std::size_t i = 0; i < nx; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < ny; ++j) {
                double d = 0.0;
                for (std::size_t l = 0; l < k; ++l) d += degrees_between(x[i + l], y[j + l]);
                best = std::min(best, d / static_cast<double>(k));
            }
            total += best;
        }
        return total / static_cast<double>(nx);
    };
    return 0.5 * (directed(a, b) + directed(b, a));
}

double scanmatch(const Scanpath& a, const Scanpath& b, int rows, int cols) {
    require_nonempty(a, b, "scanmatch");
    const auto sa = bin_string(a, rows, cols), sb = bin_string(b, rows, cols);
    std::vector<Fixation> centers(static_cast<std::size_t>(rows) * cols);
    for (int id = 0; id < rows * cols; ++id) centers[id] = bin_center(id, rows, cols);
    const double best = align_gapless_zero(sa.size(), sb.size(), [&](std::size_t i, std::size_t j) {
        return 1.0 - great_circle_distance(centers[sa[i]], centers[sb[j]]) / kPi;
    });
    return best / static_cast<double>(std::max(sa.size(), sb.size()));
}

double rec(const Scanpath& a, const Scanpath& b, double threshold_deg) {
    if (a.size() != b.size()) {
        throw LengthMismatch("rec needs equal lengths, got " + std::to_string(a.size()) + " and " +
                             std::to_string(b.size()));
    }
    if (a.empty()) throw PathTooShort("rec needs nonempty scanpaths");
    std::size_t count = 0;
    for (const auto& p : a)
        for (const auto& q : b) count += degrees_between(p, q) < threshold_deg ? 1 : 0;
    const double t = static_cast<double>(a.size());
    return 100.0 * static_cast<double>(count) / (t * t);
}

int ClusterSet::nearest(const Fixation& p) const {
    if (centers.empty()) throw EmptyClusterSet("no cluster centers");
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < centers.size(); ++i) {
        const Fixation d{p.x - centers[i].x, p.y - centers[i].y, p.z - centers[i].z};
        const double dd = d.dot(d);
        if (dd < best_d) {
            best_d = dd;
            best = static_cast<int>(i);
        }
    }
    return best;
}

ClusterSet build_clusters(std::span<const Scanpath> paths, std::size_t k, std::uint64_t seed, int max_iterations) {
    std::vector<Fixation> points;
    for (const auto& p : paths) points.insert(points.end(), p.begin(), p.end());
    std::set<std::tuple<double, double, double>> distinct;
    for (const auto& p : points) distinct.emplace(p.x, p.y, p.z);
    k = std::min(k, distinct.size());
    if (k == 0) throw EmptyClusterSet("no fixations to cluster");

    // k-means++ seeding over the distinct points.
    std::vector<Fixation> unique;
    for (const auto& [x, y, z] : distinct) unique.push_back({x, y, z});
    std::mt19937_64 rng(seed);
    auto sq = [](const Fixation& a, const Fixation& b) {
        const Fixation d{a.x - b.x, a.y - b.y, a.z - b.z};
        return d.dot(d);
    };
    ClusterSet set;
    set.centers.push_back(unique[rng() % unique.size()]);
    std::vector<double> d2(unique.size());
    while (set.centers.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < unique.size(); ++i) {
            d2[i] = std::numeric_limits<double>::infinity();
            for (const auto& c : set.centers) d2[i] = std::min(d2[i], sq(unique[i], c));
            total += d2[i];
        }
        double u = std::uniform_real_distribution<double>(0.0, total)(rng);
        std::size_t pick = unique.size();
        for (std::size_t i = 0; i < unique.size(); ++i) {
            if (d2[i] == 0.0) continue;
            pick = i;
            if (u < d2[i]) break;
            u -= d2[i];
        }
        set.centers.push_back(unique[pick]);
    }

    std::vector<int> assign(points.size(), -1);
    for (int iter = 0; iter < max_iterations; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const int c = set.nearest(points[i]);
            changed = changed || c != assign[i];
            assign[i] = c;
        }
        if (!changed) break;
        std::vector<Fixation> sums(k, Fixation{0, 0, 0});
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            auto& s = sums[assign[i]];
            s = {s.x + points[i].x, s.y + points[i].y, s.z + points[i].z};
            ++counts[assign[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            const double n = static_cast<double>(counts[c]);
            set.centers[c] = {sums[c].x / n, sums[c].y / n, sums[c].z / n};
        }
    }
    return set;
}

double sequence_score(const Scanpath& a, const Scanpath& b, const ClusterSet& clusters) {
    if (clusters.centers.empty()) throw EmptyClusterSet("sequence score needs at least one cluster");
    require_nonempty(a, b, "sequence_score");
    std::vector<int> sa, sb;
    for (const auto& p : a) sa.push_back(clusters.nearest(p));
    for (const auto& p : b) sb.push_back(clusters.nearest(p));
    const double matches =
        align_gapless_zero(sa.size(), sb.size(), [&](std::size_t i, std::size_t j) { return sa[i] == sb[j] ? 1.0 : 0.0; });
    return matches / static_cast<double>(std::max(sa.size(), sb.size()));
}

MetricScores evaluate_protocol(std::span<const Scanpath> predicted, std::span<const Scanpath> human,
                               const MetricConfig& cfg) {
    if (predicted.empty() || human.empty()) throw PathTooShort("protocol needs at least one path on each side");
    const ClusterSet clusters = build_clusters(human, cfg.ss_clusters, cfg.ss_seed);
    MetricScores s;
    double tde_total = 0.0;
    for (const auto& pred : predicted) {
        for (const auto& gt : human) {
            const std::size_t n = std::min(pred.size(), gt.size());
            const Scanpath p(pred.begin(), pred.begin() + static_cast<std::ptrdiff_t>(n));
            const Scanpath g(gt.begin(), gt.begin() + static_cast<std::ptrdiff_t>(n));
            s.lev += static_cast<double>(lev(p, g, cfg.lev_rows, cfg.lev_cols));
            s.dtw += dtw(p, g, cfg.dtw);
            s.scanmatch += scanmatch(p, g, cfg.scanmatch_rows, cfg.scanmatch_cols);
            s.rec += rec(p, g, cfg.rec_threshold_deg);
            s.ss += sequence_score(p, g, clusters);
            if (n >= cfg.tde_k) {
                tde_total += tde(p, g, cfg.tde_k);
                ++s.tde_pairs;
            }
            ++s.pairs;
        }
    }
    const double count = static_cast<double>(s.pairs);
    s.lev /= count;
    s.dtw /= count;
    s.scanmatch /= count;
    s.rec /= count;
    s.ss /= count;
    s.tde = s.tde_pairs > 0 ? tde_total / static_cast<double>(s.tde_pairs) : std::numeric_limits<double>::quiet_NaN();
    return s;
}

// Saliency ---------------------------------------------------------------

SaliencyMap fixation_map(std::span<const Scanpath> paths, int height, int width) {
    SaliencyMap m(height, width);
    for (const auto& path : paths)
        for (const auto& p : path) {
            const PixelIndex px = latlon_to_pixel(unit3_to_latlon(p), height, width);
            m.at(px.row, px.col) = 1.0;
        }
    return m;
}

SaliencyMap saliency_from_scanpaths(std::span<const Scanpath> paths, const SphereGrid& grid, double sigma) {
    const double kappa = 1.0 / (sigma * sigma);
    // Cells farther than this contribute below exp(-50) of the peak.
    const double cutoff = std::acos(std::max(-1.0, 1.0 - 50.0 / kappa));
    SaliencyMap m(grid.height, grid.width);
    for (const auto& path : paths) {
        for (const auto& p : path) {
            const Fixation mu = normalized(p);
            const double lat = unit3_to_latlon(mu).lat;
            for (int r = 0; r < grid.height; ++r) {
                const double row_lat = kPi / 2.0 - kPi * (r + 0.5) / grid.height;
                if (std::abs(row_lat - lat) > cutoff) continue;
                for (int c = 0; c < grid.width; ++c) {
                    const double d = mu.dot(grid.points[grid.index(r, c)]);
                    m.at(r, c) += std::exp(kappa * (d - 1.0));
                }
            }
        }
    }
    double total = 0.0;
    for (double v : m.values) total += v;
    if (total > 0.0)
        for (double& v : m.values) v /= total;
    return m;
}

double auc_judd(const SaliencyMap& saliency, const SaliencyMap& fixations) {
    require_same_shape(saliency, fixations);
    std::vector<double> at_fix;
    for (std::size_t i = 0; i < saliency.values.size(); ++i)
        if (fixations.values[i] > 0.0) at_fix.push_back(saliency.values[i]);
    if (at_fix.empty()) throw NoFixations("fixation map has no fixated cells");
    const std::size_t n_pix = saliency.values.size(), n_fix = at_fix.size();
    if (n_fix == n_pix) throw NoFixations("every cell is fixated; AUC is undefined");
    std::sort(at_fix.begin(), at_fix.end(), std::greater<>());
    std::vector<double> sorted_all(saliency.values);
    std::sort(sorted_all.begin(), sorted_all.end(), std::greater<>());

    std::vector<double> tp{0.0}, fp{0.0};
    for (std::size_t i = 0; i < n_fix; ++i) {
        const double thresh = at_fix[i];
        const auto above = static_cast<std::size_t>(
            std::upper_bound(sorted_all.begin(), sorted_all.end(), thresh, std::greater<>()) - sorted_all.begin());
        tp.push_back(static_cast<double>(i + 1) / static_cast<double>(n_fix));
        fp.push_back(static_cast<double>(above - (i + 1)) / static_cast<double>(n_pix - n_fix));
    }
    tp.push_back(1.0);
    fp.push_back(1.0);
    double area = 0.0;
    for (std::size_t i = 1; i < tp.size(); ++i) area += 0.5 * (tp[i] + tp[i - 1]) * (fp[i] - fp[i - 1]);
    return area;
}

double nss(const SaliencyMap& saliency, const SaliencyMap& fixations) {
    require_same_shape(saliency, fixations);
    const auto [mean, std] = mean_std(saliency.values);
    const double denom = std::max(std, 1e-12);
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < saliency.values.size(); ++i) {
        if (fixations.values[i] > 0.0) {
            total += (saliency.values[i] - mean) / denom;
            ++n;
        }
    }
    if (n == 0) throw NoFixations("fixation map has no fixated cells");
    return total / static_cast<double>(n);
}

double cc(const SaliencyMap& a, const SaliencyMap& b) {
    require_same_shape(a, b);
    const auto [ma, sa] = mean_std(a.values);
    const auto [mb, sb] = mean_std(b.values);
    double cov = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) cov += (a.values[i] - ma) * (b.values[i] - mb);
    cov /= static_cast<double>(a.values.size());
    return cov / (std::max(sa, 1e-12) * std::max(sb, 1e-12));
}

double sim(const SaliencyMap& a, const SaliencyMap& b) {
    require_same_shape(a, b);
    const auto na = sum_normalized(a), nb = sum_normalized(b);
    double total = 0.0;
    for (std::size_t i = 0; i < na.size(); ++i) total += std::min(na[i], nb[i]);
    return total;
}

double kld(const SaliencyMap& predicted, const SaliencyMap& ground_truth) {
    require_same_shape(predicted, ground_truth);
    constexpr double kEps = 1e-12;
    const auto p = sum_normalized(predicted), g = sum_normalized(ground_truth);
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (g[i] > 0.0) total += g[i] * std::log(g[i] / (p[i] + kEps));
    return total;
}

SaliencyScores saliency_metrics(const SaliencyMap& predicted, const SaliencyMap& ground_truth,
                                const SaliencyMap& fixations) {
    return {auc_judd(predicted, fixations), nss(predicted, fixations), cc(predicted, ground_truth),
            sim(predicted, ground_truth), kld(predicted, ground_truth)};
}

}  // namespace scanpath3d
