#pragma once

// Brute-force references for the scanpath metrics: recursion and enumeration
// instead of dynamic programming, acos instead of the library's atan2 distance.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "scanpath3d/metrics.hpp"

namespace scanpath3d::oracles {

inline double oracle_degrees(const Fixation& a, const Fixation& b) {
    const double c = std::clamp(a.dot(b) / (a.norm() * b.norm()), -1.0, 1.0);
    return std::acos(c) * 180.0 / kPi;
}

// Bin lookup from the closed-form cell boundaries.
inline int oracle_bin(const Fixation& p, int rows, int cols) {
    const double lat = std::asin(std::clamp(p.z, -1.0, 1.0));
    const double lon = std::atan2(p.y, p.x);
    int r = static_cast<int>(std::floor((kPi / 2 - lat) / kPi * rows));
    int c = static_cast<int>(std::floor((lon + kPi) / (2 * kPi) * cols));
    return std::clamp(r, 0, rows - 1) * cols + ((c % cols) + cols) % cols;
}

inline Fixation oracle_center(int id, int rows, int cols) {
    const double lat = kPi / 2 - kPi * (id / cols + 0.5) / rows;
    const double lon = 2 * kPi * (id % cols + 0.5) / cols - kPi;
    return {std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat)};
}

/// Half of the points come from a fixed pool of eight so that bins and
/// clusters repeat; with `pooled` false every point is independent.
inline Scanpath random_path(std::mt19937_64& rng, std::size_t min_len = 1, std::size_t max_len = 6,
                            bool pooled = true) {
    static const std::vector<Fixation> pool = [] {
        std::vector<Fixation> v;
        std::mt19937_64 g(99);
        std::normal_distribution<double> n;
        for (int i = 0; i < 8; ++i) v.push_back(normalized({n(g), n(g), n(g)}));
        return v;
    }();
    std::normal_distribution<double> n;
    const std::size_t len = std::uniform_int_distribution<std::size_t>(min_len, max_len)(rng);
    Scanpath p;
    for (std::size_t i = 0; i < len; ++i) {
        if (rng() % 2 && pooled) {
            p.push_back(pool[rng() % pool.size()]);
        } else {
            p.push_back(normalized({n(rng), n(rng), n(rng)}));
        }
    }
    return p;
}

inline std::size_t lev_oracle(const std::vector<int>& a, const std::vector<int>& b, std::size_t i, std::size_t j) {
    if (i == 0) return j;
    if (j == 0) return i;
    return std::min({lev_oracle(a, b, i - 1, j) + 1, lev_oracle(a, b, i, j - 1) + 1,
                     lev_oracle(a, b, i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0 : 1)});
}

// Minimum over every monotone warping path from (0,0) to (n-1,m-1).
inline double dtw_oracle(const Scanpath& a, const Scanpath& b) {
    double best = std::numeric_limits<double>::infinity();
    std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double acc) {
        acc += oracle_degrees(a[i], b[j]);
        if (i + 1 == a.size() && j + 1 == b.size()) {
            best = std::min(best, acc);
            return;
        }
        if (i + 1 < a.size()) walk(i + 1, j, acc);
        if (j + 1 < b.size()) walk(i, j + 1, acc);
        if (i + 1 < a.size() && j + 1 < b.size()) walk(i + 1, j + 1, acc);
    };
    walk(0, 0, 0.0);
    return best;
}

inline double tde_oracle(const Scanpath& a, const Scanpath& b, std::size_t k) {
    auto one_way = [k](const Scanpath& x, const Scanpath& y) {
        std::vector<double> mins;
        for (std::size_t i = 0; i + k <= x.size(); ++i) {
            std::vector<double> candidates;
            for (std::size_t j = 0; j + k <= y.size(); ++j) {
                double s = 0.0;
                for (std::size_t l = 0; l < k; ++l) s += oracle_degrees(x[i + l], y[j + l]);
                candidates.push_back(s / k);
            }
            mins.push_back(*std::min_element(candidates.begin(), candidates.end()));
        }
        double s = 0.0;
        for (double v : mins) s += v;
        return s / mins.size();
    };
    return (one_way(a, b) + one_way(b, a)) / 2.0;
}

// Best alignment credit by exhaustive recursion (gap credit 0).
inline double align_oracle(std::size_t i, std::size_t j, const std::function<double(std::size_t, std::size_t)>& s) {
    if (i == 0 || j == 0) return 0.0;
    return std::max({align_oracle(i - 1, j, s), align_oracle(i, j - 1, s), align_oracle(i - 1, j - 1, s) + s(i - 1, j - 1)});
}

inline double scanmatch_oracle(const Scanpath& a, const Scanpath& b) {
    std::vector<int> sa, sb;
    for (const auto& p : a) sa.push_back(oracle_bin(p, 8, 16));
    for (const auto& p : b) sb.push_back(oracle_bin(p, 8, 16));
    const double best = align_oracle(sa.size(), sb.size(), [&](std::size_t i, std::size_t j) {
        return 1.0 - oracle_degrees(oracle_center(sa[i], 8, 16), oracle_center(sb[j], 8, 16)) / 180.0;
    });
    return best / std::max(sa.size(), sb.size());
}

inline double rec_oracle(const Scanpath& a, const Scanpath& b) {
    int c = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) c += oracle_degrees(a[i], b[j]) < 8.0;
    return 100.0 * c / double(a.size() * a.size());
}

}  // namespace scanpath3d::oracles
