#pragma once

// Brute-force reference implementations used to cross-check the library.
// Deliberately naive: full-grid scans, explicit enumeration.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <set>
#include <vector>

#include "dilseg/volume.hpp"

namespace oracle {

struct Grid {
    int nx, ny, nz;
    std::vector<int> v;  // x fastest
    int at(int x, int y, int z) const { return v[static_cast<std::size_t>(x + nx * (y + ny * z))]; }
};

inline Grid to_grid(const dilseg::LabelVolume& vol) {
    Grid g{static_cast<int>(vol.nx()), static_cast<int>(vol.ny()), static_cast<int>(vol.nz()), {}};
    for (std::size_t i = 0; i < vol.size(); ++i) g.v.push_back(static_cast<int>(vol[i]));
    return g;
}

/// Flood fill of non-zero voxels with the full 3x3x3 neighbourhood.
/// Labels start at 1 in raster order of the first voxel.
inline std::vector<int> flood_fill(const Grid& g) {
    std::vector<int> lab(g.v.size(), 0);
    int next = 0;
    for (int z = 0; z < g.nz; ++z)
        for (int y = 0; y < g.ny; ++y)
            for (int x = 0; x < g.nx; ++x) {
                const int i = x + g.nx * (y + g.ny * z);
                if (g.v[i] == 0 || lab[i] != 0) continue;
                ++next;
                std::deque<std::array<int, 3>> q{{x, y, z}};
                lab[i] = next;
                while (!q.empty()) {
                    auto [a, b, c] = q.front();
                    q.pop_front();
                    for (int dz = -1; dz <= 1; ++dz)
                        for (int dy = -1; dy <= 1; ++dy)
                            for (int dx = -1; dx <= 1; ++dx) {
                                const int u = a + dx, w = b + dy, t = c + dz;
                                if (u < 0 || w < 0 || t < 0 || u >= g.nx || w >= g.ny || t >= g.nz) continue;
                                const int j = u + g.nx * (w + g.ny * t);
                                if (g.v[j] != 0 && lab[j] == 0) {
                                    lab[j] = next;
                                    q.push_back({u, w, t});
                                }
                            }
                }
            }
    return lab;
}

struct Outcome {
    std::map<int, double> gt_dsc;      // gt id -> reported DSC
    std::map<int, bool> gt_detected;   // gt id -> TP
    std::set<int> fp_components;
    std::set<int> ignored_components;
    int tp = 0, fp = 0, positives = 0;
    double recall = 0, precision = 0, f1 = 0;
};

/// Lesion-level scoring with many-to-one matching, re-derived by voxel counting.
inline Outcome score(const Grid& gt, const Grid& pred, double voxel_cc, double dsc_threshold = 0.1,
                     double min_cc = 0.1) {
    Outcome o;
    const auto comp = flood_fill(pred);
    const int ncomp = comp.empty() ? 0 : *std::max_element(comp.begin(), comp.end());
    std::set<int> gt_ids;
    for (int v : gt.v)
        if (v != 0) gt_ids.insert(v);
    std::set<int> kept;
    for (int c = 1; c <= ncomp; ++c) {
        long n = std::count(comp.begin(), comp.end(), c);
        if (static_cast<double>(n) * voxel_cc <= min_cc) {
            o.ignored_components.insert(c);
        } else {
            kept.insert(c);
        }
    }
    std::set<int> used;
    for (int g : gt_ids) {
        double best = 0.0;
        int best_c = 0;
        for (int c : kept) {
            long inter = 0, na = 0, nb = 0;
            for (std::size_t i = 0; i < gt.v.size(); ++i) {
                const bool a = gt.v[i] == g, b = comp[i] == c;
                inter += a && b;
                na += a;
                nb += b;
            }
            const double d = 2.0 * inter / static_cast<double>(na + nb);
            if (inter > 0 && d > best) {
                best = d;
                best_c = c;
            }
        }
        o.gt_dsc[g] = best;
        o.gt_detected[g] = best > dsc_threshold;
        if (best > dsc_threshold) {
            ++o.tp;
            used.insert(best_c);
        }
    }
    for (int c : kept)
        if (!used.count(c)) o.fp_components.insert(c);
    o.fp = static_cast<int>(o.fp_components.size());
    o.positives = static_cast<int>(gt_ids.size());
    o.recall = o.positives ? static_cast<double>(o.tp) / o.positives : 0.0;
    o.precision = o.tp + o.fp ? static_cast<double>(o.tp) / (o.tp + o.fp) : 0.0;
    o.f1 = o.precision + o.recall > 0 ? 2 * o.precision * o.recall / (o.precision + o.recall) : 0.0;
    return o;
}

/// Mid-ranks by counting: rank = #less + (#equal + 1) / 2.
inline std::vector<double> mid_ranks(const std::vector<double>& xs) {
    std::vector<double> r;
    for (double x : xs) {
        double less = 0, eq = 0;
        for (double y : xs) {
            less += y < x;
            eq += y == x;
        }
        r.push_back(less + (eq + 1) / 2);
    }
    return r;
}

inline double two_sided(const std::vector<double>& stats, double observed) {
    double lo = 0, hi = 0;
    for (double s : stats) {
        lo += s <= observed + 1e-9;
        hi += s >= observed - 1e-9;
    }
    return std::min(1.0, 2.0 * std::min(lo, hi) / static_cast<double>(stats.size()));
}

/// Exact signed-rank p by enumerating all 2^n sign patterns (zeros dropped).
inline double signed_rank_p(const std::vector<double>& d) {
    std::vector<double> nz;
    for (double x : d)
        if (x != 0) nz.push_back(x);
    std::vector<double> mags;
    for (double x : nz) mags.push_back(std::fabs(x));
    const auto r = mid_ranks(mags);
    double obs = 0;
    for (std::size_t i = 0; i < nz.size(); ++i)
        if (nz[i] > 0) obs += r[i];
    std::vector<double> all;
    for (std::uint32_t mask = 0; mask < (1u << nz.size()); ++mask) {
        double s = 0;
        for (std::size_t i = 0; i < nz.size(); ++i)
            if (mask >> i & 1u) s += r[i];
        all.push_back(s);
    }
    return two_sided(all, obs);
}

/// Exact rank-sum p by enumerating every size-|a| subset of the pooled sample.
inline double rank_sum_p(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> pooled(a);
    pooled.insert(pooled.end(), b.begin(), b.end());
    const auto r = mid_ranks(pooled);
    double obs = 0;
    for (std::size_t i = 0; i < a.size(); ++i) obs += r[i];
    std::vector<double> all;
    const std::size_t n = pooled.size();
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (static_cast<std::size_t>(__builtin_popcount(mask)) != a.size()) continue;
        double s = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask >> i & 1u) s += r[i];
        all.push_back(s);
    }
    return two_sided(all, obs);
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i] / n;
        my += y[i] / n;
    }
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace oracle
