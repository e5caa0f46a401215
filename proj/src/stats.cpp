#include "dilseg/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "dilseg/error.hpp"

namespace dilseg {

const char* to_string(GsGroup g) {
    switch (g) {
        case GsGroup::LOW: return "LOW";
        case GsGroup::INTERMEDIATE: return "INTERMEDIATE";
        case GsGroup::HIGH: return "HIGH";
        case GsGroup::UNKNOWN: return "UNKNOWN";
    }
    return "?";
}

const char* to_string(SizeGroup g) {
    switch (g) {
        case SizeGroup::SMALL: return "SMALL";
        case SizeGroup::MEDIUM: return "MEDIUM";
        case SizeGroup::LARGE: return "LARGE";
    }
    return "?";
}

const char* to_string(ZoneGroup g) {
    switch (g) {
        case ZoneGroup::PZ: return "PZ";
        case ZoneGroup::TZ: return "TZ";
        case ZoneGroup::AS: return "AS";
        case ZoneGroup::OTHER: return "OTHER";
    }
    return "?";
}

const char* to_string(TestKind t) {
    switch (t) {
        case TestKind::SIGNED_RANK: return "SIGNED_RANK";
        case TestKind::RANK_SUM: return "RANK_SUM";
        case TestKind::SPEARMAN: return "SPEARMAN";
    }
    return "?";
}

GsGroup gs_group(const std::optional<Gleason>& gs) {
    if (!gs) return GsGroup::UNKNOWN;
    if (gs->primary == 3 && gs->secondary == 3) return GsGroup::LOW;
    if (gs->primary == 3 && gs->secondary == 4) return GsGroup::INTERMEDIATE;
    return GsGroup::HIGH;
}

SizeGroup size_group(double volume_cc) {
    if (volume_cc < 1.0) return SizeGroup::SMALL;
    if (volume_cc < 2.0) return SizeGroup::MEDIUM;
    return SizeGroup::LARGE;
}

ZoneGroup zone_group(Zone z) {
    switch (z) {
        case Zone::PZ: return ZoneGroup::PZ;
        case Zone::TZ: return ZoneGroup::TZ;
        case Zone::AS: return ZoneGroup::AS;
        default: return ZoneGroup::OTHER;
    }
}

GroupKey LesionOutcome::key() const { return {gs_group(gleason), size_group(volume_cc), zone_group(zone)}; }

std::vector<double> average_ranks(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

namespace {

struct SignedRanks {
    std::vector<int> doubled;  // 2 * rank of |d|
    std::vector<bool> positive;
    double tie_term = 0.0;  // sum of t^3 - t over tie groups
};

SignedRanks signed_ranks(const std::vector<double>& differences) {
    std::vector<double> abs_d;
    SignedRanks s;
    for (double d : differences) {
        if (!std::isfinite(d)) throw ValidationError("signed-rank test: non-finite difference");
        if (d == 0.0) continue;
        abs_d.push_back(std::fabs(d));
        s.positive.push_back(d > 0);
    }
    if (abs_d.empty()) throw ValidationError("signed-rank test: all differences are zero");
    const auto ranks = average_ranks(abs_d);
    for (double r : ranks) s.doubled.push_back(static_cast<int>(std::lround(2.0 * r)));
    std::map<double, int> groups;
    for (double a : abs_d) ++groups[a];
    for (const auto& [v, t] : groups) s.tie_term += static_cast<double>(t) * t * t - t;
    return s;
}

double two_sided_from_counts(const std::vector<double>& counts, int stat, double total) {
    double lower = 0.0, upper = 0.0;
    for (int s = 0; s < static_cast<int>(counts.size()); ++s) {
        if (s <= stat) lower += counts[s];
        if (s >= stat) upper += counts[s];
    }
    return std::min(1.0, 2.0 * std::min(lower, upper) / total);
}

double normal_two_sided(double z) { return std::erfc(std::fabs(z) / std::sqrt(2.0)); }

}  // namespace

double signed_rank_exact_p(const std::vector<double>& differences) {
    const auto s = signed_ranks(differences);
    int max_sum = 0;
    for (int r : s.doubled) max_sum += r;
    std::vector<double> counts(static_cast<std::size_t>(max_sum) + 1, 0.0);
    counts[0] = 1.0;
    int reach = 0;
    for (int r : s.doubled) {
        for (int v = reach; v >= 0; --v) {
            if (counts[v] != 0.0) counts[v + r] += counts[v];
        }
        reach += r;
    }
    int w_plus = 0;
    for (std::size_t i = 0; i < s.doubled.size(); ++i) {
        if (s.positive[i]) w_plus += s.doubled[i];
    }
    return two_sided_from_counts(counts, w_plus, std::ldexp(1.0, static_cast<int>(s.doubled.size())));
}

double signed_rank_normal_p(const std::vector<double>& differences) {
    const auto s = signed_ranks(differences);
    const double n = static_cast<double>(s.doubled.size());
    double w_plus = 0.0;
    for (std::size_t i = 0; i < s.doubled.size(); ++i) {
        if (s.positive[i]) w_plus += 0.5 * s.doubled[i];
    }
    const double mean = n * (n + 1.0) / 4.0;
    const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - s.tie_term / 48.0;
    if (var <= 0.0) return 1.0;
    const double z = std::max(0.0, std::fabs(w_plus - mean) - 0.5) / std::sqrt(var);
    return std::min(1.0, normal_two_sided(z));
}

double rank_biserial(const std::vector<double>& differences) {
    const auto s = signed_ranks(differences);
    double plus = 0.0, minus = 0.0;
    for (std::size_t i = 0; i < s.doubled.size(); ++i) {
        (s.positive[i] ? plus : minus) += 0.5 * s.doubled[i];
    }
    const double n = static_cast<double>(s.doubled.size());
    return (plus - minus) / (n * (n + 1.0) / 2.0);
}

StatResult wilcoxon_signed_rank(const std::vector<double>& differences) {
    const auto s = signed_ranks(differences);
    StatResult r;
    r.test = TestKind::SIGNED_RANK;
    r.n = static_cast<int>(s.doubled.size());
    r.exact = r.n <= 25;
    r.p_value = r.exact ? signed_rank_exact_p(differences) : signed_rank_normal_p(differences);
    r.effect_size = rank_biserial(differences);
    return r;
}

namespace {

struct PooledRanks {
    std::vector<int> doubled_a;
    std::vector<int> doubled_all;
    double tie_term = 0.0;
};

PooledRanks pooled_ranks(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) throw ValidationError("rank-sum test: empty sample");
    std::vector<double> all(a);
    all.insert(all.end(), b.begin(), b.end());
    for (double v : all) {
        if (!std::isfinite(v)) throw ValidationError("rank-sum test: non-finite value");
    }
    const auto ranks = average_ranks(all);
    PooledRanks p;
    for (std::size_t i = 0; i < all.size(); ++i) {
        const int d = static_cast<int>(std::lround(2.0 * ranks[i]));
        p.doubled_all.push_back(d);
        if (i < a.size()) p.doubled_a.push_back(d);
    }
    std::map<double, int> groups;
    for (double v : all) ++groups[v];
    for (const auto& [v, t] : groups) p.tie_term += static_cast<double>(t) * t * t - t;
    return p;
}

}  // namespace

double rank_sum_exact_p(const std::vector<double>& a, const std::vector<double>& b) {
    const auto p = pooled_ranks(a, b);
    const int k = static_cast<int>(a.size());
    int max_sum = 0;
    for (int r : p.doubled_all) max_sum += r;
    // counts[j][s]: subsets of size j with doubled-rank sum s.
    std::vector<std::vector<double>> counts(static_cast<std::size_t>(k) + 1,
                                            std::vector<double>(static_cast<std::size_t>(max_sum) + 1, 0.0));
    counts[0][0] = 1.0;
    int reach = 0;
    for (int r : p.doubled_all) {
        for (int j = k; j >= 1; --j) {
            for (int s = reach; s >= 0; --s) {
                if (counts[j - 1][s] != 0.0) counts[j][s + r] += counts[j - 1][s];
            }
        }
        reach += r;
    }
    int stat = 0;
    for (int r : p.doubled_a) stat += r;
    double total = 0.0;
    for (double c : counts[k]) total += c;
    return two_sided_from_counts(counts[k], stat, total);
}

double rank_sum_normal_p(const std::vector<double>& a, const std::vector<double>& b) {
    const auto p = pooled_ranks(a, b);
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double n = na + nb;
    double ra = 0.0;
    for (int r : p.doubled_a) ra += 0.5 * r;
    const double u = ra - na * (na + 1.0) / 2.0;
    const double mean = na * nb / 2.0;
    const double var = na * nb / 12.0 * ((n + 1.0) - p.tie_term / (n * (n - 1.0)));
    if (var <= 0.0) return 1.0;
    const double z = std::max(0.0, std::fabs(u - mean) - 0.5) / std::sqrt(var);
    return std::min(1.0, normal_two_sided(z));
}

StatResult wilcoxon_rank_sum(const std::vector<double>& a, const std::vector<double>& b) {
    const auto p = pooled_ranks(a, b);
    StatResult r;
    r.test = TestKind::RANK_SUM;
    r.n = static_cast<int>(a.size() + b.size());
    r.exact = r.n <= kRankSumExactMax;
    r.p_value = r.exact ? rank_sum_exact_p(a, b) : rank_sum_normal_p(a, b);
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    double ra = 0.0;
    for (int d : p.doubled_a) ra += 0.5 * d;
    const double ua = ra - na * (na + 1.0) / 2.0;
    r.effect_size = 2.0 * ua / (na * nb) - 1.0;
    return r;
}

SpearmanResult spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw ValidationError("spearman: length mismatch");
    if (xs.size() < 3) throw ValidationError("spearman: need at least 3 pairs");
    const auto rx = average_ranks(xs);
    const auto ry = average_ranks(ys);
    const double n = static_cast<double>(xs.size());
    const double mean = (n + 1.0) / 2.0;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (rx[i] - mean) * (ry[i] - mean);
        sxx += (rx[i] - mean) * (rx[i] - mean);
        syy += (ry[i] - mean) * (ry[i] - mean);
    }
    if (sxx == 0.0 || syy == 0.0) throw ValidationError("spearman: constant input");
    SpearmanResult r;
    r.n = static_cast<int>(xs.size());
    r.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    if (std::fabs(r.rho) >= 1.0) {
        r.p_value = 0.0;
    } else {
        const double df = n - 2.0;
        const double t = r.rho * std::sqrt(df / (1.0 - r.rho * r.rho));
        boost::math::students_t dist(df);
        r.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t))));
    }
    return r;
}

double quantile(std::vector<double> xs, double q) {
    if (xs.empty()) throw ValidationError("quantile of empty sample");
    std::sort(xs.begin(), xs.end());
    const double h = (static_cast<double>(xs.size()) - 1.0) * std::clamp(q, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, xs.size() - 1);
    return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

double median(const std::vector<double>& xs) { return quantile(xs, 0.5); }

LesionGroups group_lesions(const std::vector<LesionOutcome>& lesions) {
    LesionGroups g;
    for (const auto& l : lesions) {
        const auto k = l.key();
        g.by_gs[k.gs].push_back(l);
        g.by_size[k.size].push_back(l);
        g.by_zone[k.zone].push_back(l);
    }
    return g;
}

}  // namespace dilseg
