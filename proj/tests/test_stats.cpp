#include <gtest/gtest.h>

#include <random>

#include "dilseg/error.hpp"
#include "dilseg/stats.hpp"
#include "oracles.hpp"

using namespace dilseg;

TEST(Stats, AverageRanksShareTies) {
    const auto r = average_ranks({3.0, 1.0, 3.0, 2.0});
    EXPECT_EQ(r, (std::vector<double>{3.5, 1.0, 3.5, 2.0}));
}

TEST(Stats, SignedRankMatchesEnumeration) {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> u(-3, 3);
    for (int n = 1; n <= 12; ++n)
        for (int rep = 0; rep < 10; ++rep) {
            std::vector<double> d;
            for (int i = 0; i < n; ++i) d.push_back(u(rng));
            d[0] = 2.0;
            EXPECT_NEAR(signed_rank_exact_p(d), oracle::signed_rank_p(d), 1e-12);
        }
}

TEST(Stats, SignedRankKnownValue) {
    // All eight differences positive: p = 2 / 2^8.
    const std::vector<double> d{1, 2, 3, 4, 5, 6, 7, 8};
    EXPECT_DOUBLE_EQ(wilcoxon_signed_rank(d).p_value, 2.0 / 256.0);
    EXPECT_TRUE(wilcoxon_signed_rank(d).exact);
    EXPECT_DOUBLE_EQ(wilcoxon_signed_rank(d).effect_size, 1.0);
}

TEST(Stats, NormalApproximationTracksExactForModerateN) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd(0.3, 1.0);
    std::vector<double> d;
    for (int i = 0; i < 25; ++i) d.push_back(nd(rng));
    EXPECT_NEAR(signed_rank_normal_p(d), signed_rank_exact_p(d), 0.01);
    std::vector<double> big;
    for (int i = 0; i < 40; ++i) big.push_back(nd(rng));
    EXPECT_FALSE(wilcoxon_signed_rank(big).exact);
}

TEST(Stats, RankSumMatchesEnumerationAndKnownValue) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> u(0, 4);
    for (int n = 2; n <= 11; ++n)
        for (int na = 1; na < n; ++na) {
            std::vector<double> a, b;
            for (int i = 0; i < n; ++i) (i < na ? a : b).push_back(u(rng));
            EXPECT_NEAR(rank_sum_exact_p(a, b), oracle::rank_sum_p(a, b), 1e-12);
        }
    // Complete separation of 3 vs 3: p = 2 / C(6,3).
    const auto r = wilcoxon_rank_sum({1, 2, 3}, {4, 5, 6});
    EXPECT_DOUBLE_EQ(r.p_value, 0.1);
    EXPECT_DOUBLE_EQ(r.effect_size, -1.0);
    EXPECT_DOUBLE_EQ(wilcoxon_rank_sum({4, 5, 6}, {1, 2, 3}).effect_size, 1.0);
}

TEST(Stats, RankSumNormalCloseToExact) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> nd;
    std::vector<double> a, b;
    for (int i = 0; i < 20; ++i) a.push_back(nd(rng));
    for (int i = 0; i < 20; ++i) b.push_back(nd(rng) + 0.5);
    EXPECT_NEAR(rank_sum_normal_p(a, b), rank_sum_exact_p(a, b), 0.01);
}

TEST(Stats, SpearmanAgainstRankPearson) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    for (int rep = 0; rep < 30; ++rep) {
        std::vector<double> x, y;
        for (int i = 0; i < 12; ++i) {
            x.push_back(std::round(nd(rng) * 2));
            y.push_back(nd(rng));
        }
        x[0] = 50;
        const auto s = spearman(x, y);
        EXPECT_NEAR(s.rho, oracle::pearson(oracle::mid_ranks(x), oracle::mid_ranks(y)), 1e-12);
        EXPECT_GE(s.p_value, 0.0);
        EXPECT_LE(s.p_value, 1.0);
    }
    EXPECT_EQ(spearman({1, 2, 3, 4}, {2, 4, 6, 8}).rho, 1.0);
    EXPECT_EQ(spearman({1, 2, 3, 4}, {2, 4, 6, 8}).p_value, 0.0);
    EXPECT_THROW(spearman({1, 2}, {1, 2}), ValidationError);
    EXPECT_THROW(spearman({1, 1, 1}, {1, 2, 3}), ValidationError);
    EXPECT_THROW(spearman({1, 2, 3}, {1, 2}), ValidationError);
}

TEST(Stats, QuantileLinearInterpolation) {
    const std::vector<double> x{1, 2, 3, 4};
    EXPECT_DOUBLE_EQ(median(x), 2.5);
    EXPECT_DOUBLE_EQ(quantile(x, 0.25), 1.75);
    EXPECT_DOUBLE_EQ(quantile(x, 0.75), 3.25);
    EXPECT_DOUBLE_EQ(quantile({7}, 0.3), 7.0);
    EXPECT_THROW(quantile({}, 0.5), ValidationError);
}

TEST(Stats, Groupings) {
    EXPECT_EQ(gs_group(Gleason{3, 3}), GsGroup::LOW);
    EXPECT_EQ(gs_group(Gleason{3, 4}), GsGroup::INTERMEDIATE);
    EXPECT_EQ(gs_group(Gleason{4, 3}), GsGroup::HIGH);
    EXPECT_EQ(gs_group(Gleason{4, 5}), GsGroup::HIGH);
    EXPECT_EQ(gs_group(std::nullopt), GsGroup::UNKNOWN);
    EXPECT_EQ(size_group(0.99), SizeGroup::SMALL);
    EXPECT_EQ(size_group(1.0), SizeGroup::MEDIUM);
    EXPECT_EQ(size_group(2.0), SizeGroup::LARGE);
    EXPECT_EQ(zone_group(Zone::TZ), ZoneGroup::TZ);
    EXPECT_EQ(zone_group(Zone::UNLABELED), ZoneGroup::OTHER);
}

TEST(Stats, AllZeroDifferencesRejected) {
    EXPECT_THROW(rank_biserial({0, 0}), ValidationError);
}
