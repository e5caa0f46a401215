#include <gtest/gtest.h>

#include <random>
#include <set>

#include "dilseg/augment.hpp"
#include "dilseg/folds.hpp"

using namespace dilseg;

namespace {

std::pair<SliceStack, Plane> sample() {
    SliceStack s;
    s.channels = 3;
    s.height = 24;
    s.width = 32;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 24; ++y)
            for (int x = 0; x < 32; ++x) s.values.push_back(static_cast<float>(c * 100 + x + 2 * y));
    Plane l(32, 24);
    for (int y = 8; y < 16; ++y)
        for (int x = 10; x < 20; ++x) l.at(x, y) = 1.0f;
    return {s, l};
}

std::vector<CaseManifest> cohort(int n) {
    std::vector<CaseManifest> cases;
    for (int i = 0; i < n; ++i) {
        CaseManifest c;
        c.case_id = "case" + std::to_string(i);
        c.patient_id = "pat" + std::to_string(i / 2);  // two studies per patient
        c.lesions.push_back({1, Gleason{3, 3 + i % 3}, Zone::PZ, 1.0});
        cases.push_back(c);
    }
    return cases;
}

}  // namespace

TEST(Augment, IdentityLeavesSampleUnchanged) {
    auto [s, l] = sample();
    const auto s0 = s.values;
    const auto l0 = l.values;
    AugmentParams p;
    p.width = 32;
    p.height = 24;
    apply_augment(s, l, p);
    EXPECT_EQ(s.values, s0);
    EXPECT_EQ(l.values, l0);
}

TEST(Augment, DoubleFlipIsIdentityAndLabelsStayBinary) {
    auto [s, l] = sample();
    const auto s0 = s.values;
    AugmentParams p;
    p.width = 32;
    p.height = 24;
    p.flip = true;
    apply_augment(s, l, p);
    EXPECT_NE(s.values, s0);
    apply_augment(s, l, p);
    EXPECT_EQ(s.values, s0);

    AugmentConfig cfg;
    cfg.elastic_probability = 1.0;
    std::mt19937_64 rng(4);
    for (int i = 0; i < 10; ++i) {
        auto [a, b] = sample();
        augment_sample(a, b, cfg, rng);
        for (float v : b.values) ASSERT_TRUE(v == 0.0f || v == 1.0f);
    }
}

TEST(Augment, DrawsAreSeedDeterministicAndInRange) {
    AugmentConfig cfg;
    std::mt19937_64 a(9), b(9);
    for (int i = 0; i < 20; ++i) {
        const auto p = draw_augment_params(cfg, 32, 24, a);
        const auto q = draw_augment_params(cfg, 32, 24, b);
        EXPECT_EQ(p.flip, q.flip);
        EXPECT_EQ(p.scale, q.scale);
        EXPECT_EQ(p.angle_deg, q.angle_deg);
        EXPECT_EQ(p.dx, q.dx);
        EXPECT_GE(p.scale, 0.9);
        EXPECT_LE(p.scale, 1.1);
        EXPECT_LE(std::abs(p.angle_deg), 10.0);
    }
}

TEST(Folds, PatientDisjointBalancedAndDeterministic) {
    const auto cases = cohort(21);
    const auto f = make_folds(cases, 5, 17);
    const auto g = make_folds(cases, 5, 17);
    EXPECT_EQ(f.patient_fold, g.patient_fold);
    EXPECT_EQ(f.hash, g.hash);
    std::map<int, int> sizes;
    for (const auto& [p, k] : f.patient_fold) ++sizes[k];
    int lo = 100, hi = 0;
    for (const auto& [k, n] : sizes) {
        lo = std::min(lo, n);
        hi = std::max(hi, n);
    }
    EXPECT_LE(hi - lo, 1);
    for (int k = 0; k < 5; ++k) {
        std::set<std::string> train, val;
        for (const auto& c : f.training_cases(cases, k)) train.insert(c.patient_id);
        for (const auto& c : f.validation_cases(cases, k)) val.insert(c.patient_id);
        for (const auto& p : val) EXPECT_EQ(train.count(p), 0u);
        EXPECT_EQ(f.training_cases(cases, k).size() + f.validation_cases(cases, k).size(), cases.size());
    }
    EXPECT_NE(make_folds(cases, 5, 18).hash, f.hash);
}

TEST(Folds, ExplicitFoldsAreHonoured) {
    auto cases = cohort(6);
    EXPECT_FALSE(has_explicit_folds(cases));
    for (std::size_t i = 0; i < cases.size(); ++i) cases[i].fold = static_cast<int>(i / 2) % 3;
    ASSERT_TRUE(has_explicit_folds(cases));
    const auto f = folds_from_manifest(cases, 3);
    for (const auto& c : cases) EXPECT_EQ(f.fold_of(c), *c.fold);
}
