#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "dilseg/error.hpp"
#include "dilseg/evaluation.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace dilseg;

TEST(Evaluation, AgreesWithBruteForceOracle) {
    std::mt19937_64 rng(123);
    for (int t = 0; t < 60; ++t) {
        auto [gt, pred] = fixture::random_pair(rng);
        const auto ref = oracle::score(oracle::to_grid(gt), oracle::to_grid(pred), 3.0 / 1000.0);
        const auto e = evaluate_case("x", gt, pred);
        EXPECT_EQ(e.tp, ref.tp);
        EXPECT_EQ(e.fp, ref.fp);
        EXPECT_EQ(e.n_gt, ref.positives);
        EXPECT_EQ(e.ignored, static_cast<int>(ref.ignored_components.size()));
        for (const auto& [id, d] : e.lesion_dsc()) EXPECT_NEAR(d, ref.gt_dsc.at(id), 1e-12);
    }
}

TEST(Evaluation, ProbabilityMapsAreBinarizedAtThreshold) {
    Geometry g;
    g.shape = {4, 1, 1};
    LabelVolume p(g);
    p[0] = 0.49f;
    p[1] = 0.5f;
    p[2] = 0.51f;
    const auto b = binarize(p);
    EXPECT_EQ(b[0], 0.0f);
    EXPECT_EQ(b[1], 1.0f);
    EXPECT_EQ(b[2], 1.0f);
}

namespace {

// Two GT lesions side by side, one prediction covering both.
std::pair<LabelVolume, LabelVolume> bridged() {
    Geometry g;
    g.shape = {20, 6, 2};
    g.spacing = {2.0, 2.0, 3.0};
    LabelVolume gt(g), pred(g);
    for (int x = 0; x < 6; ++x)
        for (int y = 0; y < 4; ++y) {
            gt.at(x, y, 0) = 1;
            gt.at(x + 8, y, 0) = 2;
        }
    for (int x = 0; x < 14; ++x)
        for (int y = 0; y < 4; ++y) pred.at(x, y, 0) = 1;
    return {gt, pred};
}

}  // namespace

TEST(Evaluation, ManyToOneLetsOneComponentValidateSeveralLesions) {
    auto [gt, pred] = bridged();
    const auto e = evaluate_case("m", gt, pred);
    EXPECT_EQ(e.tp, 2);
    EXPECT_EQ(e.fp, 0);
    EvaluationOptions one;
    one.rule = MatchingRule::OneToOne;
    const auto o = evaluate_case("o", gt, pred, nullptr, one);
    EXPECT_EQ(o.tp, 1);
    EXPECT_EQ(o.fn, 1);
    EXPECT_EQ(o.fp, 0);
}

TEST(Evaluation, GtIdFilterScoresOnlySelectedLesions) {
    auto [gt, pred] = bridged();
    EvaluationOptions opts;
    opts.gt_ids = std::set<int>{2};
    const auto e = evaluate_case("f", gt, pred, nullptr, opts);
    EXPECT_EQ(e.n_gt, 1);
    EXPECT_EQ(e.matches.front().gt_lesion_id, 2);
}

TEST(Evaluation, StrictVolumeOptionKeepsBoundaryComponent) {
    Geometry g;
    g.shape = {12, 12, 3};
    LabelVolume empty(g), small(g);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) small.at(x, y, 1) = 1;
    EXPECT_EQ(evaluate_case("a", empty, small).ignored, 1);
    EvaluationOptions strict;
    strict.ignore_at_min_volume = false;
    EXPECT_EQ(evaluate_case("b", empty, small, nullptr, strict).fp, 1);
}

TEST(Evaluation, DscEdgeCasesAndErrors) {
    Geometry g;
    g.shape = {3, 3, 1};
    LabelVolume a(g), b(g);
    EXPECT_EQ(lesion_dsc(a, b), 1.0);
    a[0] = 1;
    EXPECT_EQ(lesion_dsc(a, b), 0.0);
    Geometry h = g;
    h.shape = {3, 4, 1};
    EXPECT_THROW(lesion_dsc(a, LabelVolume(h)), ShapeError);
    EXPECT_THROW(false_positives_per_lesion(std::vector<CaseEvaluation>{}), ValidationError);
    EXPECT_DOUBLE_EQ(false_positives_per_lesion(3, 4), 0.75);
}

TEST(Evaluation, UndefinedMetricsAreFlagged) {
    const auto m = detection_metrics(0, 0, 0);
    EXPECT_FALSE(m.recall_defined);
    EXPECT_FALSE(m.precision_defined);
    EXPECT_FALSE(m.f1_defined);
    const auto k = detection_metrics(3, 1, 4);
    EXPECT_DOUBLE_EQ(k.recall, 0.75);
    EXPECT_DOUBLE_EQ(k.precision, 0.75);
    EXPECT_DOUBLE_EQ(k.f1, 0.75);
}

TEST(Evaluation, OutOfGlandFalsePositives) {
    Geometry g;
    g.shape = {20, 20, 2};
    g.spacing = {2.0, 2.0, 3.0};
    LabelVolume gt(g), pred(g), gland(g);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) gland.at(x, y, 0) = gland.at(x, y, 1) = 1;
    for (int y = 14; y < 18; ++y)
        for (int x = 14; x < 18; ++x) pred.at(x, y, 0) = 1;
    for (int y = 2; y < 6; ++y)
        for (int x = 2; x < 6; ++x) pred.at(x, y, 1) = 1;
    const auto e = evaluate_case("g", gt, pred, &gland);
    EXPECT_EQ(e.fp, 2);
    ASSERT_TRUE(e.out_of_gland_fp_count.has_value());
    EXPECT_EQ(*e.out_of_gland_fp_count, 1);
}

TEST(Evaluation, JsonRoundTrip) {
    std::mt19937_64 rng(5);
    auto [gt, pred] = fixture::random_pair(rng);
    const auto e = evaluate_case("case7", gt, pred);
    const auto path = fs::temp_directory_path() / "dilseg_test_eval.json";
    write_case_evaluation_json(e, path, "hash");
    const auto r = read_case_evaluation_json(path);
    EXPECT_EQ(r.case_id, e.case_id);
    EXPECT_EQ(r.tp, e.tp);
    EXPECT_EQ(r.fp, e.fp);
    ASSERT_EQ(r.matches.size(), e.matches.size());
    for (std::size_t i = 0; i < r.matches.size(); ++i) {
        EXPECT_EQ(r.matches[i].dsc, e.matches[i].dsc);
        EXPECT_EQ(r.matches[i].status, e.matches[i].status);
    }
}
