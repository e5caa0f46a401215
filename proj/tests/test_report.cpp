#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dilseg/error.hpp"
#include "dilseg/report.hpp"

namespace fs = std::filesystem;
using namespace dilseg;

namespace {

ModelEvaluations model(const std::string& name, double shift) {
    ModelEvaluations m;
    m.model = name;
    const Gleason grades[] = {{3, 3}, {3, 4}, {4, 3}, {4, 4}};
    const Zone zones[] = {Zone::PZ, Zone::TZ, Zone::AS};
    for (int i = 0; i < 12; ++i) {
        CaseEvaluation e;
        e.case_id = "c" + std::to_string(i);
        e.n_gt = 1;
        const double dsc = std::min(1.0, 0.3 + 0.05 * i + shift * (i % 3));
        LesionMatch lm;
        lm.gt_lesion_id = 1;
        lm.dsc = dsc;
        lm.status = dsc > 0.1 ? MatchStatus::TRUE_POSITIVE : MatchStatus::FALSE_NEGATIVE;
        e.matches.push_back(lm);
        e.tp = lm.status == MatchStatus::TRUE_POSITIVE;
        e.fn = 1 - e.tp;
        e.fp = i % 4 == 0;
        m.cases.push_back(e);
        m.lesions.push_back({e.case_id, 1, dsc, e.tp == 1, grades[i % 4], zones[i % 3], 0.4 + 0.2 * i});
    }
    return m;
}

std::string first_line(const fs::path& p) {
    std::ifstream in(p);
    std::string s;
    std::getline(in, s);
    return s;
}

}  // namespace

TEST(Report, SingleModelHasNoPairwiseSection) {
    const auto r = build_report({model("A", 0.0)});
    EXPECT_TRUE(r.pairwise.empty());
    ASSERT_EQ(r.models.size(), 1u);
    const auto& s = r.models[0];
    EXPECT_EQ(s.detection.positives, 12);
    EXPECT_EQ(s.detection.fp, 3);
    EXPECT_EQ(s.groups.front().axis, "ALL");
    EXPECT_EQ(s.groups.front().n, 12);
    EXPECT_FALSE(r.between_groups.empty());
    const auto dir = fs::temp_directory_path() / "dilseg_test_report1";
    fs::remove_all(dir);
    const auto files = write_report(r, dir, "h1");
    EXPECT_FALSE(fs::exists(dir / "pairwise.csv"));
    EXPECT_TRUE(fs::exists(files.summary_csv));
    EXPECT_EQ(first_line(files.summary_csv), "# dilseg 0.1.0 config_hash=h1");
    EXPECT_EQ(files.figures.size(), 3u);
}

TEST(Report, PairwiseComparisonsForEveryModelPair) {
    const auto r = build_report({model("A", 0.0), model("B", 0.05), model("C", 0.1)});
    std::set<std::pair<std::string, std::string>> pairs;
    for (const auto& p : r.pairwise) {
        pairs.insert({p.model_a, p.model_b});
        EXPECT_GE(p.result.p_value, 0.0);
        EXPECT_LE(p.result.p_value, 1.0);
        EXPECT_EQ(p.significant, p.result.p_value < kSignificanceLevel);
    }
    EXPECT_EQ(pairs.size(), 3u);
    const auto dir = fs::temp_directory_path() / "dilseg_test_report3";
    fs::remove_all(dir);
    write_report(r, dir, "h3");
    EXPECT_TRUE(fs::exists(dir / "pairwise.csv"));
}

TEST(Report, IdenticalModelsGiveFlaggedAllZeroComparison) {
    const auto r = build_report({model("A", 0.0), model("B", 0.0)});
    ASSERT_FALSE(r.pairwise.empty());
    EXPECT_TRUE(r.pairwise.front().all_zero);
    EXPECT_EQ(r.pairwise.front().result.p_value, 1.0);
}

TEST(Report, MismatchedLesionSetsRejected) {
    auto b = model("B", 0.0);
    b.lesions.pop_back();
    EXPECT_THROW(build_report({model("A", 0.0), b}), ValidationError);
}

TEST(Report, LesionOutcomesNeedVolumes) {
    CaseEvaluation e;
    e.case_id = "c";
    LesionMatch m;
    m.gt_lesion_id = 1;
    m.dsc = 0.5;
    m.status = MatchStatus::TRUE_POSITIVE;
    e.matches.push_back(m);
    CaseManifest c;
    c.case_id = "c";
    c.lesions.push_back({1, Gleason{3, 4}, Zone::PZ, std::nullopt});
    EXPECT_THROW(lesion_outcomes(e, c), ValidationError);
    c.lesions[0].volume_cc = 1.5;
    const auto out = lesion_outcomes(e, c);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_TRUE(out[0].detected);
    EXPECT_EQ(out[0].key().size, SizeGroup::MEDIUM);
}
