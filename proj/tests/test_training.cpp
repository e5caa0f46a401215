#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dilseg/error.hpp"
#include "dilseg/experiment.hpp"
#include "dilseg/volume_io.hpp"

namespace fs = std::filesystem;
using namespace dilseg;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig tiny(const std::string& name) {
    ExperimentConfig c;
    c.name = "tiny";
    PhantomConfig p;
    p.shape = {48, 48, 8};
    p.spacing = {0.625, 0.625, 3.0};
    p.gland_semi_axes_mm = {11.0, 10.0, 9.0};
    p.gland_center_jitter_mm = 0.5;
    p.max_lesions = 1;
    p.median_lesion_cc = 0.4;
    p.max_lesion_cc = 0.6;
    c.phantom = p;
    c.phantom_cases = 3;
    c.preprocess.crop_size = {32, 32};
    c.network.base_width = 8;
    c.train.max_epochs = 1;
    c.train.folds = 3;
    c.train.augment_enabled = false;
    c.output_dir = fs::temp_directory_path() / ("dilseg_test_" + name);
    fs::remove_all(c.output_dir);
    c.sync_seed();
    return c;
}

}  // namespace

TEST(Pipeline, EndToEndOnPhantomProducesReport) {
    const auto c = tiny("pipeline");
    const auto r = run_pipeline(c, TrainSelection::cross_validation());
    EXPECT_EQ(r.training.runs.size(), 3u);
    EXPECT_EQ(r.evaluations.cases.size(), 3u);
    EXPECT_FALSE(r.evaluations.lesions.empty());
    EXPECT_TRUE(fs::exists(r.report.summary_csv));
    EXPECT_GT(fs::file_size(r.report.summary_csv), 0u);
    EXPECT_TRUE(fs::exists(r.paths.root / "config.json"));
    // Predictions live in the original frame.
    const auto cases = load_dataset(c);
    for (const auto& m : cases) {
        const auto pred = load_probability_volume(r.paths.predictions / "cv" / (m.case_id + "_prob.nii.gz"));
        EXPECT_EQ(pred.geometry(), load_scalar_volume(m.image_path).geometry());
    }
    // Every model saw only other patients.
    for (int k = 0; k < 3; ++k) {
        const auto log = r.paths.train / ("fold" + std::to_string(k)) / "log.csv";
        ASSERT_TRUE(fs::exists(log));
        EXPECT_NE(slurp(log).find("config_hash=" + r.paths.hash), std::string::npos);
    }
}

TEST(Pipeline, CommandsAreIdempotent) {
    auto c = tiny("idem");
    const auto a = run_pipeline(c, TrainSelection::all_data());
    const std::string first = slurp(a.report.summary_csv);
    const std::string lesions = slurp(a.paths.evaluation / "all" / "lesions.csv");
    const auto b = run_pipeline(c, TrainSelection::all_data());
    EXPECT_EQ(slurp(b.report.summary_csv), first);
    EXPECT_EQ(slurp(b.paths.evaluation / "all" / "lesions.csv"), lesions);
    EXPECT_EQ(a.training.runs[0].log[0].train_loss, b.training.runs[0].log[0].train_loss);
}

TEST(Pipeline, SinglePointMuGridEqualsPlainTraining) {
    auto c = tiny("ablate1");
    c.network.arch = Architecture::MRRN_DS;
    c.ablation_grid.supervision_levels.clear();
    c.ablation_grid.stream_ablations.clear();
    c.ablation_grid.mus = {c.train.mu};
    const auto plain = run_pipeline(c, TrainSelection::all_data());
    const std::string summary = slurp(plain.report.summary_csv);
    const double loss = plain.training.runs[0].log[0].train_loss;
    const auto runs = cmd_ablate(c, TrainSelection::all_data());
    ASSERT_EQ(runs.size(), 1u);
    EXPECT_EQ(runs[0].result.paths.hash, plain.paths.hash);
    EXPECT_EQ(runs[0].result.training.runs[0].log[0].train_loss, loss);
    EXPECT_EQ(slurp(runs[0].result.report.summary_csv), summary);
    EXPECT_TRUE(fs::exists(plain.paths.root / "ablation" / "ablation_table.csv"));
}

TEST(Pipeline, PreprocessCacheIsReusedAcrossRuns) {
    auto c = tiny("cache");
    const auto cache = fs::temp_directory_path() / "dilseg_test_cache_store";
    fs::remove_all(cache);
    setenv(kCacheEnv, cache.c_str(), 1);
    const auto cases = load_dataset(c);
    const auto first = cmd_preprocess(c, cases);
    const auto stamp = fs::last_write_time(first[0].image);
    const auto second = cmd_preprocess(c, cases);
    unsetenv(kCacheEnv);
    EXPECT_EQ(first[0].image, second[0].image);
    EXPECT_EQ(fs::last_write_time(second[0].image), stamp);
    EXPECT_EQ(first[0].image.parent_path().parent_path(), cache);
    c.preprocess.crop_size = {16, 16};
    setenv(kCacheEnv, cache.c_str(), 1);
    const auto third = cmd_preprocess(c, cases);
    unsetenv(kCacheEnv);
    EXPECT_NE(third[0].image, first[0].image);
}

TEST(Pipeline, MissingUpstreamArtifactsAreErrors) {
    auto c = tiny("missing");
    const auto cases = load_dataset(c);
    EXPECT_THROW(cmd_predict(c, c.output_dir / "nope.pt", cases, c.output_dir / "p"), Error);
    EXPECT_THROW(cmd_evaluate(c, cases, c.output_dir / "nowhere", c.output_dir / "e"), IoError);
}

TEST(Training, NonFiniteLossIsReported) {
    auto c = tiny("diverge");
    auto items = cmd_preprocess(c, load_dataset(c));
    auto data = load_training_cases(items);
    for (auto& v : data[0].image.data()) v = std::numeric_limits<float>::quiet_NaN();
    EXPECT_THROW(train_model(c.network, c.train, data, {}, c.output_dir / "t"), TrainingError);
}
