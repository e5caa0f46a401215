#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "dilseg/config.hpp"
#include "dilseg/error.hpp"

namespace fs = std::filesystem;
using namespace dilseg;

TEST(Config, HashStableUnderKeyReordering) {
    ExperimentConfig c;
    c.phantom = PhantomConfig{};
    const Json j = to_json(c);
    // Rebuild the object with keys inserted in reverse order.
    Json reversed = Json::object();
    std::vector<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
    for (auto it = keys.rbegin(); it != keys.rend(); ++it) reversed[*it] = j[*it];
    const auto dir = fs::temp_directory_path() / "dilseg_test_cfg";
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "a.json");
        out << j.dump(1);
    }
    {
        std::ofstream out(dir / "b.json");
        out << reversed.dump(4);
    }
    EXPECT_EQ(config_hash(load_experiment_config(dir / "a.json")), config_hash(load_experiment_config(dir / "b.json")));
    EXPECT_EQ(config_hash(load_experiment_config(dir / "a.json")), config_hash(c));
}

TEST(Config, HashIgnoresOutputDirButNotTrainingSettings) {
    ExperimentConfig a, b;
    b.output_dir = "elsewhere";
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.train.mu = 0.5;
    EXPECT_NE(config_hash(a), config_hash(b));
    ExperimentConfig s = a;
    s.seed = 7;
    s.sync_seed();
    EXPECT_NE(config_hash(a), config_hash(s));
}

TEST(Config, JsonRoundTrip) {
    ExperimentConfig c;
    c.name = "rt";
    c.phantom = PhantomConfig{};
    c.network = NetworkSpec::defaults(Architecture::UNETPP);
    c.train.stop_train_loss = 0.2;
    c.train.augment.rotate = false;
    c.evaluation.rule = MatchingRule::OneToOne;
    const auto back = experiment_config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Config, UnknownKeysAndInconsistentChannelsRejected) {
    Json j = to_json(ExperimentConfig{});
    j["train"]["learning_rate"] = 0.1;
    EXPECT_THROW(experiment_config_from_json(j), ValidationError);
    ExperimentConfig c;
    c.preprocess.slice_context = 1;  // 3 channels, network expects 5
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Config, ScheduleIsLinearDecayAfterWarmPhase) {
    TrainConfig t;
    EXPECT_EQ(learning_rate(t, 0), 1e-4);
    EXPECT_EQ(learning_rate(t, 20), 1e-4);
    EXPECT_NEAR(learning_rate(t, 21), 1e-4 * 0.99, 1e-18);
    EXPECT_EQ(learning_rate(t, 120), 0.0);
    EXPECT_EQ(learning_rate(t, 500), 0.0);
}

TEST(Config, AblationOnlyForMrrn) {
    auto s = NetworkSpec::defaults(Architecture::MRRN);
    EXPECT_EQ(apply_ablation(s, Ablation::DROP_FULLRES_STREAM).ablation, Ablation::DROP_FULLRES_STREAM);
    EXPECT_THROW(apply_ablation(NetworkSpec::defaults(Architecture::UNET), Ablation::DROP_FULLRES_STREAM),
                 ValidationError);
    EXPECT_EQ(architecture_from_string("MRRN_DS"), Architecture::MRRN_DS);
    EXPECT_THROW(architecture_from_string("VNET"), ValidationError);
}
