#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"

#include "dilseg/augment.hpp"
#include "dilseg/evaluation.hpp"
#include "dilseg/phantom.hpp"
#include "dilseg/preprocess.hpp"

namespace dilseg {

enum class Architecture { UNET, UNETPP, RESUNET, MRRN, MRRN_DS, FPSNET, FPSNET_SL };
enum class Ablation { NONE, DROP_FULLRES_STREAM, KEEP_ONLY_FULLRES_STREAM };
enum class Backbone { PRETRAINED, RANDOM };
enum class UnetppInference { LAST, MEAN };

const char* to_string(Architecture a);
const char* to_string(Ablation a);
const char* to_string(Backbone b);
const char* to_string(UnetppInference u);
Architecture architecture_from_string(const std::string& s);
Ablation ablation_from_string(const std::string& s);

bool is_mrrn(Architecture a);
bool is_fpsnet(Architecture a);

struct NetworkSpec {
    Architecture arch = Architecture::MRRN_DS;
    int in_channels = 5;
    int num_levels = 4;
    int base_width = 0;  // 0: architecture default (see default_base_width)
    int supervision_level = 1;
    Ablation ablation = Ablation::NONE;
    Backbone backbone = Backbone::RANDOM;
    std::optional<std::filesystem::path> backbone_weights;
    bool freeze_backbone = false;
    UnetppInference unetpp_inference = UnetppInference::LAST;
    int fpsnet_size = 256;
    float fpsnet_score_threshold = 0.5f;

    /// Spec with the architecture's default channel count (3 for FPSnet).
    static NetworkSpec defaults(Architecture a);
    int width() const;
    void validate() const;
    bool operator==(const NetworkSpec&) const = default;
};

/// Full-resolution channel width that puts each architecture near its
/// reference parameter count.
int default_base_width(Architecture a);

/// Returns the spec with the stream ablation applied; throws for non-MRRN.
NetworkSpec apply_ablation(NetworkSpec spec, Ablation ablation);

struct TrainConfig {
    double lr = 1e-4;
    int warm_epochs = 20;
    int decay_epochs = 100;
    int max_epochs = 120;
    int batch_size = 3;
    double mu = 0.75;
    int folds = 5;
    bool stratify_folds = false;
    int early_stop_patience = 20;
    AugmentConfig augment;
    bool augment_enabled = true;
    /// Background-only slices drawn per foreground slice each epoch.
    double background_slice_ratio = 1.0;
    double dice_epsilon = 1.0;
    /// Multiplies raw ADC before it enters the network (10^-6 -> 10^-3 mm^2/s).
    double input_scale = 1e-3;
    /// Stop once the epoch's mean training loss falls below this value.
    std::optional<double> stop_train_loss;
    double detection_loss_weight = 1.0;  // FPSnet: focal + box vs segmentation
    int threads = 1;
    std::string device = "cpu";
    std::uint64_t seed = 42;

    void validate() const;
};

/// Constant for `warm_epochs`, then linear decay reaching 0 at
/// warm_epochs + decay_epochs: lr * clamp(1 - (e - warm) / decay, 0, 1).
double learning_rate(const TrainConfig& c, int epoch);

/// Grid swept by the ablation command.
struct AblationGrid {
    std::vector<int> supervision_levels{1, 2, 3, 4};
    std::vector<double> mus{0.5, 0.75, 0.95};
    std::vector<Ablation> stream_ablations{Ablation::DROP_FULLRES_STREAM, Ablation::KEEP_ONLY_FULLRES_STREAM};
};

struct ExperimentConfig {
    std::string name = "experiment";
    PreprocessConfig preprocess;
    NetworkSpec network;
    TrainConfig train;
    EvaluationOptions evaluation;
    std::optional<PhantomConfig> phantom;
    int phantom_cases = 8;
    std::optional<std::filesystem::path> manifest;
    std::filesystem::path output_dir = "runs";
    AblationGrid ablation_grid;
    std::uint64_t seed = 42;

    /// Pushes the top-level seed into the train and phantom sections.
    void sync_seed();
    void validate() const;
};

using Json = nlohmann::json;

Json to_json(const PreprocessConfig& c);
Json to_json(const NetworkSpec& s);
Json to_json(const TrainConfig& c);
Json to_json(const AugmentConfig& c);
Json to_json(const EvaluationOptions& o);
Json to_json(const PhantomConfig& c);
Json to_json(const AblationGrid& g);
Json to_json(const ExperimentConfig& c);

/// Parsers start from defaults and overwrite the keys present. Unknown keys
/// are rejected so typos do not pass silently.
PreprocessConfig preprocess_config_from_json(const Json& j);
NetworkSpec network_spec_from_json(const Json& j);
TrainConfig train_config_from_json(const Json& j);
AugmentConfig augment_config_from_json(const Json& j);
EvaluationOptions evaluation_options_from_json(const Json& j);
PhantomConfig phantom_config_from_json(const Json& j);
AblationGrid ablation_grid_from_json(const Json& j);
ExperimentConfig experiment_config_from_json(const Json& j);

ExperimentConfig load_experiment_config(const std::filesystem::path& path);
void save_experiment_config(const ExperimentConfig& c, const std::filesystem::path& path);

/// FNV-1a of the sorted-key JSON serialisation, excluding the output
/// directory; identical for any key order in the source file.
std::string config_hash(const ExperimentConfig& c);
std::string network_spec_hash(const NetworkSpec& s);

}  // namespace dilseg
