#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dilseg/config.hpp"
#include "dilseg/manifest.hpp"
#include "dilseg/report.hpp"
#include "dilseg/training.hpp"

namespace dilseg {

/// Environment variable naming a shared preprocessed-volume cache.
inline constexpr const char* kCacheEnv = "DILSEG_CACHE_DIR";

/// Which model(s) a command trains or applies.
struct TrainSelection {
    enum class Mode { ALL_DATA, FOLD, CROSS_VALIDATION };
    Mode mode = Mode::CROSS_VALIDATION;
    int fold = 0;

    static TrainSelection all_data() { return {Mode::ALL_DATA, 0}; }
    static TrainSelection single_fold(int k) { return {Mode::FOLD, k}; }
    static TrainSelection cross_validation() { return {Mode::CROSS_VALIDATION, 0}; }
    /// "all", "fold<k>" or "cv".
    std::string tag() const;
};

/// <output_dir>/<config_hash> and its fixed sub-directories.
struct RunPaths {
    std::string hash;
    std::filesystem::path root;
    std::filesystem::path phantom;
    std::filesystem::path preprocessed;
    std::filesystem::path train;
    std::filesystem::path predictions;
    std::filesystem::path evaluation;
    std::filesystem::path report;
};
RunPaths run_paths(const ExperimentConfig& c);

/// Writes config.json (with hash and toolkit version) into the run root.
void stamp_run(const ExperimentConfig& c);

/// Generates the phantom dataset into <root>/phantom; returns its manifest.
std::vector<CaseManifest> cmd_phantom(const ExperimentConfig& c);

/// The configured dataset: the phantom (generated on demand) or the manifest.
std::vector<CaseManifest> load_dataset(const ExperimentConfig& c);

struct PreprocessedItem {
    CaseManifest manifest;
    CropSidecar sidecar;
    std::filesystem::path image;
    std::filesystem::path mask;
};

/// Resamples, cleans and crops every case into the preprocessed store
/// (<root>/preprocessed, or the cache directory when set). Cases whose sidecar
/// already carries the same preprocessing hash are reused.
std::vector<PreprocessedItem> cmd_preprocess(const ExperimentConfig& c, const std::vector<CaseManifest>& cases);

std::vector<TrainingCase> load_training_cases(const std::vector<PreprocessedItem>& items);

struct TrainOutcome {
    TrainSelection selection;
    std::optional<FoldAssignment> folds;
    std::vector<TrainResult> runs;  // one per trained model
};

/// Trains under <root>/train/<tag>; fold models go to train/fold<k>.
TrainOutcome cmd_train(const ExperimentConfig& c, const TrainSelection& sel);

/// The fold assignment used by every architecture for this dataset.
FoldAssignment dataset_folds(const ExperimentConfig& c, const std::vector<CaseManifest>& cases);

struct PredictionItem {
    std::string case_id;
    std::filesystem::path probability;
    std::filesystem::path mask;
};

/// Predicts each case with `checkpoint`, restores probabilities to the
/// original frame and writes <case>_prob.nii.gz and <case>_mask.nii.gz into
/// `out_dir`. Warns when the checkpoint was trained under another config hash.
std::vector<PredictionItem> cmd_predict(const ExperimentConfig& c, const std::filesystem::path& checkpoint,
                                        const std::vector<CaseManifest>& cases, const std::filesystem::path& out_dir);

/// Predicts the cases each model of `sel` is meant to score: the training
/// cases (ALL_DATA), the held-out fold (FOLD), or every case with its own
/// fold's model (CROSS_VALIDATION). Output in <root>/predictions/<tag>.
std::vector<PredictionItem> predict_selection(const ExperimentConfig& c, const TrainSelection& sel);

/// Scores predictions against the manifest; writes per-case JSON,
/// lesions.csv, summary.csv and evaluation.json into `out_dir`.
ModelEvaluations cmd_evaluate(const ExperimentConfig& c, const std::vector<CaseManifest>& cases,
                              const std::filesystem::path& predictions_dir, const std::filesystem::path& out_dir);

void save_model_evaluations(const ModelEvaluations& m, const std::filesystem::path& path, const std::string& hash);
ModelEvaluations load_model_evaluations(const std::filesystem::path& path);

/// Builds and writes the report for one or more evaluation.json files.
ReportFiles cmd_report(const std::vector<std::filesystem::path>& evaluation_files, const std::filesystem::path& out_dir,
                       const std::string& config_hash);

/// preprocess -> train -> predict -> evaluate -> report for one config.
struct PipelineResult {
    RunPaths paths;
    TrainOutcome training;
    ModelEvaluations evaluations;
    ReportFiles report;
};
PipelineResult run_pipeline(const ExperimentConfig& c, const TrainSelection& sel);

struct AblationRun {
    std::string label;
    std::string kind;  // SUPERVISION, MU, STREAM
    ExperimentConfig config;
    PipelineResult result;
    std::int64_t parameters = 0;
};

/// Variants swept by the grid, in table order.
std::vector<std::pair<std::string, ExperimentConfig>> ablation_variants(const ExperimentConfig& base);

/// Runs every variant through the pipeline and writes
/// <root>/ablation/ablation_table.csv.
std::vector<AblationRun> cmd_ablate(const ExperimentConfig& c, const TrainSelection& sel);

}  // namespace dilseg
