#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "dilseg/config.hpp"
#include "dilseg/folds.hpp"
#include "dilseg/losses.hpp"
#include "dilseg/networks.hpp"

namespace dilseg {

/// One preprocessed (resampled, cropped) case ready for slicing.
struct TrainingCase {
    std::string case_id;
    std::string patient_id;
    ScalarVolume image;
    LabelVolume mask;  // lesion ids; any non-zero voxel is foreground
};

struct SliceRef {
    std::size_t case_index = 0;
    std::int64_t z = 0;
};

struct Batch {
    torch::Tensor image;        // (B, C, H, W)
    torch::Tensor target;       // (B, 1, H, W)
    torch::Tensor target_full;  // (B, 1, S, S), FPSnet only
};

/// 2D slice view over a set of cases for one network spec.
class SliceDataset {
public:
    SliceDataset(const std::vector<TrainingCase>& cases, const NetworkSpec& spec, double input_scale);

    const std::vector<SliceRef>& foreground() const { return fg_; }
    const std::vector<SliceRef>& background() const { return bg_; }

    /// Every foreground slice plus round(ratio x #fg) background slices drawn
    /// without replacement, shuffled; all slices when none has foreground.
    std::vector<SliceRef> epoch_samples(double background_ratio, std::uint64_t seed, int epoch) const;

    /// Stacks the samples; each is augmented with its own RNG stream derived
    /// from (seed, epoch, case, slice) when `augment` is given.
    Batch make_batch(const std::vector<SliceRef>& samples, const AugmentConfig* augment, std::uint64_t seed,
                     int epoch) const;

private:
    const std::vector<TrainingCase>& cases_;
    NetworkSpec spec_;
    double input_scale_;
    int context_;
    std::vector<SliceRef> fg_;
    std::vector<SliceRef> bg_;
};

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_dice_loss = 0.0;
    std::optional<double> val_dice;
};

struct TrainResult {
    std::filesystem::path checkpoint;
    std::filesystem::path log_csv;
    int best_epoch = -1;
    double best_score = 0.0;  // validation Dice, or training loss without validation
    bool early_stopped = false;
    bool reached_target_loss = false;
    std::vector<EpochLog> log;
};

/// Called after every epoch; return false to stop.
using EpochCallback = std::function<bool(const EpochLog&)>;

/// Adam with the configured schedule. Keeps the checkpoint with the best
/// validation Dice (lowest training loss when `val` is empty) and stops after
/// `early_stop_patience` epochs without improvement. A non-finite loss throws
/// TrainingError. Writes out_dir/best.pt and out_dir/log.csv.
TrainResult train_model(const NetworkSpec& spec, const TrainConfig& config, const std::vector<TrainingCase>& train,
                        const std::vector<TrainingCase>& val, const std::filesystem::path& out_dir,
                        const Json& checkpoint_meta = Json::object(), const EpochCallback& on_epoch = {});

/// Mean over slices containing ground-truth foreground of the hard Dice
/// (prediction >= 0.5); over all slices, empty-vs-empty scoring 1, when no
/// slice has foreground.
double validation_dice(SegNet& net, const std::vector<TrainingCase>& cases, double input_scale,
                       const std::string& device = "cpu");

/// Per-voxel foreground probability over the case's (cropped) grid.
LabelVolume predict_volume(SegNet& net, const ScalarVolume& image, double input_scale,
                           const std::string& device = "cpu", int batch = 8);

struct CrossValidationResult {
    FoldAssignment folds;
    std::vector<TrainResult> runs;  // one per fold
};

/// Trains one model per fold with the patient-level assignment `folds`.
CrossValidationResult cross_validate(const NetworkSpec& spec, const TrainConfig& config,
                                     const std::vector<TrainingCase>& cases, const FoldAssignment& folds,
                                     const std::filesystem::path& out_dir, const Json& checkpoint_meta = Json::object());

void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path,
                        const std::string& config_hash = {});

}  // namespace dilseg
