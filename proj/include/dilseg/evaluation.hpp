#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dilseg/components.hpp"
#include "dilseg/volume.hpp"

namespace dilseg {

enum class MatchStatus { TRUE_POSITIVE, FALSE_NEGATIVE, FALSE_POSITIVE, IGNORED_SMALL };
const char* to_string(MatchStatus s);

/// How prediction components are paired with ground-truth lesions.
enum class MatchingRule {
    /// Each GT lesion takes its best-overlap component; one component may
    /// validate several GT lesions.
    ManyToOne,
    /// Greedy by descending DSC, each component used at most once.
    OneToOne,
};

struct EvaluationOptions {
    double dsc_threshold = 0.1;   // true detection requires DSC strictly above
    double min_volume_cc = 0.1;   // smaller predicted components are ignored
    /// Components of exactly `min_volume_cc` are ignored too (only larger
    /// volumes count). Set false for the strict "under" reading.
    bool ignore_at_min_volume = true;
    MatchingRule rule = MatchingRule::ManyToOne;
    Connectivity connectivity = Connectivity::Corner;
    float binarize_threshold = 0.5f;  // probability >= threshold is foreground
    /// When set, only these GT lesion ids are scored; other labelled voxels
    /// are treated as background.
    std::optional<std::set<int>> gt_ids;
};

struct PredictedLesion {
    int id = 0;
    std::vector<std::size_t> voxels;
    double volume_cc = 0.0;
    bool ignored = false;
};

struct GtLesion {
    int id = 0;
    std::vector<std::size_t> voxels;
};

struct LesionMatch {
    std::optional<int> gt_lesion_id;
    std::optional<int> pred_component_id;
    double dsc = 0.0;
    MatchStatus status = MatchStatus::FALSE_NEGATIVE;
};

struct CaseEvaluation {
    std::string case_id;
    std::vector<LesionMatch> matches;
    int n_gt = 0;
    int tp = 0;
    int fn = 0;
    int fp = 0;
    int ignored = 0;
    std::optional<int> out_of_gland_fp_count;

    /// Per-GT-lesion DSC (best-matching component), in GT id order.
    std::vector<std::pair<int, double>> lesion_dsc() const;
};

struct DetectionMetrics {
    int tp = 0;
    int fp = 0;
    int positives = 0;
    double recall = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
    bool recall_defined = true;
    bool precision_defined = true;
    bool f1_defined = true;
};

/// probability >= threshold -> 1, else 0.
LabelVolume binarize(const LabelVolume& prob, float threshold = 0.5f);

/// Connected components of the non-zero voxels with their volumes; those
/// below the volume threshold are flagged ignored.
std::vector<PredictedLesion> extract_lesions(const LabelVolume& binary_mask, const EvaluationOptions& opts = {});

std::vector<GtLesion> gt_lesions(const LabelVolume& gt_mask, const std::optional<std::set<int>>& ids = std::nullopt);

/// 2|A n B| / (|A| + |B|) over sorted voxel index lists; 1 when both empty.
double lesion_dsc(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);
/// Same, over two masks on one grid (non-zero = inside).
double lesion_dsc(const LabelVolume& a, const LabelVolume& b);

std::vector<LesionMatch> match_lesions(const std::vector<GtLesion>& gt, const std::vector<PredictedLesion>& preds,
                                       std::size_t grid_size, const EvaluationOptions& opts = {});

double f1_score(double precision, double recall);
DetectionMetrics detection_metrics(int tp, int fp, int positives);
DetectionMetrics detection_metrics(const std::vector<CaseEvaluation>& cases);

/// FP count / GT lesion count; throws when there are no GT lesions.
double false_positives_per_lesion(const std::vector<CaseEvaluation>& cases);
double false_positives_per_lesion(int fp, int n_lesions);

/// False-positive components whose centroid voxel lies outside the gland.
int out_of_gland_detections(const std::vector<PredictedLesion>& preds, const std::vector<LesionMatch>& matches,
                            const LabelVolume& prostate);

/// Full per-case scoring. `prediction` may be binary or a probability map.
CaseEvaluation evaluate_case(const std::string& case_id, const LabelVolume& gt_mask, const LabelVolume& prediction,
                             const LabelVolume* prostate = nullptr, const EvaluationOptions& opts = {});

void write_case_evaluation_json(const CaseEvaluation& e, const std::filesystem::path& path,
                                const std::string& config_hash = {});
CaseEvaluation read_case_evaluation_json(const std::filesystem::path& path);

}  // namespace dilseg
