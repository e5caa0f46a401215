#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dilseg/evaluation.hpp"
#include "dilseg/manifest.hpp"
#include "dilseg/stats.hpp"

namespace dilseg {

/// Joins a case's matches with its manifest metadata. Every scored lesion
/// must carry volume_cc.
std::vector<LesionOutcome> lesion_outcomes(const CaseEvaluation& e, const CaseManifest& c);

struct ModelEvaluations {
    std::string model;
    std::vector<CaseEvaluation> cases;
    std::vector<LesionOutcome> lesions;
};

struct GroupSummary {
    std::string axis;   // ALL, GLEASON, SIZE, ZONE
    std::string group;  // e.g. LOW, SMALL, PZ; ALL for the pooled row
    int n = 0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
};

struct ModelSummary {
    std::string model;
    DetectionMetrics detection;
    std::optional<double> fp_per_lesion;
    std::optional<int> out_of_gland_fp;
    std::vector<GroupSummary> groups;
    std::optional<SpearmanResult> dsc_vs_volume;
};

struct PairwiseComparison {
    std::string model_a;
    std::string model_b;
    std::string axis;
    std::string group;
    StatResult result;
    bool all_zero = false;
    bool significant = false;
};

struct BetweenGroupComparison {
    std::string model;
    std::string axis;
    std::string group_a;
    std::string group_b;
    StatResult result;
    bool significant = false;
};

struct EvaluationReport {
    std::vector<ModelSummary> models;
    std::vector<PairwiseComparison> pairwise;  // empty for a single model
    std::vector<BetweenGroupComparison> between_groups;
    /// False positives are counted over every evaluated case, including those
    /// whose scored lesions were filtered out.
    bool fp_counted_over_all_cases = true;
};

inline constexpr double kSignificanceLevel = 0.05;

/// Per-model median DSC with IQR per group, pairwise signed-rank tests on
/// shared lesions for every model pair, and per-model rank-sum tests between
/// groups. Throws ValidationError when paired models were scored on
/// different lesion sets.
EvaluationReport build_report(const std::vector<ModelEvaluations>& models);

struct ReportFiles {
    std::filesystem::path json;
    std::filesystem::path summary_csv;
    std::filesystem::path groups_csv;
    std::filesystem::path pairwise_csv;
    std::filesystem::path between_groups_csv;
    std::vector<std::filesystem::path> figures;
};

/// Writes report.json, summary.csv, groups.csv, pairwise.csv (when there
/// are pairs), between_groups.csv and one SVG bar chart per grouping axis.
ReportFiles write_report(const EvaluationReport& r, const std::filesystem::path& dir, const std::string& config_hash);

/// Dataset-level table with one row per model (Table-2 columns).
void write_detection_csv(const std::vector<ModelSummary>& models, const std::filesystem::path& path,
                         const std::string& config_hash);
void write_lesion_csv(const std::vector<LesionOutcome>& lesions, const std::filesystem::path& path,
                      const std::string& config_hash);

/// Fixed-precision formatting used by every CSV writer.
std::string fmt_real(double v);

}  // namespace dilseg
