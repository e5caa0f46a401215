#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dilseg/manifest.hpp"

namespace dilseg {

enum class GsGroup { LOW, INTERMEDIATE, HIGH, UNKNOWN };
enum class SizeGroup { SMALL, MEDIUM, LARGE };
enum class ZoneGroup { PZ, TZ, AS, OTHER };
enum class TestKind { SIGNED_RANK, RANK_SUM, SPEARMAN };

const char* to_string(GsGroup g);
const char* to_string(SizeGroup g);
const char* to_string(ZoneGroup g);
const char* to_string(TestKind t);

GsGroup gs_group(const std::optional<Gleason>& gs);
/// SMALL < 1 cc <= MEDIUM < 2 cc <= LARGE.
SizeGroup size_group(double volume_cc);
ZoneGroup zone_group(Zone z);

struct GroupKey {
    GsGroup gs = GsGroup::UNKNOWN;
    SizeGroup size = SizeGroup::SMALL;
    ZoneGroup zone = ZoneGroup::OTHER;
    auto operator<=>(const GroupKey&) const = default;
};

struct StatResult {
    double p_value = 1.0;
    double effect_size = 0.0;
    int n = 0;
    TestKind test = TestKind::SIGNED_RANK;
    bool exact = false;
};

/// Average ranks (1-based) of `xs`, ties sharing the mean rank.
std::vector<double> average_ranks(const std::vector<double>& xs);

/// Paired two-sided test. Zeros are dropped; exact for n <= 25 nonzero
/// differences, tie-corrected normal approximation above.
StatResult wilcoxon_signed_rank(const std::vector<double>& differences);
double signed_rank_exact_p(const std::vector<double>& differences);
double signed_rank_normal_p(const std::vector<double>& differences);
double rank_biserial(const std::vector<double>& differences);

/// Unpaired two-sided test; exact (conditional on ties) when the pooled
/// sample has at most `kRankSumExactMax` values.
inline constexpr int kRankSumExactMax = 50;
StatResult wilcoxon_rank_sum(const std::vector<double>& a, const std::vector<double>& b);
double rank_sum_exact_p(const std::vector<double>& a, const std::vector<double>& b);
double rank_sum_normal_p(const std::vector<double>& a, const std::vector<double>& b);

struct SpearmanResult {
    double rho = 0.0;
    double p_value = 1.0;
    int n = 0;
};
SpearmanResult spearman(const std::vector<double>& xs, const std::vector<double>& ys);

/// Linear-interpolation quantile (numpy's default), q in [0,1].
double quantile(std::vector<double> xs, double q);
double median(const std::vector<double>& xs);

/// One scored GT lesion for one model.
struct LesionOutcome {
    std::string case_id;
    int lesion_id = 0;
    double dsc = 0.0;
    bool detected = false;
    std::optional<Gleason> gleason;
    Zone zone = Zone::UNLABELED;
    double volume_cc = 0.0;

    GroupKey key() const;
};

struct LesionGroups {
    std::map<GsGroup, std::vector<LesionOutcome>> by_gs;
    std::map<SizeGroup, std::vector<LesionOutcome>> by_size;
    std::map<ZoneGroup, std::vector<LesionOutcome>> by_zone;
};
LesionGroups group_lesions(const std::vector<LesionOutcome>& lesions);

}  // namespace dilseg
