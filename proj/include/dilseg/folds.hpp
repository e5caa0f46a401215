#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dilseg/manifest.hpp"

namespace dilseg {

/// Patient-level k-fold partition.
struct FoldAssignment {
    int k = 0;
    std::map<std::string, int> patient_fold;
    std::uint64_t hash = 0;

    int fold_of(const CaseManifest& c) const;
    /// Cases whose patient is (validation) or is not (training) in `fold`.
    std::vector<CaseManifest> validation_cases(const std::vector<CaseManifest>& cases, int fold) const;
    std::vector<CaseManifest> training_cases(const std::vector<CaseManifest>& cases, int fold) const;
};

/// Shuffles patients with the seed and deals them round-robin, so fold sizes
/// differ by at most one patient. With `stratify`, patients are dealt stratum
/// by stratum (highest Gleason group among their lesions) to balance grades.
FoldAssignment make_folds(const std::vector<CaseManifest>& cases, int k, std::uint64_t seed, bool stratify = false);

/// Uses the manifest's explicit `fold` fields when every case has one.
bool has_explicit_folds(const std::vector<CaseManifest>& cases);
FoldAssignment folds_from_manifest(const std::vector<CaseManifest>& cases, int k);

}  // namespace dilseg
