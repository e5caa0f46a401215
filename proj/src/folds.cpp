#include "dilseg/folds.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "dilseg/error.hpp"
#include "dilseg/hashing.hpp"
#include "dilseg/stats.hpp"

namespace dilseg {

namespace {

std::uint64_t assignment_hash(const FoldAssignment& f) {
    std::string s = "k=" + std::to_string(f.k) + ";";
    for (const auto& [p, k] : f.patient_fold) s += p + ":" + std::to_string(k) + ";";
    return fnv1a64(s);
}

void shuffle(std::vector<std::string>& xs, std::mt19937_64& rng) {
    for (std::size_t i = xs.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(xs[i - 1], xs[j]);
    }
}

}  // namespace

int FoldAssignment::fold_of(const CaseManifest& c) const {
    auto it = patient_fold.find(c.patient_id);
    if (it == patient_fold.end()) throw ValidationError("patient " + c.patient_id + " has no fold");
    return it->second;
}

std::vector<CaseManifest> FoldAssignment::validation_cases(const std::vector<CaseManifest>& cases, int fold) const {
    std::vector<CaseManifest> out;
    for (const auto& c : cases) {
        if (fold_of(c) == fold) out.push_back(c);
    }
    return out;
}

std::vector<CaseManifest> FoldAssignment::training_cases(const std::vector<CaseManifest>& cases, int fold) const {
    std::vector<CaseManifest> out;
    for (const auto& c : cases) {
        if (fold_of(c) != fold) out.push_back(c);
    }
    return out;
}

FoldAssignment make_folds(const std::vector<CaseManifest>& cases, int k, std::uint64_t seed, bool stratify) {
    if (k < 2) throw ValidationError("need at least 2 folds");
    std::map<std::string, int> stratum;  // patient -> highest GS group rank
    for (const auto& c : cases) {
        int s = stratum.count(c.patient_id) ? stratum[c.patient_id] : -1;
        for (const auto& l : c.lesions) {
            const GsGroup g = gs_group(l.gleason);
            const int rank = g == GsGroup::UNKNOWN ? 0 : static_cast<int>(g) + 1;
            s = std::max(s, rank);
        }
        stratum[c.patient_id] = std::max(s, 0);
    }
    if (static_cast<int>(stratum.size()) < k) {
        throw ValidationError("cannot make " + std::to_string(k) + " folds from " + std::to_string(stratum.size()) +
                              " patients");
    }
    std::mt19937_64 rng(seed);
    std::vector<std::vector<std::string>> strata;
    if (stratify) {
        std::map<int, std::vector<std::string>> by;
        for (const auto& [p, s] : stratum) by[s].push_back(p);
        for (auto& [s, ps] : by) strata.push_back(ps);
    } else {
        std::vector<std::string> all;
        for (const auto& [p, s] : stratum) all.push_back(p);
        strata.push_back(all);
    }
    FoldAssignment f;
    f.k = k;
    std::size_t dealt = 0;
    for (auto& ps : strata) {
        shuffle(ps, rng);
        for (const auto& p : ps) f.patient_fold[p] = static_cast<int>(dealt++ % static_cast<std::size_t>(k));
    }
    f.hash = assignment_hash(f);
    return f;
}

bool has_explicit_folds(const std::vector<CaseManifest>& cases) {
    return !cases.empty() && std::all_of(cases.begin(), cases.end(), [](const auto& c) { return c.fold.has_value(); });
}

FoldAssignment folds_from_manifest(const std::vector<CaseManifest>& cases, int k) {
    FoldAssignment f;
    f.k = k;
    for (const auto& c : cases) {
        if (!c.fold) throw ValidationError(c.case_id + ": no fold in manifest");
        if (*c.fold < 0 || *c.fold >= k) throw ValidationError(c.case_id + ": fold out of range");
        auto [it, inserted] = f.patient_fold.emplace(c.patient_id, *c.fold);
        if (!inserted && it->second != *c.fold) {
            throw ValidationError("patient " + c.patient_id + " spans several folds");
        }
    }
    f.hash = assignment_hash(f);
    return f;
}

}  // namespace dilseg
