#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dilseg/volume.hpp"

namespace dilseg {

enum class Zone { PZ, TZ, AS, OTHER, UNLABELED };
enum class Split { TRAIN, VAL, TEST };

const char* to_string(Zone zone);
const char* to_string(Split split);
Zone zone_from_string(const std::string& s);
Split split_from_string(const std::string& s);

/// Gleason pattern pair, e.g. 3+4.
struct Gleason {
    int primary = 0;
    int secondary = 0;

    int sum() const { return primary + secondary; }
    std::string to_string() const;
    /// Parses "3+4"; throws ValidationError on anything else.
    static Gleason parse(const std::string& text);
    bool operator==(const Gleason&) const = default;
};

struct LesionRecord {
    int lesion_id = 0;
    std::optional<Gleason> gleason;
    Zone zone = Zone::UNLABELED;
    std::optional<double> volume_cc;

    bool operator==(const LesionRecord&) const = default;
};

struct CaseManifest {
    std::string case_id;
    std::string patient_id;  // defaults to case_id; folds are formed over patients
    std::filesystem::path image_path;
    std::filesystem::path mask_path;
    std::optional<std::filesystem::path> prostate_mask_path;
    std::vector<LesionRecord> lesions;
    std::optional<int> fold;
    Split split = Split::TRAIN;

    const LesionRecord* find_lesion(int id) const;
};

struct ManifestIssue {
    std::string case_id;
    std::string message;
};

/// voxel count x voxel volume / 1000. Throws if the id is absent.
double lesion_volume_cc(const LabelVolume& mask, int lesion_id);

/// Checks record-level invariants (Gleason ranges, ids, fold range) and,
/// when `check_masks` is set, loads each mask and checks that the lesion ids
/// and the non-zero mask labels coincide. Issues are sorted by case id.
std::vector<ManifestIssue> validate_manifest(const std::vector<CaseManifest>& cases, bool check_masks = true);

/// Parses the JSON manifest. Relative paths resolve against the manifest's
/// directory. Throws ValidationError listing every per-case violation.
std::vector<CaseManifest> load_manifest(const std::filesystem::path& path, bool check_masks = true);

/// Writes the manifest with paths relative to the manifest directory when
/// they live beneath it.
void save_manifest(const std::vector<CaseManifest>& cases, const std::filesystem::path& path);

/// Fills `volume_cc` for every lesion from its mask.
void attach_lesion_volumes(CaseManifest& c, const LabelVolume& mask);

/// Builds a manifest from a ProstateX-style directory tree (see README):
///   <root>/Images/ADC/<PID>_ADC.nii.gz
///   <root>/Masks/ADC/<PID>-Finding<k>-*.nii.gz   (one binary mask per finding)
///   <root>/Masks/Prostate/<PID>*.nii.gz          (optional gland mask)
///   <root>/findings.csv  (optional: ProxID,fid,zone,ggg)
/// Per-finding masks are merged into one label map per patient (label = k),
/// written under `out_dir`, and the manifest is saved to out_dir/manifest.json.
std::vector<CaseManifest> import_prostatex(const std::filesystem::path& root, const std::filesystem::path& out_dir);

}  // namespace dilseg
