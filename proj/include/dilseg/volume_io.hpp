#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dilseg/volume.hpp"

namespace dilseg {

/// Storage formats understood by the loaders. NIfTI-1 single-file volumes
/// (`.nii`, `.nii.gz`) and a raw float32 array next to a JSON header
/// (`name.json` + `name.raw`).
enum class VolumeFormat { Nifti, NiftiGz, RawJson };

VolumeFormat format_from_path(const std::filesystem::path& path);

struct LoadReport {
    std::int64_t non_finite_voxels = 0;
};

/// Loads an intensity image. Non-finite voxels are replaced by zero and
/// counted in `report` (and reported on stderr). The volume is reoriented
/// to the canonical axis order.
ScalarVolume load_scalar_volume(const std::filesystem::path& path, LoadReport* report = nullptr);

/// Loads an integer label map. Rejects non-finite, negative or non-integer
/// voxels.
LabelVolume load_label_volume(const std::filesystem::path& path);

/// Loads a real-valued map (probabilities, smoothed labels) in [0, 1].
LabelVolume load_probability_volume(const std::filesystem::path& path);

/// `stamp` is appended to the toolkit name and version in the file's
/// description (NIfTI descrip, truncated to 79 bytes; raw header field).
void save_volume(const ScalarVolume& volume, const std::filesystem::path& path, const std::string& stamp = {});
void save_volume(const LabelVolume& volume, const std::filesystem::path& path, const std::string& stamp = {});

/// Permutes and flips axes so that data axis k points along world axis k
/// with a positive direction cosine. Pure relabelling of the grid: voxel
/// values are unchanged, only their order.
template <typename Tag>
Volume<Tag> reorient_canonical(const Volume<Tag>& volume);

}  // namespace dilseg
