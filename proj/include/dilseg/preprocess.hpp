#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dilseg/components.hpp"
#include "dilseg/manifest.hpp"
#include "dilseg/volume.hpp"

namespace dilseg {

struct PreprocessConfig {
    Vec3 target_spacing{0.625, 0.625, 3.0};
    std::array<std::int64_t, 2> crop_size{128, 128};
    int min_component_voxels = 2;
    int slice_context = 2;  // 2k+1 input channels
    std::array<std::int64_t, 2> upsample_size{256, 256};
    bool zscore = false;
    Connectivity connectivity = Connectivity::Corner;
    std::int64_t max_crop = 1024;

    void validate() const;
};

enum class Interpolation { Linear, Nearest };

/// Resamples onto `target_spacing` keeping origin and direction. The first
/// voxel centres coincide; output extent is round(n * in / out) voxels per
/// axis, so the physical extent changes by at most half an output voxel.
template <typename Tag>
Volume<Tag> resample_volume(const Volume<Tag>& vol, const Vec3& target_spacing, Interpolation interp);

inline ScalarVolume resample_volume(const ScalarVolume& vol, const Vec3& target_spacing) {
    return resample_volume(vol, target_spacing, Interpolation::Linear);
}
inline LabelVolume resample_volume(const LabelVolume& vol, const Vec3& target_spacing) {
    return resample_volume(vol, target_spacing, Interpolation::Nearest);
}

/// Resamples onto an arbitrary target grid via world coordinates, clamping
/// at the source borders.
template <typename Tag>
Volume<Tag> resample_to_geometry(const Volume<Tag>& vol, const Geometry& target, Interpolation interp);

/// In-plane crop bookkeeping, enough to put predictions back.
struct CropInfo {
    std::int64_t x0 = 0;
    std::int64_t y0 = 0;
    Geometry source;  // geometry of the volume that was cropped
};

/// In-plane crop of `crop_size` centred (to the nearest voxel) on
/// `center_xy`; out-of-bounds voxels are zero.
template <typename Tag>
Volume<Tag> crop_to_roi(const Volume<Tag>& vol, std::array<double, 2> center_xy,
                        std::array<std::int64_t, 2> crop_size, CropInfo* info = nullptr,
                        std::int64_t max_crop = 1024);

/// Inverse of crop_to_roi: places the crop back into the source frame,
/// zero elsewhere.
template <typename Tag>
Volume<Tag> uncrop(const Volume<Tag>& cropped, const CropInfo& info);

/// Crop centre: in-plane centroid of the prostate mask when given and
/// non-empty, else the volume centre (nx/2, ny/2).
std::array<double, 2> crop_center(const Geometry& geo, const LabelVolume* prostate);

/// Sets components with fewer than `min_voxels` voxels to background.
LabelVolume clean_small_components(const LabelVolume& mask, int min_voxels = 2,
                                   Connectivity conn = Connectivity::Corner);

/// Per-volume zero-mean unit-variance normalisation.
ScalarVolume normalize_zscore(const ScalarVolume& vol);

/// Single-channel 2D image, x fastest.
struct Plane {
    std::int64_t width = 0;
    std::int64_t height = 0;
    std::vector<float> values;

    Plane() = default;
    Plane(std::int64_t w, std::int64_t h, float fill = 0.0f) : width(w), height(h), values(w * h, fill) {}
    float& at(std::int64_t x, std::int64_t y) { return values[static_cast<std::size_t>(y * width + x)]; }
    float at(std::int64_t x, std::int64_t y) const { return values[static_cast<std::size_t>(y * width + x)]; }
};

/// Channel-major (C, H, W) stack of neighbouring slices.
struct SliceStack {
    std::int64_t channels = 0;
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::vector<float> values;

    float at(std::int64_t c, std::int64_t y, std::int64_t x) const {
        return values[static_cast<std::size_t>((c * height + y) * width + x)];
    }
};

/// Slices [i-k, i+k] ordered inferior to superior, edge slices replicated.
SliceStack stack_slices(const ScalarVolume& vol, std::int64_t slice_index, int k);

template <typename Tag>
Plane extract_slice(const Volume<Tag>& vol, std::int64_t z);

/// Bilinear upsample (half-pixel centres, border clamp).
Plane make_smoothed_labels(const Plane& mask, std::array<std::int64_t, 2> size);
/// Nearest-neighbour upsample (source index floor(dst * in / out)).
Plane make_binary_labels(const Plane& mask, std::array<std::int64_t, 2> size);

// ---------------------------------------------------------------------------
// Case-level preprocessing

struct PreprocessedCase {
    std::string case_id;
    ScalarVolume image;
    LabelVolume mask;
    std::optional<LabelVolume> prostate;
    Geometry original;   // geometry of the input image
    Geometry resampled;  // geometry after resampling, before cropping
    CropInfo crop;
};

PreprocessedCase preprocess_case(const CaseManifest& c, const PreprocessConfig& config);

/// Maps a prediction made in the preprocessed frame back onto the original
/// image grid (uncrop, then resample).
LabelVolume restore_to_original(const LabelVolume& pred, const Geometry& resampled, const CropInfo& crop,
                                const Geometry& original, Interpolation interp);

struct CropSidecar {
    std::string case_id;
    CropInfo crop;
    Geometry original;
    Geometry resampled;
    std::string config_hash;
};

void write_sidecar(const CropSidecar& s, const std::filesystem::path& path);
CropSidecar read_sidecar(const std::filesystem::path& path);

}  // namespace dilseg
