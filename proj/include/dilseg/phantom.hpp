#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dilseg/manifest.hpp"
#include "dilseg/volume.hpp"

namespace dilseg {

/// Synthetic ADC phantom: an ellipsoidal gland at mid ADC inside brighter
/// background, with darker ellipsoidal lesions and additive Gaussian noise.
struct PhantomConfig {
    Index3 shape{128, 128, 20};
    Vec3 spacing{0.625, 0.625, 3.0};
    Vec3 gland_semi_axes_mm{24.0, 20.0, 18.0};
    double gland_center_jitter_mm = 2.0;
    int min_lesions = 1;
    int max_lesions = 2;
    /// Lesion volumes are log-normal around this median, clipped to
    /// [min_lesion_cc, max_lesion_cc].
    double median_lesion_cc = 1.0;
    double lesion_size_log_sd = 0.6;
    double min_lesion_cc = 0.25;
    double max_lesion_cc = 3.0;
    /// Per-axis aspect jitter of lesion ellipsoids (volume-preserving).
    double lesion_aspect_jitter = 0.2;
    double background_adc = 1800.0;
    double gland_adc = 1400.0;
    double lesion_adc = 700.0;
    double noise_sigma = 50.0;
    /// Lesions whose centroid lies beyond this normalised gland radius are PZ, else TZ.
    double pz_shell_cutoff = 0.6;
    /// Relative frequencies of 3+3, 3+4, 4+3, 4+4.
    std::array<double, 4> gleason_weights{0.18, 0.59, 0.14, 0.09};
    int max_placement_retries = 500;
    std::uint64_t seed = 1234;

    void validate() const;
    /// Lesion radius (mm) of a sphere with the given volume.
    static double sphere_radius_mm(double volume_cc);
};

struct PhantomLesion {
    LesionRecord record;
    Vec3 center_mm{};
    Vec3 semi_axes_mm{};
    double analytic_cc = 0.0;
};

struct PhantomCase {
    ScalarVolume image;
    LabelVolume mask;
    LabelVolume prostate;
    std::vector<PhantomLesion> lesions;

    std::vector<LesionRecord> records() const;
};

PhantomCase generate_case(const PhantomConfig& config, std::mt19937_64& rng);

/// Rasterises an ellipsoid so that the voxel count equals
/// round(analytic volume / voxel volume): voxels are ranked by sub-sampled
/// coverage (ties by normalised radius, then raster order). Returns linear
/// indices, ascending.
std::vector<std::size_t> rasterize_ellipsoid(const Geometry& geo, const Vec3& center_mm, const Vec3& semi_axes_mm,
                                             int subsamples = 4);

/// Writes `n_cases` phantoms (NIfTI-gz) plus manifest.json under `out_dir`;
/// case i uses an RNG seeded from (seed, i).
std::vector<CaseManifest> generate_dataset(const PhantomConfig& config, int n_cases, std::uint64_t seed,
                                           const std::filesystem::path& out_dir);

}  // namespace dilseg
