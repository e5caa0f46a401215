#include "dilseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <tuple>

#include "dilseg/hashing.hpp"
#include "dilseg/volume_io.hpp"

namespace dilseg {

namespace fs = std::filesystem;

void PhantomConfig::validate() const {
    validate_geometry(Geometry{shape, spacing, {0, 0, 0}, kIdentityDirection});
    for (double a : gland_semi_axes_mm) {
        if (!(a > 0)) throw ValidationError("gland semi-axes must be positive");
    }
    if (min_lesions < 0 || max_lesions < min_lesions) throw ValidationError("invalid lesion count range");
    if (!(min_lesion_cc > 0) || max_lesion_cc < min_lesion_cc || !(median_lesion_cc > 0)) {
        throw ValidationError("lesion volumes must be positive with min <= max");
    }
    if (!(lesion_adc < gland_adc)) throw ValidationError("lesion ADC must be below gland ADC");
    if (noise_sigma < 0) throw ValidationError("noise sigma must be non-negative");
}

double PhantomConfig::sphere_radius_mm(double volume_cc) {
    return std::cbrt(3.0 * volume_cc * 1000.0 / (4.0 * std::numbers::pi));
}

std::vector<LesionRecord> PhantomCase::records() const {
    std::vector<LesionRecord> out;
    for (const auto& l : lesions) out.push_back(l.record);
    return out;
}

namespace {

// Normalised ellipsoid radius of a world point (identity direction grids).
double ellipsoid_radius(const Vec3& p, const Vec3& center, const Vec3& semi) {
    double s = 0;
    for (int k = 0; k < 3; ++k) {
        const double d = (p[k] - center[k]) / semi[k];
        s += d * d;
    }
    return std::sqrt(s);
}

Vec3 voxel_center(const Geometry& g, std::int64_t x, std::int64_t y, std::int64_t z) {
    return {g.origin[0] + g.spacing[0] * static_cast<double>(x), g.origin[1] + g.spacing[1] * static_cast<double>(y),
            g.origin[2] + g.spacing[2] * static_cast<double>(z)};
}

}  // namespace

std::vector<std::size_t> rasterize_ellipsoid(const Geometry& geo, const Vec3& center_mm, const Vec3& semi_axes_mm,
                                             int subsamples) {
    const double analytic = 4.0 / 3.0 * std::numbers::pi * semi_axes_mm[0] * semi_axes_mm[1] * semi_axes_mm[2];
    const auto target = static_cast<std::size_t>(std::llround(analytic / geo.voxel_volume_mm3()));
    std::int64_t lo[3], hi[3];
    for (int k = 0; k < 3; ++k) {
        lo[k] = std::max<std::int64_t>(
            0, static_cast<std::int64_t>(std::floor((center_mm[k] - semi_axes_mm[k] - geo.origin[k]) / geo.spacing[k])) - 1);
        hi[k] = std::min<std::int64_t>(
            geo.shape[k] - 1,
            static_cast<std::int64_t>(std::ceil((center_mm[k] + semi_axes_mm[k] - geo.origin[k]) / geo.spacing[k])) + 1);
    }
    struct Candidate {
        int coverage;
        double radius;
        std::size_t index;
    };
    std::vector<Candidate> cands;
    const int n = subsamples;
    for (std::int64_t z = lo[2]; z <= hi[2]; ++z)
        for (std::int64_t y = lo[1]; y <= hi[1]; ++y)
            for (std::int64_t x = lo[0]; x <= hi[0]; ++x) {
                const Vec3 c = voxel_center(geo, x, y, z);
                int covered = 0;
                for (int a = 0; a < n; ++a)
                    for (int b = 0; b < n; ++b)
                        for (int d = 0; d < n; ++d) {
                            const Vec3 p{c[0] + geo.spacing[0] * ((a + 0.5) / n - 0.5),
                                         c[1] + geo.spacing[1] * ((b + 0.5) / n - 0.5),
                                         c[2] + geo.spacing[2] * ((d + 0.5) / n - 0.5)};
                            covered += ellipsoid_radius(p, center_mm, semi_axes_mm) <= 1.0;
                        }
                const double r = ellipsoid_radius(c, center_mm, semi_axes_mm);
                if (covered > 0 || r <= 1.0) {
                    cands.push_back({covered, r,
                                     static_cast<std::size_t>(x + geo.shape[0] * (y + geo.shape[1] * z))});
                }
            }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        return std::tie(b.coverage, a.radius, a.index) < std::tie(a.coverage, b.radius, b.index);
    });
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < std::min(target, cands.size()); ++i) out.push_back(cands[i].index);
    std::sort(out.begin(), out.end());
    return out;
}

PhantomCase generate_case(const PhantomConfig& config, std::mt19937_64& rng) {
    config.validate();
    Geometry geo;
    geo.shape = config.shape;
    geo.spacing = config.spacing;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Vec3 gland_center{};
    for (int k = 0; k < 3; ++k) {
        const double mid = 0.5 * static_cast<double>(geo.shape[k] - 1) * geo.spacing[k];
        gland_center[k] = mid + config.gland_center_jitter_mm * (2.0 * unit(rng) - 1.0);
    }

    PhantomCase pc;
    pc.prostate = LabelVolume(geo);
    pc.mask = LabelVolume(geo);
    for (std::int64_t z = 0; z < geo.shape[2]; ++z)
        for (std::int64_t y = 0; y < geo.shape[1]; ++y)
            for (std::int64_t x = 0; x < geo.shape[0]; ++x) {
                if (ellipsoid_radius(voxel_center(geo, x, y, z), gland_center, config.gland_semi_axes_mm) <= 1.0) {
                    pc.prostate.at(x, y, z) = 1.0f;
                }
            }

    const int n_lesions =
        config.min_lesions + static_cast<int>(unit(rng) * (config.max_lesions - config.min_lesions + 1) * 0.999999);
    // Voxels claimed by earlier lesions, dilated by one voxel so lesions stay
    // separate 26-connected components.
    std::vector<char> blocked(pc.mask.size(), 0);
    for (int id = 1; id <= n_lesions; ++id) {
        bool placed = false;
        for (int attempt = 0; attempt < config.max_placement_retries && !placed; ++attempt) {
            const double volume_cc = std::clamp(
                config.median_lesion_cc * std::exp(config.lesion_size_log_sd * gauss(rng)), config.min_lesion_cc,
                config.max_lesion_cc);
            const double r = PhantomConfig::sphere_radius_mm(volume_cc);
            const double j = config.lesion_aspect_jitter;
            const double f0 = std::exp(std::log1p(j) * (2.0 * unit(rng) - 1.0));
            const double f1 = std::exp(std::log1p(j) * (2.0 * unit(rng) - 1.0));
            const Vec3 semi{r * f0, r * f1, r / (f0 * f1)};
            // Uniform direction, radius within the gland.
            Vec3 dir{gauss(rng), gauss(rng), gauss(rng)};
            const double norm = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
            const double rho = std::cbrt(unit(rng));
            Vec3 center{};
            for (int k = 0; k < 3; ++k) center[k] = gland_center[k] + config.gland_semi_axes_mm[k] * rho * dir[k] / norm;

            const auto voxels = rasterize_ellipsoid(geo, center, semi);
            bool ok = !voxels.empty();
            for (std::size_t v : voxels) {
                if (pc.prostate[v] == 0.0f || blocked[v]) {
                    ok = false;
                    break;
                }
            }
            // The ellipsoid must not touch the grid border either.
            for (int k = 0; k < 3 && ok; ++k) {
                if (center[k] - semi[k] < 0 || center[k] + semi[k] > static_cast<double>(geo.shape[k] - 1) * geo.spacing[k]) {
                    ok = false;
                }
            }
            if (!ok) continue;

            for (std::size_t v : voxels) {
                pc.mask[v] = static_cast<float>(id);
                const auto x = static_cast<std::int64_t>(v % static_cast<std::size_t>(geo.shape[0]));
                const auto y = static_cast<std::int64_t>((v / static_cast<std::size_t>(geo.shape[0])) %
                                                         static_cast<std::size_t>(geo.shape[1]));
                const auto z = static_cast<std::int64_t>(v / static_cast<std::size_t>(geo.shape[0] * geo.shape[1]));
                for (int dz = -1; dz <= 1; ++dz)
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            if (pc.mask.contains(x + dx, y + dy, z + dz)) blocked[pc.mask.index(x + dx, y + dy, z + dz)] = 1;
                        }
            }
            PhantomLesion lesion;
            lesion.center_mm = center;
            lesion.semi_axes_mm = semi;
            lesion.analytic_cc = 4.0 / 3.0 * std::numbers::pi * semi[0] * semi[1] * semi[2] / 1000.0;
            lesion.record.lesion_id = id;
            lesion.record.volume_cc = static_cast<double>(voxels.size()) * geo.voxel_volume_mm3() / 1000.0;
            Vec3 centroid{0, 0, 0};
            for (std::size_t v : voxels) {
                centroid[0] += static_cast<double>(v % static_cast<std::size_t>(geo.shape[0])) * geo.spacing[0];
                centroid[1] += static_cast<double>((v / static_cast<std::size_t>(geo.shape[0])) %
                                                   static_cast<std::size_t>(geo.shape[1])) * geo.spacing[1];
                centroid[2] += static_cast<double>(v / static_cast<std::size_t>(geo.shape[0] * geo.shape[1])) * geo.spacing[2];
            }
            for (auto& c : centroid) c /= static_cast<double>(voxels.size());
            lesion.record.zone = ellipsoid_radius(centroid, gland_center, config.gland_semi_axes_mm) > config.pz_shell_cutoff
                                     ? Zone::PZ
                                     : Zone::TZ;
            std::discrete_distribution<int> gs(config.gleason_weights.begin(), config.gleason_weights.end());
            static constexpr Gleason kGleason[4] = {{3, 3}, {3, 4}, {4, 3}, {4, 4}};
            lesion.record.gleason = kGleason[gs(rng)];
            pc.lesions.push_back(lesion);
            placed = true;
        }
        if (!placed) {
            throw ValidationError("phantom lesion placement infeasible after " +
                                  std::to_string(config.max_placement_retries) + " retries");
        }
    }

    pc.image = ScalarVolume(geo);
    for (std::size_t i = 0; i < pc.image.size(); ++i) {
        double v = pc.mask[i] != 0.0f       ? config.lesion_adc
                   : pc.prostate[i] != 0.0f ? config.gland_adc
                                            : config.background_adc;
        if (config.noise_sigma > 0) v += config.noise_sigma * gauss(rng);
        pc.image[i] = static_cast<float>(v);
    }
    return pc;
}

std::vector<CaseManifest> generate_dataset(const PhantomConfig& config, int n_cases, std::uint64_t seed,
                                           const fs::path& out_dir) {
    if (n_cases < 0) throw ValidationError("case count must be non-negative");
    std::vector<CaseManifest> cases;
    for (int i = 0; i < n_cases; ++i) {
        std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        const PhantomCase pc = generate_case(config, rng);
        char name[32];
        std::snprintf(name, sizeof(name), "phantom_%03d", i);
        CaseManifest c;
        c.case_id = name;
        c.patient_id = name;
        c.image_path = out_dir / "images" / (std::string(name) + "_adc.nii.gz");
        c.mask_path = out_dir / "masks" / (std::string(name) + "_lesions.nii.gz");
        c.prostate_mask_path = out_dir / "prostate" / (std::string(name) + "_gland.nii.gz");
        c.lesions = pc.records();
        save_volume(pc.image, c.image_path);
        save_volume(pc.mask, c.mask_path);
        save_volume(pc.prostate, *c.prostate_mask_path);
        cases.push_back(std::move(c));
    }
    save_manifest(cases, out_dir / "manifest.json");
    return cases;
}

}  // namespace dilseg
