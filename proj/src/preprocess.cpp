#include "dilseg/preprocess.hpp"
#include "dilseg/version.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dilseg/volume_io.hpp"
#include "json.hpp"

namespace dilseg {

namespace fs = std::filesystem;
using nlohmann::json;

void PreprocessConfig::validate() const {
    for (int k = 0; k < 3; ++k) {
        if (!(target_spacing[k] > 0)) throw ValidationError("target spacing must be positive");
    }
    for (int k = 0; k < 2; ++k) {
        if (crop_size[k] <= 0 || crop_size[k] % 2 != 0) throw ValidationError("crop size must be even and positive");
        if (upsample_size[k] <= 0 || upsample_size[k] % 2 != 0) {
            throw ValidationError("upsample size must be even and positive");
        }
    }
    if (slice_context < 0) throw ValidationError("slice context must be non-negative");
    if (min_component_voxels < 0) throw ValidationError("min component size must be non-negative");
}

namespace {

// World -> continuous voxel index of `geo`; directions are orthonormal.
Vec3 world_to_voxel(const Geometry& geo, const Vec3& p) {
    Vec3 d{p[0] - geo.origin[0], p[1] - geo.origin[1], p[2] - geo.origin[2]};
    Vec3 u{};
    for (int k = 0; k < 3; ++k) {
        double s = 0;
        for (int r = 0; r < 3; ++r) s += geo.direction[3 * k + r] * d[r];
        u[k] = s / geo.spacing[k];
        const double rounded = std::round(u[k]);
        if (std::abs(u[k] - rounded) < 1e-9) u[k] = rounded;
    }
    return u;
}

float lerp(float a, float b, double t) {
    return (t == 0.0) ? a : static_cast<float>(a + t * (static_cast<double>(b) - a));
}

template <typename Tag>
float sample(const Volume<Tag>& vol, const Vec3& u, Interpolation interp) {
    const std::int64_t n[3] = {vol.nx(), vol.ny(), vol.nz()};
    if (interp == Interpolation::Nearest) {
        std::int64_t i[3];
        for (int k = 0; k < 3; ++k) {
            i[k] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(u[k] + 0.5)), 0, n[k] - 1);
        }
        return vol.at(i[0], i[1], i[2]);
    }
    std::int64_t i0[3], i1[3];
    double t[3];
    for (int k = 0; k < 3; ++k) {
        const double c = std::clamp(u[k], 0.0, static_cast<double>(n[k] - 1));
        i0[k] = static_cast<std::int64_t>(std::floor(c));
        i1[k] = std::min(i0[k] + 1, n[k] - 1);
        t[k] = c - static_cast<double>(i0[k]);
    }
    const float c00 = lerp(vol.at(i0[0], i0[1], i0[2]), vol.at(i1[0], i0[1], i0[2]), t[0]);
    const float c10 = lerp(vol.at(i0[0], i1[1], i0[2]), vol.at(i1[0], i1[1], i0[2]), t[0]);
    const float c01 = lerp(vol.at(i0[0], i0[1], i1[2]), vol.at(i1[0], i0[1], i1[2]), t[0]);
    const float c11 = lerp(vol.at(i0[0], i1[1], i1[2]), vol.at(i1[0], i1[1], i1[2]), t[0]);
    return lerp(lerp(c00, c10, t[1]), lerp(c01, c11, t[1]), t[2]);
}

}  // namespace

template <typename Tag>
Volume<Tag> resample_to_geometry(const Volume<Tag>& vol, const Geometry& target, Interpolation interp) {
    if (vol.size() == 0) throw ShapeError("cannot resample an empty volume");
    if (vol.geometry() == target) return vol;
    Volume<Tag> out(target);
    for (std::int64_t z = 0; z < target.shape[2]; ++z)
        for (std::int64_t y = 0; y < target.shape[1]; ++y)
            for (std::int64_t x = 0; x < target.shape[0]; ++x) {
                const Vec3 p = voxel_to_world(target, {static_cast<double>(x), static_cast<double>(y),
                                                       static_cast<double>(z)});
                out.at(x, y, z) = sample(vol, world_to_voxel(vol.geometry(), p), interp);
            }
    return out;
}

template <typename Tag>
Volume<Tag> resample_volume(const Volume<Tag>& vol, const Vec3& target_spacing, Interpolation interp) {
    const Geometry& g = vol.geometry();
    if (vol.size() == 0) throw ShapeError("cannot resample a degenerate (zero-extent) volume");
    Geometry out = g;
    out.spacing = target_spacing;
    for (int k = 0; k < 3; ++k) {
        if (!(target_spacing[k] > 0)) throw ValidationError("target spacing must be positive");
        const double extent = static_cast<double>(g.shape[k]) * g.spacing[k];
        out.shape[k] = std::max<std::int64_t>(1, std::llround(extent / target_spacing[k]));
    }
    return resample_to_geometry(vol, out, interp);
}

template ScalarVolume resample_volume(const ScalarVolume&, const Vec3&, Interpolation);
template LabelVolume resample_volume(const LabelVolume&, const Vec3&, Interpolation);
template ScalarVolume resample_to_geometry(const ScalarVolume&, const Geometry&, Interpolation);
template LabelVolume resample_to_geometry(const LabelVolume&, const Geometry&, Interpolation);

template <typename Tag>
Volume<Tag> crop_to_roi(const Volume<Tag>& vol, std::array<double, 2> center_xy,
                        std::array<std::int64_t, 2> crop_size, CropInfo* info, std::int64_t max_crop) {
    if (crop_size[0] <= 0 || crop_size[1] <= 0) throw ValidationError("crop size must be positive");
    if (crop_size[0] > max_crop || crop_size[1] > max_crop) {
        throw ValidationError("crop size exceeds the padded maximum of " + std::to_string(max_crop));
    }
    const Geometry& g = vol.geometry();
    const std::int64_t x0 = std::llround(center_xy[0]) - crop_size[0] / 2;
    const std::int64_t y0 = std::llround(center_xy[1]) - crop_size[1] / 2;
    Geometry out = g;
    out.shape = {crop_size[0], crop_size[1], g.shape[2]};
    out.origin = voxel_to_world(g, {static_cast<double>(x0), static_cast<double>(y0), 0.0});
    Volume<Tag> result(out);
    for (std::int64_t z = 0; z < g.shape[2]; ++z)
        for (std::int64_t y = 0; y < crop_size[1]; ++y)
            for (std::int64_t x = 0; x < crop_size[0]; ++x) {
                if (vol.contains(x0 + x, y0 + y, z)) result.at(x, y, z) = vol.at(x0 + x, y0 + y, z);
            }
    if (info) *info = CropInfo{x0, y0, g};
    return result;
}

template <typename Tag>
Volume<Tag> uncrop(const Volume<Tag>& cropped, const CropInfo& info) {
    Volume<Tag> out(info.source);
    if (cropped.nz() != info.source.shape[2]) throw ShapeError("uncrop: slice count differs from the source frame");
    for (std::int64_t z = 0; z < cropped.nz(); ++z)
        for (std::int64_t y = 0; y < cropped.ny(); ++y)
            for (std::int64_t x = 0; x < cropped.nx(); ++x) {
                if (out.contains(info.x0 + x, info.y0 + y, z)) out.at(info.x0 + x, info.y0 + y, z) = cropped.at(x, y, z);
            }
    return out;
}

template ScalarVolume crop_to_roi(const ScalarVolume&, std::array<double, 2>, std::array<std::int64_t, 2>,
                                  CropInfo*, std::int64_t);
template LabelVolume crop_to_roi(const LabelVolume&, std::array<double, 2>, std::array<std::int64_t, 2>,
                                 CropInfo*, std::int64_t);
template ScalarVolume uncrop(const ScalarVolume&, const CropInfo&);
template LabelVolume uncrop(const LabelVolume&, const CropInfo&);

std::array<double, 2> crop_center(const Geometry& geo, const LabelVolume* prostate) {
    if (prostate) {
        double sx = 0, sy = 0;
        std::int64_t n = 0;
        for (std::int64_t z = 0; z < prostate->nz(); ++z)
            for (std::int64_t y = 0; y < prostate->ny(); ++y)
                for (std::int64_t x = 0; x < prostate->nx(); ++x) {
                    if (prostate->at(x, y, z) != 0.0f) {
                        sx += static_cast<double>(x);
                        sy += static_cast<double>(y);
                        ++n;
                    }
                }
        if (n > 0) return {sx / static_cast<double>(n), sy / static_cast<double>(n)};
    }
    return {static_cast<double>(geo.shape[0] / 2), static_cast<double>(geo.shape[1] / 2)};
}

LabelVolume clean_small_components(const LabelVolume& mask, int min_voxels, Connectivity conn) {
    LabelVolume out = mask;
    for (const auto& c : connected_components(mask, conn)) {
        if (static_cast<int>(c.voxels.size()) < min_voxels) {
            for (std::size_t v : c.voxels) out[v] = 0.0f;
        }
    }
    return out;
}

ScalarVolume normalize_zscore(const ScalarVolume& vol) {
    double mean = 0;
    for (float v : vol.data()) mean += v;
    mean /= static_cast<double>(vol.size());
    double var = 0;
    for (float v : vol.data()) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(vol.size()));
    ScalarVolume out = vol;
    for (auto& v : out.values()) v = static_cast<float>(sd > 0 ? (v - mean) / sd : 0.0);
    return out;
}

SliceStack stack_slices(const ScalarVolume& vol, std::int64_t slice_index, int k) {
    if (slice_index < 0 || slice_index >= vol.nz()) {
        throw ValidationError("slice index " + std::to_string(slice_index) + " outside [0, " +
                              std::to_string(vol.nz()) + ")");
    }
    if (k < 0) throw ValidationError("slice context must be non-negative");
    SliceStack s;
    s.channels = 2 * k + 1;
    s.height = vol.ny();
    s.width = vol.nx();
    s.values.resize(static_cast<std::size_t>(s.channels * s.height * s.width));
    const std::size_t plane = static_cast<std::size_t>(s.height * s.width);
    for (std::int64_t c = 0; c < s.channels; ++c) {
        const std::int64_t z = std::clamp<std::int64_t>(slice_index - k + c, 0, vol.nz() - 1);
        std::copy_n(vol.values().begin() + static_cast<std::ptrdiff_t>(plane * static_cast<std::size_t>(z)), plane,
                    s.values.begin() + static_cast<std::ptrdiff_t>(plane * static_cast<std::size_t>(c)));
    }
    return s;
}

template <typename Tag>
Plane extract_slice(const Volume<Tag>& vol, std::int64_t z) {
    if (z < 0 || z >= vol.nz()) throw ValidationError("slice index out of range");
    Plane p(vol.nx(), vol.ny());
    const std::size_t plane = static_cast<std::size_t>(vol.nx() * vol.ny());
    std::copy_n(vol.values().begin() + static_cast<std::ptrdiff_t>(plane * static_cast<std::size_t>(z)), plane,
                p.values.begin());
    return p;
}

template Plane extract_slice(const ScalarVolume&, std::int64_t);
template Plane extract_slice(const LabelVolume&, std::int64_t);

Plane make_smoothed_labels(const Plane& mask, std::array<std::int64_t, 2> size) {
    Plane out(size[0], size[1]);
    if (size[0] == mask.width && size[1] == mask.height) {
        out.values = mask.values;
        return out;
    }
    const double sx = static_cast<double>(mask.width) / static_cast<double>(size[0]);
    const double sy = static_cast<double>(mask.height) / static_cast<double>(size[1]);
    for (std::int64_t y = 0; y < size[1]; ++y) {
        const double v = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(mask.height - 1));
        const auto y0 = static_cast<std::int64_t>(std::floor(v));
        const std::int64_t y1 = std::min(y0 + 1, mask.height - 1);
        const double ty = v - static_cast<double>(y0);
        for (std::int64_t x = 0; x < size[0]; ++x) {
            const double u =
                std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(mask.width - 1));
            const auto x0 = static_cast<std::int64_t>(std::floor(u));
            const std::int64_t x1 = std::min(x0 + 1, mask.width - 1);
            const double tx = u - static_cast<double>(x0);
            const double top = mask.at(x0, y0) * (1 - tx) + mask.at(x1, y0) * tx;
            const double bottom = mask.at(x0, y1) * (1 - tx) + mask.at(x1, y1) * tx;
            out.at(x, y) = static_cast<float>(std::clamp(top * (1 - ty) + bottom * ty, 0.0, 1.0));
        }
    }
    return out;
}

Plane make_binary_labels(const Plane& mask, std::array<std::int64_t, 2> size) {
    Plane out(size[0], size[1]);
    for (std::int64_t y = 0; y < size[1]; ++y) {
        const std::int64_t sy = std::min(y * mask.height / size[1], mask.height - 1);
        for (std::int64_t x = 0; x < size[0]; ++x) {
            const std::int64_t sx = std::min(x * mask.width / size[0], mask.width - 1);
            out.at(x, y) = mask.at(sx, sy);
        }
    }
    return out;
}

PreprocessedCase preprocess_case(const CaseManifest& c, const PreprocessConfig& config) {
    config.validate();
    PreprocessedCase out;
    out.case_id = c.case_id;
    const ScalarVolume image = load_scalar_volume(c.image_path);
    LabelVolume mask = load_label_volume(c.mask_path);
    if (mask.shape() != image.shape()) throw ShapeError(c.case_id + ": mask grid differs from image grid");
    mask.set_geometry_keep_data(image.geometry());
    out.original = image.geometry();

    ScalarVolume img_r = resample_volume(image, config.target_spacing);
    LabelVolume mask_r = resample_volume(mask, config.target_spacing);
    mask_r = clean_small_components(mask_r, config.min_component_voxels, config.connectivity);
    if (config.zscore) img_r = normalize_zscore(img_r);
    out.resampled = img_r.geometry();

    std::optional<LabelVolume> prostate_r;
    if (c.prostate_mask_path) {
        LabelVolume p = load_label_volume(*c.prostate_mask_path);
        if (p.shape() != image.shape()) throw ShapeError(c.case_id + ": prostate grid differs from image grid");
        p.set_geometry_keep_data(image.geometry());
        prostate_r = resample_volume(p, config.target_spacing);
    }
    const auto center = crop_center(img_r.geometry(), prostate_r ? &*prostate_r : nullptr);
    out.image = crop_to_roi(img_r, center, config.crop_size, &out.crop, config.max_crop);
    out.mask = crop_to_roi(mask_r, center, config.crop_size, nullptr, config.max_crop);
    if (prostate_r) out.prostate = crop_to_roi(*prostate_r, center, config.crop_size, nullptr, config.max_crop);
    return out;
}

LabelVolume restore_to_original(const LabelVolume& pred, const Geometry& resampled, const CropInfo& crop,
                                const Geometry& original, Interpolation interp) {
    CropInfo info = crop;
    info.source = resampled;
    return resample_to_geometry(uncrop(pred, info), original, interp);
}

namespace {

json geometry_json(const Geometry& g) {
    return json{{"shape", g.shape}, {"spacing", g.spacing}, {"origin", g.origin}, {"direction", g.direction}};
}

Geometry geometry_from(const json& j) {
    Geometry g;
    g.shape = j.at("shape").get<Index3>();
    g.spacing = j.at("spacing").get<Vec3>();
    g.origin = j.at("origin").get<Vec3>();
    g.direction = j.at("direction").get<Direction3>();
    return g;
}

}  // namespace

void write_sidecar(const CropSidecar& s, const fs::path& path) {
    json j;
    j["case_id"] = s.case_id;
    j["crop_offset"] = {s.crop.x0, s.crop.y0};
    j["original_geometry"] = geometry_json(s.original);
    j["resampled_geometry"] = geometry_json(s.resampled);
    j["original_spacing"] = s.original.spacing;
    j["config_hash"] = s.config_hash;
    j["toolkit"] = std::string(kToolkitName) + " " + kToolkitVersion;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

CropSidecar read_sidecar(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open sidecar " + path.string());
    try {
        const json j = json::parse(in);
        CropSidecar s;
        s.case_id = j.at("case_id").get<std::string>();
        s.crop.x0 = j.at("crop_offset").at(0).get<std::int64_t>();
        s.crop.y0 = j.at("crop_offset").at(1).get<std::int64_t>();
        s.original = geometry_from(j.at("original_geometry"));
        s.resampled = geometry_from(j.at("resampled_geometry"));
        s.crop.source = s.resampled;
        s.config_hash = j.value("config_hash", std::string{});
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed sidecar " + path.string() + ": " + e.what());
    }
}

}  // namespace dilseg
