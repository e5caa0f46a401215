#include "dilseg/volume_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "dilseg/version.hpp"
#include "json.hpp"

namespace dilseg {

namespace fs = std::filesystem;
using nlohmann::json;

void validate_geometry(const Geometry& geo) {
    for (int k = 0; k < 3; ++k) {
        if (geo.shape[k] <= 0) throw ShapeError("volume dimensions must be positive");
        if (!(geo.spacing[k] > 0.0) || !std::isfinite(geo.spacing[k])) {
            throw ValidationError("voxel spacing must be strictly positive");
        }
    }
}

Vec3 voxel_to_world(const Geometry& geo, const Vec3& ijk) {
    Vec3 p = geo.origin;
    for (int k = 0; k < 3; ++k) {
        for (int r = 0; r < 3; ++r) {
            p[r] += geo.direction[3 * k + r] * geo.spacing[k] * ijk[k];
        }
    }
    return p;
}

std::vector<int> label_ids(const LabelVolume& mask) {
    std::set<int> ids;
    for (float v : mask.data()) {
        if (v != 0.0f) ids.insert(static_cast<int>(v));
    }
    return {ids.begin(), ids.end()};
}

VolumeFormat format_from_path(const fs::path& path) {
    const std::string name = path.filename().string();
    auto ends_with = [&](const std::string& suffix) {
        return name.size() >= suffix.size() &&
               name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(".nii.gz")) return VolumeFormat::NiftiGz;
    if (ends_with(".nii")) return VolumeFormat::Nifti;
    if (ends_with(".json")) return VolumeFormat::RawJson;
    throw FormatError("unrecognised volume file extension: " + path.string());
}

namespace {

// ---------------------------------------------------------------------------
// Byte-level helpers

std::string read_all(const fs::path& path, bool gz) {
    if (!fs::exists(path)) throw IoError("file not found: " + path.string());
    std::string out;
    if (gz) {
        gzFile f = gzopen(path.string().c_str(), "rb");
        if (!f) throw IoError("cannot open " + path.string());
        char buf[1 << 16];
        int n = 0;
        while ((n = gzread(f, buf, sizeof(buf))) > 0) out.append(buf, static_cast<std::size_t>(n));
        const bool failed = n < 0;
        gzclose(f);
        if (failed) throw FormatError("corrupt gzip stream: " + path.string());
    } else {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open " + path.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        out = ss.str();
    }
    return out;
}

void write_all(const fs::path& path, const std::string& bytes, bool gz) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    if (gz) {
        gzFile f = gzopen(path.string().c_str(), "wb6");
        if (!f) throw IoError("cannot write " + path.string());
        std::size_t off = 0;
        while (off < bytes.size()) {
            const auto chunk = static_cast<unsigned>(std::min<std::size_t>(bytes.size() - off, 1u << 20));
            if (gzwrite(f, bytes.data() + off, chunk) != static_cast<int>(chunk)) {
                gzclose(f);
                throw IoError("write failed: " + path.string());
            }
            off += chunk;
        }
        if (gzclose(f) != Z_OK) throw IoError("write failed: " + path.string());
    } else {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + path.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed: " + path.string());
    }
}

template <typename T>
T get(const std::string& buf, std::size_t off, bool swap) {
    T v;
    std::memcpy(&v, buf.data() + off, sizeof(T));
    if (swap) {
        auto* p = reinterpret_cast<unsigned char*>(&v);
        std::reverse(p, p + sizeof(T));
    }
    return v;
}

template <typename T>
void put(std::string& buf, std::size_t off, T v) {
    std::memcpy(buf.data() + off, &v, sizeof(T));
}

// ---------------------------------------------------------------------------
// NIfTI-1

constexpr int kNiftiHeaderSize = 348;
constexpr int kNiftiDataOffset = 352;
constexpr int kExtensionCode = 6;  // NIFTI_ECODE_COMMENT
constexpr const char* kGeometryTag = "dilseg-geometry ";

struct RawVolume {
    Geometry geometry;
    std::vector<double> values;  // promoted to double before range checks
};

double element(const std::string& buf, std::size_t off, int datatype, bool swap) {
    switch (datatype) {
        case 2: return static_cast<unsigned char>(buf[off]);
        case 256: return static_cast<signed char>(buf[off]);
        case 4: return get<std::int16_t>(buf, off, swap);
        case 512: return get<std::uint16_t>(buf, off, swap);
        case 8: return get<std::int32_t>(buf, off, swap);
        case 768: return get<std::uint32_t>(buf, off, swap);
        case 1024: return static_cast<double>(get<std::int64_t>(buf, off, swap));
        case 1280: return static_cast<double>(get<std::uint64_t>(buf, off, swap));
        case 16: return get<float>(buf, off, swap);
        case 64: return get<double>(buf, off, swap);
        default: throw FormatError("unsupported NIfTI datatype " + std::to_string(datatype));
    }
}

int element_size(int datatype) {
    switch (datatype) {
        case 2: case 256: return 1;
        case 4: case 512: return 2;
        case 8: case 768: case 16: return 4;
        case 1024: case 1280: case 64: return 8;
        default: throw FormatError("unsupported NIfTI datatype " + std::to_string(datatype));
    }
}

Direction3 quaternion_to_direction(double b, double c, double d, double qfac) {
    double a = 1.0 - (b * b + c * c + d * d);
    if (a < 1e-7) {
        const double n = std::sqrt(b * b + c * c + d * d);
        b /= n;
        c /= n;
        d /= n;
        a = 0.0;
    } else {
        a = std::sqrt(a);
    }
    // Row-major rotation R; column k is the direction of axis k.
    const double r[3][3] = {
        {a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)},
        {2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)},
        {2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b}};
    Direction3 dir{};
    for (int k = 0; k < 3; ++k) {
        const double s = (k == 2) ? qfac : 1.0;
        for (int row = 0; row < 3; ++row) dir[3 * k + row] = r[row][k] * s;
    }
    return dir;
}

// Quaternion (b, c, d) and qfac of a proper or improper rotation.
std::array<double, 4> direction_to_quaternion(const Direction3& dir) {
    double m[3][3];
    for (int k = 0; k < 3; ++k)
        for (int r = 0; r < 3; ++r) m[r][k] = dir[3 * k + r];
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    double qfac = 1.0;
    if (det < 0) {
        qfac = -1.0;
        for (int r = 0; r < 3; ++r) m[r][2] = -m[r][2];
    }
    double a = m[0][0] + m[1][1] + m[2][2] + 1.0;
    double b, c, d;
    if (a > 0.5) {
        a = 0.5 * std::sqrt(a);
        b = 0.25 * (m[2][1] - m[1][2]) / a;
        c = 0.25 * (m[0][2] - m[2][0]) / a;
        d = 0.25 * (m[1][0] - m[0][1]) / a;
    } else {
        const double xd = 1.0 + m[0][0] - (m[1][1] + m[2][2]);
        const double yd = 1.0 + m[1][1] - (m[0][0] + m[2][2]);
        const double zd = 1.0 + m[2][2] - (m[0][0] + m[1][1]);
        if (xd > 1.0) {
            b = 0.5 * std::sqrt(xd);
            c = 0.25 * (m[0][1] + m[1][0]) / b;
            d = 0.25 * (m[0][2] + m[2][0]) / b;
            a = 0.25 * (m[2][1] - m[1][2]) / b;
        } else if (yd > 1.0) {
            c = 0.5 * std::sqrt(yd);
            b = 0.25 * (m[0][1] + m[1][0]) / c;
            d = 0.25 * (m[1][2] + m[2][1]) / c;
            a = 0.25 * (m[0][2] - m[2][0]) / c;
        } else {
            d = 0.5 * std::sqrt(zd);
            b = 0.25 * (m[0][2] + m[2][0]) / d;
            c = 0.25 * (m[1][2] + m[2][1]) / d;
            a = 0.25 * (m[1][0] - m[0][1]) / d;
        }
        if (a < 0) {
            b = -b;
            c = -c;
            d = -d;
        }
    }
    return {b, c, d, qfac};
}

json geometry_to_json(const Geometry& g) {
    return json{{"shape", g.shape}, {"spacing", g.spacing}, {"origin", g.origin}, {"direction", g.direction}};
}

Geometry geometry_from_json(const json& j) {
    Geometry g;
    g.shape = j.at("shape").get<Index3>();
    g.spacing = j.at("spacing").get<Vec3>();
    g.origin = j.at("origin").get<Vec3>();
    if (j.contains("direction")) g.direction = j.at("direction").get<Direction3>();
    return g;
}

// The exact double-precision geometry rides along in a comment extension so
// that save/load is lossless; the float header fields stay authoritative for
// other readers and are cross-checked on load.
bool geometry_consistent(const Geometry& exact, const Geometry& header) {
    if (exact.shape != header.shape) return false;
    for (int k = 0; k < 3; ++k) {
        if (std::abs(static_cast<float>(exact.spacing[k]) - static_cast<float>(header.spacing[k])) >
            1e-5 * std::max(1.0, std::abs(exact.spacing[k])))
            return false;
        if (std::abs(exact.origin[k] - header.origin[k]) > 1e-3 * std::max(1.0, std::abs(exact.origin[k])))
            return false;
    }
    for (int i = 0; i < 9; ++i) {
        if (std::abs(exact.direction[i] - header.direction[i]) > 1e-4) return false;
    }
    return true;
}

RawVolume read_nifti(const fs::path& path, bool gz) {
    const std::string buf = read_all(path, gz);
    if (buf.size() < static_cast<std::size_t>(kNiftiHeaderSize)) {
        throw FormatError("malformed NIfTI header (file too short): " + path.string());
    }
    bool swap = false;
    const auto hdr_size = get<std::int32_t>(buf, 0, false);
    if (hdr_size != kNiftiHeaderSize) {
        if (get<std::int32_t>(buf, 0, true) == kNiftiHeaderSize) {
            swap = true;
        } else {
            throw FormatError("malformed NIfTI header (sizeof_hdr): " + path.string());
        }
    }
    if (std::memcmp(buf.data() + 344, "n+1", 3) != 0 && std::memcmp(buf.data() + 344, "ni1", 3) != 0) {
        throw FormatError("malformed NIfTI header (magic): " + path.string());
    }
    if (std::memcmp(buf.data() + 344, "ni1", 3) == 0) {
        throw FormatError("two-file NIfTI (.hdr/.img) is not supported: " + path.string());
    }
    std::int16_t dim[8];
    for (int i = 0; i < 8; ++i) dim[i] = get<std::int16_t>(buf, 40 + 2 * i, swap);
    if (dim[0] < 1 || dim[0] > 7) throw FormatError("malformed NIfTI header (dim[0]): " + path.string());
    for (int i = 4; i <= dim[0]; ++i) {
        if (dim[i] > 1) throw FormatError("only 3D volumes are supported: " + path.string());
    }
    RawVolume out;
    Geometry& g = out.geometry;
    for (int k = 0; k < 3; ++k) {
        g.shape[k] = (k < dim[0]) ? dim[k + 1] : 1;
        if (g.shape[k] <= 0) throw FormatError("malformed NIfTI header (dims): " + path.string());
    }
    const int datatype = get<std::int16_t>(buf, 70, swap);
    float pixdim[8];
    for (int i = 0; i < 8; ++i) pixdim[i] = get<float>(buf, 76 + 4 * i, swap);
    for (int k = 0; k < 3; ++k) {
        g.spacing[k] = std::abs(pixdim[k + 1]) > 0 ? std::abs(static_cast<double>(pixdim[k + 1])) : 1.0;
    }
    const auto vox_offset = static_cast<std::size_t>(get<float>(buf, 108, swap));
    const float slope = get<float>(buf, 112, swap);
    const float inter = get<float>(buf, 116, swap);
    const int qform_code = get<std::int16_t>(buf, 252, swap);
    const int sform_code = get<std::int16_t>(buf, 254, swap);
    if (sform_code > 0) {
        float srow[3][4];
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 4; ++c) srow[r][c] = get<float>(buf, 280 + 16 * r + 4 * c, swap);
        for (int k = 0; k < 3; ++k) {
            double norm = 0;
            for (int r = 0; r < 3; ++r) norm += static_cast<double>(srow[r][k]) * srow[r][k];
            norm = std::sqrt(norm);
            if (norm <= 0) throw FormatError("malformed NIfTI header (sform): " + path.string());
            for (int r = 0; r < 3; ++r) g.direction[3 * k + r] = srow[r][k] / norm;
            g.spacing[k] = norm;
        }
        for (int r = 0; r < 3; ++r) g.origin[r] = srow[r][3];
    } else if (qform_code > 0) {
        const double qfac = pixdim[0] < 0 ? -1.0 : 1.0;
        g.direction = quaternion_to_direction(get<float>(buf, 256, swap), get<float>(buf, 260, swap),
                                              get<float>(buf, 264, swap), qfac);
        g.origin = {get<float>(buf, 268, swap), get<float>(buf, 272, swap), get<float>(buf, 276, swap)};
    }

    // Extensions: look for our exact-geometry comment.
    if (buf.size() >= 352 && buf[348] != 0) {
        std::size_t off = 352;
        while (off + 8 <= vox_offset && off + 8 <= buf.size()) {
            const auto esize = get<std::int32_t>(buf, off, swap);
            const auto ecode = get<std::int32_t>(buf, off + 4, swap);
            if (esize < 8 || off + static_cast<std::size_t>(esize) > buf.size()) break;
            if (ecode == kExtensionCode) {
                std::string text(buf.data() + off + 8, static_cast<std::size_t>(esize - 8));
                text = text.substr(0, text.find('\0'));
                if (text.rfind(kGeometryTag, 0) == 0) {
                    try {
                        Geometry exact = geometry_from_json(json::parse(text.substr(std::strlen(kGeometryTag))));
                        if (geometry_consistent(exact, g)) g = exact;
                    } catch (const json::exception&) {
                        // ignore foreign or damaged comments
                    }
                }
            }
            off += static_cast<std::size_t>(esize);
        }
    }

    const int esz = element_size(datatype);
    const std::int64_t n = g.voxel_count();
    if (vox_offset < static_cast<std::size_t>(kNiftiHeaderSize) ||
        buf.size() < vox_offset + static_cast<std::size_t>(n * esz)) {
        throw FormatError("NIfTI data truncated: " + path.string());
    }
    out.values.resize(static_cast<std::size_t>(n));
    const bool scale = slope != 0.0f && std::isfinite(slope) && !(slope == 1.0f && inter == 0.0f);
    for (std::int64_t i = 0; i < n; ++i) {
        double v = element(buf, vox_offset + static_cast<std::size_t>(i * esz), datatype, swap);
        if (scale) v = v * slope + inter;
        out.values[static_cast<std::size_t>(i)] = v;
    }
    return out;
}

std::string stamp_text(const std::string& stamp) {
    std::string s = std::string(kToolkitName) + " " + kToolkitVersion;
    if (!stamp.empty()) s += " " + stamp;
    return s;
}

void write_nifti(const Geometry& g, std::span<const float> data, const fs::path& path, bool gz,
                 const std::string& stamp) {
    const std::string ext_text =
        std::string(kGeometryTag) + geometry_to_json(g).dump();
    // esize must be a multiple of 16 and include the 8-byte esize/ecode pair.
    std::size_t esize = 8 + ext_text.size() + 1;
    esize = (esize + 15) / 16 * 16;
    const std::size_t vox_offset = kNiftiDataOffset + esize;

    std::string buf(vox_offset + data.size() * sizeof(float), '\0');
    put<std::int32_t>(buf, 0, kNiftiHeaderSize);
    buf[39] = 0;
    std::int16_t dim[8] = {3, static_cast<std::int16_t>(g.shape[0]), static_cast<std::int16_t>(g.shape[1]),
                           static_cast<std::int16_t>(g.shape[2]), 1, 1, 1, 1};
    for (int k = 0; k < 3; ++k) {
        if (g.shape[k] > 32767) throw FormatError("dimension too large for NIfTI-1");
    }
    for (int i = 0; i < 8; ++i) put<std::int16_t>(buf, 40 + 2 * i, dim[i]);
    put<std::int16_t>(buf, 70, 16);  // FLOAT32
    put<std::int16_t>(buf, 72, 32);
    const auto q = direction_to_quaternion(g.direction);
    float pixdim[8] = {static_cast<float>(q[3]), static_cast<float>(g.spacing[0]), static_cast<float>(g.spacing[1]),
                       static_cast<float>(g.spacing[2]), 1, 1, 1, 1};
    for (int i = 0; i < 8; ++i) put<float>(buf, 76 + 4 * i, pixdim[i]);
    put<float>(buf, 108, static_cast<float>(vox_offset));
    put<float>(buf, 112, 1.0f);
    put<float>(buf, 116, 0.0f);
    buf[123] = 2 | 8;  // mm, sec
    const std::string descrip = stamp_text(stamp).substr(0, 79);
    std::memcpy(buf.data() + 148, descrip.data(), descrip.size());
    put<std::int16_t>(buf, 252, 1);
    put<std::int16_t>(buf, 254, 1);
    put<float>(buf, 256, static_cast<float>(q[0]));
    put<float>(buf, 260, static_cast<float>(q[1]));
    put<float>(buf, 264, static_cast<float>(q[2]));
    for (int r = 0; r < 3; ++r) put<float>(buf, 268 + 4 * r, static_cast<float>(g.origin[r]));
    for (int r = 0; r < 3; ++r) {
        for (int k = 0; k < 3; ++k) {
            put<float>(buf, 280 + 16 * r + 4 * k, static_cast<float>(g.direction[3 * k + r] * g.spacing[k]));
        }
        put<float>(buf, 280 + 16 * r + 12, static_cast<float>(g.origin[r]));
    }
    std::memcpy(buf.data() + 344, "n+1\0", 4);
    buf[348] = 1;
    put<std::int32_t>(buf, 352, static_cast<std::int32_t>(esize));
    put<std::int32_t>(buf, 356, kExtensionCode);
    std::memcpy(buf.data() + 360, ext_text.data(), ext_text.size());
    static_assert(std::endian::native == std::endian::little, "little-endian host assumed");
    std::memcpy(buf.data() + vox_offset, data.data(), data.size() * sizeof(float));
    write_all(path, buf, gz);
}

// ---------------------------------------------------------------------------
// Raw array + JSON header

fs::path raw_data_path(const fs::path& header) {
    fs::path p = header;
    p.replace_extension(".raw");
    return p;
}

RawVolume read_raw(const fs::path& path) {
    const std::string text = read_all(path, false);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError("malformed raw-volume header " + path.string() + ": " + e.what());
    }
    RawVolume out;
    try {
        if (j.value("format", std::string{}) != "dilseg-raw") throw FormatError("not a dilseg raw header");
        out.geometry = geometry_from_json(j);
        if (j.value("dtype", std::string{"float32"}) != "float32") throw FormatError("unsupported raw dtype");
    } catch (const json::exception& e) {
        throw FormatError("malformed raw-volume header " + path.string() + ": " + e.what());
    }
    validate_geometry(out.geometry);
    const fs::path data_path = path.parent_path() / j.value("data", raw_data_path(path).filename().string());
    const std::string bytes = read_all(data_path, false);
    const auto n = static_cast<std::size_t>(out.geometry.voxel_count());
    if (bytes.size() != n * sizeof(float)) throw FormatError("raw data size mismatch: " + data_path.string());
    out.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.values[i] = get<float>(bytes, i * sizeof(float), false);
    return out;
}

void write_raw(const Geometry& g, std::span<const float> data, const fs::path& path, const std::string& stamp) {
    json j = geometry_to_json(g);
    j["description"] = stamp_text(stamp);
    j["format"] = "dilseg-raw";
    j["version"] = 1;
    j["dtype"] = "float32";
    j["data"] = raw_data_path(path).filename().string();
    write_all(path, j.dump(2) + "\n", false);
    std::string bytes(data.size() * sizeof(float), '\0');
    std::memcpy(bytes.data(), data.data(), bytes.size());
    write_all(raw_data_path(path), bytes, false);
}

RawVolume read_any(const fs::path& path) {
    switch (format_from_path(path)) {
        case VolumeFormat::Nifti: return read_nifti(path, false);
        case VolumeFormat::NiftiGz: return read_nifti(path, true);
        case VolumeFormat::RawJson: return read_raw(path);
    }
    throw FormatError("unreachable");
}

void write_any(const Geometry& g, std::span<const float> data, const fs::path& path, const std::string& stamp) {
    switch (format_from_path(path)) {
        case VolumeFormat::Nifti: return write_nifti(g, data, path, false, stamp);
        case VolumeFormat::NiftiGz: return write_nifti(g, data, path, true, stamp);
        case VolumeFormat::RawJson: return write_raw(g, data, path, stamp);
    }
}

}  // namespace

template <typename Tag>
Volume<Tag> reorient_canonical(const Volume<Tag>& volume) {
    const Geometry& g = volume.geometry();
    // Pick the axis permutation maximising total alignment with world axes.
    static constexpr int kPerms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    int best = 0;
    double best_score = -1.0;
    for (int p = 0; p < 6; ++p) {
        double score = 0;
        for (int k = 0; k < 3; ++k) score += std::abs(g.direction[3 * k + kPerms[p][k]]);
        if (score > best_score + 1e-12) {
            best_score = score;
            best = p;
        }
    }
    const int* world_of = kPerms[best];  // data axis k -> world axis world_of[k]
    bool flip[3];
    bool identity = true;
    for (int k = 0; k < 3; ++k) {
        flip[k] = g.direction[3 * k + world_of[k]] < 0;
        identity = identity && !flip[k] && world_of[k] == k;
    }
    if (identity) return volume;

    Geometry out;
    Vec3 start{};
    for (int k = 0; k < 3; ++k) {
        const int w = world_of[k];
        out.shape[w] = g.shape[k];
        out.spacing[w] = g.spacing[k];
        for (int r = 0; r < 3; ++r) out.direction[3 * w + r] = (flip[k] ? -1.0 : 1.0) * g.direction[3 * k + r];
        start[k] = flip[k] ? static_cast<double>(g.shape[k] - 1) : 0.0;
    }
    out.origin = voxel_to_world(g, start);
    Volume<Tag> result(out);
    for (std::int64_t z = 0; z < g.shape[2]; ++z) {
        for (std::int64_t y = 0; y < g.shape[1]; ++y) {
            for (std::int64_t x = 0; x < g.shape[0]; ++x) {
                const std::int64_t src[3] = {x, y, z};
                std::int64_t dst[3];
                for (int k = 0; k < 3; ++k) {
                    dst[world_of[k]] = flip[k] ? g.shape[k] - 1 - src[k] : src[k];
                }
                result.at(dst[0], dst[1], dst[2]) = volume.at(x, y, z);
            }
        }
    }
    return result;
}

template ScalarVolume reorient_canonical(const ScalarVolume&);
template LabelVolume reorient_canonical(const LabelVolume&);

ScalarVolume load_scalar_volume(const fs::path& path, LoadReport* report) {
    RawVolume raw = read_any(path);
    std::vector<float> values(raw.values.size());
    std::int64_t bad = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = raw.values[i];
        if (!std::isfinite(v)) {
            ++bad;
            values[i] = 0.0f;
        } else {
            values[i] = static_cast<float>(v);
        }
    }
    if (bad > 0) {
        std::cerr << "warning: " << path.string() << ": " << bad << " non-finite voxels replaced by 0\n";
    }
    if (report) report->non_finite_voxels = bad;
    return reorient_canonical(ScalarVolume(raw.geometry, std::move(values)));
}

LabelVolume load_label_volume(const fs::path& path) {
    RawVolume raw = read_any(path);
    std::int64_t non_finite = 0;
    std::int64_t non_integer = 0;
    std::int64_t negative = 0;
    std::vector<float> values(raw.values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = raw.values[i];
        if (!std::isfinite(v)) {
            ++non_finite;
        } else if (v != std::floor(v)) {
            ++non_integer;
        } else if (v < 0) {
            ++negative;
        }
        values[i] = static_cast<float>(v);
    }
    if (non_finite > 0) {
        throw ValidationError(path.string() + ": " + std::to_string(non_finite) + " non-finite voxels in label map");
    }
    if (non_integer > 0) {
        throw ValidationError(path.string() + ": non-integer label in " + std::to_string(non_integer) + " voxels");
    }
    if (negative > 0) {
        throw ValidationError(path.string() + ": negative label in " + std::to_string(negative) + " voxels");
    }
    return reorient_canonical(LabelVolume(raw.geometry, std::move(values)));
}

LabelVolume load_probability_volume(const fs::path& path) {
    RawVolume raw = read_any(path);
    std::vector<float> values(raw.values.size());
    std::int64_t bad = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = raw.values[i];
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) ++bad;
        values[i] = static_cast<float>(v);
    }
    if (bad > 0) {
        throw ValidationError(path.string() + ": " + std::to_string(bad) + " voxels outside [0, 1]");
    }
    return reorient_canonical(LabelVolume(raw.geometry, std::move(values)));
}

void save_volume(const ScalarVolume& volume, const fs::path& path, const std::string& stamp) {
    write_any(volume.geometry(), volume.data(), path, stamp);
}

void save_volume(const LabelVolume& volume, const fs::path& path, const std::string& stamp) {
    write_any(volume.geometry(), volume.data(), path, stamp);
}

}  // namespace dilseg
