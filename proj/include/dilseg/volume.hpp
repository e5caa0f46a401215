#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dilseg/error.hpp"

namespace dilseg {

using Index3 = std::array<std::int64_t, 3>;
using Vec3 = std::array<double, 3>;
/// Column-major 3x3 direction cosines: column k is the world direction of data axis k.
using Direction3 = std::array<double, 9>;

inline constexpr Direction3 kIdentityDirection{1, 0, 0, 0, 1, 0, 0, 0, 1};

/// Grid geometry shared by image and label volumes. Axis 0 is x (columns),
/// axis 1 is y (rows), axis 2 is the axial slice index (inferior to superior
/// after canonical reorientation).
struct Geometry {
    Index3 shape{0, 0, 0};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};
    Direction3 direction = kIdentityDirection;

    std::int64_t voxel_count() const { return shape[0] * shape[1] * shape[2]; }
    double voxel_volume_mm3() const { return spacing[0] * spacing[1] * spacing[2]; }
    bool operator==(const Geometry&) const = default;
};

void validate_geometry(const Geometry& geo);

struct ScalarTag {};
struct LabelTag {};

/// Dense 3D grid of float values, x fastest. The tag separates intensity
/// images from label maps at the type level.
template <typename Tag>
class Volume {
public:
    Volume() = default;

    explicit Volume(Geometry geo, float fill = 0.0f) : geo_(geo) {
        validate_geometry(geo_);
        data_.assign(static_cast<std::size_t>(geo_.voxel_count()), fill);
    }

    Volume(Geometry geo, std::vector<float> data) : geo_(geo), data_(std::move(data)) {
        validate_geometry(geo_);
        if (static_cast<std::int64_t>(data_.size()) != geo_.voxel_count()) {
            throw ShapeError("volume data size does not match declared grid dimensions");
        }
    }

    const Geometry& geometry() const { return geo_; }
    const Index3& shape() const { return geo_.shape; }
    const Vec3& spacing() const { return geo_.spacing; }
    std::int64_t nx() const { return geo_.shape[0]; }
    std::int64_t ny() const { return geo_.shape[1]; }
    std::int64_t nz() const { return geo_.shape[2]; }
    std::size_t size() const { return data_.size(); }

    std::size_t index(std::int64_t x, std::int64_t y, std::int64_t z) const {
        return static_cast<std::size_t>(x + geo_.shape[0] * (y + geo_.shape[1] * z));
    }
    bool contains(std::int64_t x, std::int64_t y, std::int64_t z) const {
        return x >= 0 && y >= 0 && z >= 0 && x < geo_.shape[0] && y < geo_.shape[1] &&
               z < geo_.shape[2];
    }

    float& at(std::int64_t x, std::int64_t y, std::int64_t z) { return data_[index(x, y, z)]; }
    float at(std::int64_t x, std::int64_t y, std::int64_t z) const { return data_[index(x, y, z)]; }
    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }
    std::vector<float>& values() { return data_; }
    const std::vector<float>& values() const { return data_; }

    void set_geometry_keep_data(const Geometry& geo) {
        validate_geometry(geo);
        if (geo.voxel_count() != static_cast<std::int64_t>(data_.size())) {
            throw ShapeError("geometry voxel count does not match data");
        }
        geo_ = geo;
    }

    /// Same geometry, different tag.
    template <typename OtherTag>
    Volume<OtherTag> retag() const {
        return Volume<OtherTag>(geo_, data_);
    }

private:
    Geometry geo_{};
    std::vector<float> data_;
};

using ScalarVolume = Volume<ScalarTag>;
using LabelVolume = Volume<LabelTag>;

/// Physical position of the centre of voxel (i, j, k).
Vec3 voxel_to_world(const Geometry& geo, const Vec3& ijk);

/// Distinct non-zero label values in ascending order.
std::vector<int> label_ids(const LabelVolume& mask);

}  // namespace dilseg
