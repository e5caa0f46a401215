#pragma once

#include <cstdint>
#include <vector>

#include "dilseg/volume.hpp"

namespace dilseg {

/// Neighbourhood used for connected components: 6/18/26 in 3D.
enum class Connectivity { Face = 6, Edge = 18, Corner = 26 };

struct Component {
    int id = 0;                          // 1-based, in raster order of first voxel
    float value = 0.0f;                  // source label value shared by the component
    std::vector<std::size_t> voxels;     // linear indices, ascending
};

/// Connected components of voxels that share the same non-zero value.
/// Components are numbered in order of their first voxel in raster order,
/// so labelling is deterministic.
std::vector<Component> connected_components(const LabelVolume& labels, Connectivity conn = Connectivity::Corner);

/// Components of the binary foreground `value > threshold` (all non-zero
/// values merge).
std::vector<Component> foreground_components(const LabelVolume& mask, float threshold = 0.0f,
                                             Connectivity conn = Connectivity::Corner);

}  // namespace dilseg
