#pragma once

#include <random>

#include "dilseg/volume.hpp"

namespace fixture {

/// 16x16x8 grid with 1x1x3 mm voxels: 0.1 cc is 33.3 voxels, so random blobs
/// straddle the small-component threshold.
inline dilseg::Geometry small_grid() {
    dilseg::Geometry g;
    g.shape = {16, 16, 8};
    g.spacing = {1.0, 1.0, 3.0};
    return g;
}

inline void paint_box(dilseg::LabelVolume& v, std::mt19937_64& rng, float value) {
    std::uniform_int_distribution<int> px(0, 13), pz(0, 6), ext(2, 7), extz(1, 4);
    const int x0 = px(rng), y0 = px(rng), z0 = pz(rng);
    const int ex = ext(rng), ey = ext(rng), ez = extz(rng);
    for (int z = z0; z < std::min<int>(z0 + ez, 8); ++z)
        for (int y = y0; y < std::min(y0 + ey, 16); ++y)
            for (int x = x0; x < std::min(x0 + ex, 16); ++x) v.at(x, y, z) = value;
}

/// Random GT label map (0-3 lesions, later labels may overwrite earlier) and
/// a prediction made from a jittered copy plus spurious blobs and speckle.
inline std::pair<dilseg::LabelVolume, dilseg::LabelVolume> random_pair(std::mt19937_64& rng) {
    dilseg::LabelVolume gt(small_grid()), pred(small_grid());
    std::uniform_int_distribution<int> nles(0, 3), nfp(0, 3), shift(-1, 1);
    std::bernoulli_distribution keep(0.85), speckle(0.01);
    const int n = nles(rng);
    for (int k = 1; k <= n; ++k) paint_box(gt, rng, static_cast<float>(k));
    const int sx = shift(rng), sy = shift(rng);
    for (int z = 0; z < 8; ++z)
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) {
                const int u = x - sx, w = y - sy;
                if (u >= 0 && w >= 0 && u < 16 && w < 16 && gt.at(u, w, z) != 0 && keep(rng)) pred.at(x, y, z) = 1;
                if (speckle(rng)) pred.at(x, y, z) = 1;
            }
    const int extra = nfp(rng);
    for (int k = 0; k < extra; ++k) paint_box(pred, rng, 1.0f);
    return {gt, pred};
}

}  // namespace fixture
