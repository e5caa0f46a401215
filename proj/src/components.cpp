#include "dilseg/components.hpp"

#include <algorithm>
#include <deque>

namespace dilseg {

namespace {

std::vector<std::array<int, 3>> offsets(Connectivity conn) {
    std::vector<std::array<int, 3>> out;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int order = std::abs(dx) + std::abs(dy) + std::abs(dz);
                if (order == 0) continue;
                if (conn == Connectivity::Face && order > 1) continue;
                if (conn == Connectivity::Edge && order > 2) continue;
                out.push_back({dx, dy, dz});
            }
    return out;
}

template <typename SameClass>
std::vector<Component> label(const LabelVolume& vol, Connectivity conn, const std::vector<char>& fg,
                             SameClass same) {
    const auto nbrs = offsets(conn);
    const std::int64_t nx = vol.nx(), ny = vol.ny(), nz = vol.nz();
    std::vector<int> comp(vol.size(), 0);
    std::vector<Component> out;
    std::deque<std::size_t> queue;
    for (std::size_t seed = 0; seed < vol.size(); ++seed) {
        if (!fg[seed] || comp[seed] != 0) continue;
        Component c;
        c.id = static_cast<int>(out.size()) + 1;
        c.value = vol[seed];
        comp[seed] = c.id;
        queue.push_back(seed);
        while (!queue.empty()) {
            const std::size_t v = queue.front();
            queue.pop_front();
            c.voxels.push_back(v);
            const auto x = static_cast<std::int64_t>(v % nx);
            const auto y = static_cast<std::int64_t>((v / nx) % ny);
            const auto z = static_cast<std::int64_t>(v / (nx * ny));
            for (const auto& d : nbrs) {
                const std::int64_t xx = x + d[0], yy = y + d[1], zz = z + d[2];
                if (xx < 0 || yy < 0 || zz < 0 || xx >= nx || yy >= ny || zz >= nz) continue;
                const std::size_t w = vol.index(xx, yy, zz);
                if (!fg[w] || comp[w] != 0 || !same(seed, w)) continue;
                comp[w] = c.id;
                queue.push_back(w);
            }
        }
        std::sort(c.voxels.begin(), c.voxels.end());
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace

std::vector<Component> connected_components(const LabelVolume& labels, Connectivity conn) {
    std::vector<char> fg(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) fg[i] = labels[i] != 0.0f;
    return label(labels, conn, fg, [&](std::size_t a, std::size_t b) { return labels[a] == labels[b]; });
}

std::vector<Component> foreground_components(const LabelVolume& mask, float threshold, Connectivity conn) {
    std::vector<char> fg(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) fg[i] = mask[i] > threshold;
    auto comps = label(mask, conn, fg, [](std::size_t, std::size_t) { return true; });
    for (auto& c : comps) c.value = 1.0f;
    return comps;
}

}  // namespace dilseg
