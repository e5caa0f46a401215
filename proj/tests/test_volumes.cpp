#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "dilseg/components.hpp"
#include "dilseg/error.hpp"
#include "dilseg/manifest.hpp"
#include "dilseg/volume_io.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace dilseg;

namespace {

fs::path scratch(const std::string& name) {
    auto d = fs::temp_directory_path() / ("dilseg_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

Geometry oblique() {
    Geometry g;
    g.shape = {7, 5, 4};
    g.spacing = {0.7, 0.9, 3.1};
    g.origin = {-12.5, 4.25, 100.0};
    return g;
}

}  // namespace

TEST(VolumeIo, RoundTripAllFormatsKeepsGeometryAndValues) {
    const auto dir = scratch("io");
    ScalarVolume v(oblique());
    std::mt19937_64 rng(3);
    std::normal_distribution<float> nd(1000.0f, 200.0f);
    for (auto& x : v.data()) x = nd(rng);
    for (const char* name : {"a.nii", "a.nii.gz", "a.json"}) {
        save_volume(v, dir / name);
        const auto back = load_scalar_volume(dir / name);
        EXPECT_EQ(back.geometry(), v.geometry()) << name;
        for (std::size_t i = 0; i < v.size(); ++i) ASSERT_EQ(back[i], v[i]) << name;
    }
}

TEST(VolumeIo, NonFiniteImageVoxelsAreZeroedAndCounted) {
    const auto dir = scratch("nan");
    ScalarVolume v(oblique(), 5.0f);
    v[3] = std::numeric_limits<float>::quiet_NaN();
    v[9] = std::numeric_limits<float>::infinity();
    save_volume(v, dir / "v.nii.gz");
    LoadReport rep;
    const auto back = load_scalar_volume(dir / "v.nii.gz", &rep);
    EXPECT_EQ(rep.non_finite_voxels, 2);
    EXPECT_EQ(back[3], 0.0f);
    EXPECT_EQ(back[9], 0.0f);
}

TEST(VolumeIo, LabelLoaderRejectsNonIntegerAndNegative) {
    const auto dir = scratch("labels");
    ScalarVolume v(oblique(), 0.0f);
    v[0] = 0.5f;
    save_volume(v, dir / "half.nii.gz");
    EXPECT_THROW(load_label_volume(dir / "half.nii.gz"), ValidationError);
    v[0] = -1.0f;
    save_volume(v, dir / "neg.nii.gz");
    EXPECT_THROW(load_label_volume(dir / "neg.nii.gz"), ValidationError);
    EXPECT_THROW(load_scalar_volume(dir / "missing.nii.gz"), IoError);
}

TEST(VolumeIo, CanonicalReorientationOnlyPermutesValues) {
    Geometry g = oblique();
    // x points along -y, y along +x, z flipped.
    g.direction = {0, -1, 0, 1, 0, 0, 0, 0, -1};
    ScalarVolume v(g);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i);
    const auto c = reorient_canonical(v);
    EXPECT_EQ(c.geometry().direction, kIdentityDirection);
    std::vector<float> a(v.data().begin(), v.data().end()), b(c.data().begin(), c.data().end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
    // Every voxel keeps its world position.
    for (std::int64_t z = 0; z < v.nz(); ++z)
        for (std::int64_t y = 0; y < v.ny(); ++y)
            for (std::int64_t x = 0; x < v.nx(); ++x) {
                const auto w = voxel_to_world(g, {double(x), double(y), double(z)});
                bool found = false;
                for (std::int64_t k = 0; k < c.nz() && !found; ++k)
                    for (std::int64_t j = 0; j < c.ny() && !found; ++j)
                        for (std::int64_t i = 0; i < c.nx() && !found; ++i) {
                            const auto u = voxel_to_world(c.geometry(), {double(i), double(j), double(k)});
                            if (std::abs(u[0] - w[0]) + std::abs(u[1] - w[1]) + std::abs(u[2] - w[2]) < 1e-9) {
                                found = true;
                                EXPECT_EQ(c.at(i, j, k), v.at(x, y, z));
                            }
                        }
                ASSERT_TRUE(found);
            }
}

TEST(Components, MatchFloodFillOracle) {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 50; ++t) {
        auto [gt, pred] = fixture::random_pair(rng);
        const auto lab = oracle::flood_fill(oracle::to_grid(pred));
        const auto comps = foreground_components(pred);
        for (const auto& c : comps)
            for (std::size_t v : c.voxels) ASSERT_EQ(lab[v], c.id);
        std::size_t total = 0;
        for (const auto& c : comps) total += c.voxels.size();
        EXPECT_EQ(total, static_cast<std::size_t>(std::count_if(lab.begin(), lab.end(), [](int x) { return x; })));
    }
}

TEST(Components, ConnectivityChangesDiagonalMerging) {
    Geometry g;
    g.shape = {3, 3, 3};
    LabelVolume m(g);
    m.at(0, 0, 0) = 1;
    m.at(1, 1, 0) = 1;  // edge neighbour
    m.at(2, 2, 1) = 1;  // corner neighbour of (1,1,0)
    EXPECT_EQ(foreground_components(m, 0.0f, Connectivity::Face).size(), 3u);
    EXPECT_EQ(foreground_components(m, 0.0f, Connectivity::Edge).size(), 2u);
    EXPECT_EQ(foreground_components(m, 0.0f, Connectivity::Corner).size(), 1u);
}

TEST(Manifest, RoundTripAndVolumes) {
    const auto dir = scratch("manifest");
    Geometry g;
    g.shape = {10, 10, 4};
    g.spacing = {1.0, 1.0, 2.5};
    ScalarVolume img(g, 1.0f);
    LabelVolume mask(g);
    for (int x = 0; x < 4; ++x) mask.at(x, 0, 0) = 2;
    save_volume(img, dir / "img.nii.gz");
    save_volume(mask, dir / "mask.nii.gz");
    CaseManifest c;
    c.case_id = "p1";
    c.patient_id = "p1";
    c.image_path = dir / "img.nii.gz";
    c.mask_path = dir / "mask.nii.gz";
    c.lesions.push_back({2, Gleason::parse("4+3"), Zone::PZ, std::nullopt});
    attach_lesion_volumes(c, mask);
    EXPECT_DOUBLE_EQ(*c.lesions[0].volume_cc, 4 * 2.5 / 1000.0);
    save_manifest({c}, dir / "manifest.json");
    const auto back = load_manifest(dir / "manifest.json");
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0].lesions, c.lesions);
    EXPECT_EQ(fs::weakly_canonical(back[0].image_path), fs::weakly_canonical(c.image_path));
    EXPECT_THROW(Gleason::parse("3-4"), ValidationError);
    EXPECT_THROW(lesion_volume_cc(mask, 7), Error);
}
