#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dilseg/preprocess.hpp"

namespace dilseg {

/// Which in-plane augmentations to draw, and their ranges.
struct AugmentConfig {
    bool flip = true;
    bool scale = true;
    bool rotate = true;
    bool elastic = true;
    double flip_probability = 0.5;
    double scale_min = 0.9;
    double scale_max = 1.1;
    double rotate_max_deg = 10.0;
    double elastic_probability = 0.5;
    double elastic_alpha = 20.0;  // displacement magnitude, pixels
    double elastic_sigma = 5.0;   // Gaussian smoothing of the random field, pixels

    bool any() const { return flip || scale || rotate || elastic; }
    void validate() const;
};

/// One drawn transform. Output pixel p samples the input at
/// flip(R^-1 (p - c) / scale + c) + displacement(p), c the plane centre.
struct AugmentParams {
    bool flip = false;
    double scale = 1.0;
    double angle_deg = 0.0;
    std::int64_t width = 0;
    std::int64_t height = 0;
    std::vector<float> dx;  // empty when no elastic component
    std::vector<float> dy;

    bool identity() const { return !flip && scale == 1.0 && angle_deg == 0.0 && dx.empty(); }
};

AugmentParams draw_augment_params(const AugmentConfig& cfg, std::int64_t width, std::int64_t height,
                                  std::mt19937_64& rng);

/// Applies the same transform to every image channel (bilinear) and to the
/// label (nearest neighbour). Outside samples read 0.
void apply_augment(SliceStack& image, Plane& label, const AugmentParams& params);

void augment_sample(SliceStack& image, Plane& label, const AugmentConfig& cfg, std::mt19937_64& rng);

}  // namespace dilseg
