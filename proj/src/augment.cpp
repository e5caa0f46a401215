#include "dilseg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dilseg/error.hpp"

namespace dilseg {

void AugmentConfig::validate() const {
    if (!(scale_min > 0 && scale_min <= scale_max)) throw ValidationError("augment: bad scale range");
    if (!(rotate_max_deg >= 0)) throw ValidationError("augment: rotation range must be >= 0");
    if (flip_probability < 0 || flip_probability > 1 || elastic_probability < 0 || elastic_probability > 1) {
        throw ValidationError("augment: probabilities must lie in [0,1]");
    }
    if (!(elastic_alpha >= 0 && elastic_sigma > 0)) throw ValidationError("augment: bad elastic parameters");
}

namespace {

std::vector<float> smoothed_field(std::int64_t w, std::int64_t h, double sigma, double alpha, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> f(static_cast<std::size_t>(w * h));
    for (auto& v : f) v = u(rng);
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        ksum += kernel[i + radius];
    }
    for (auto& k : kernel) k /= ksum;
    std::vector<double> tmp(f.size());
    // Separable blur with clamped borders.
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const std::int64_t xx = std::clamp<std::int64_t>(x + i, 0, w - 1);
                s += kernel[i + radius] * f[y * w + xx];
            }
            tmp[y * w + x] = s;
        }
    }
    std::vector<float> out(f.size());
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const std::int64_t yy = std::clamp<std::int64_t>(y + i, 0, h - 1);
                s += kernel[i + radius] * tmp[yy * w + x];
            }
            out[y * w + x] = static_cast<float>(alpha * s);
        }
    }
    return out;
}

double snap(double u) {
    const double r = std::round(u);
    return std::fabs(u - r) < 1e-9 ? r : u;
}

float sample_linear(const float* plane, std::int64_t w, std::int64_t h, double x, double y) {
    const double fx = std::floor(x), fy = std::floor(y);
    const auto x0 = static_cast<std::int64_t>(fx), y0 = static_cast<std::int64_t>(fy);
    const double tx = x - fx, ty = y - fy;
    auto px = [&](std::int64_t xi, std::int64_t yi) -> double {
        if (xi < 0 || yi < 0 || xi >= w || yi >= h) return 0.0;
        return plane[yi * w + xi];
    };
    const double a = px(x0, y0), b = px(x0 + 1, y0), c = px(x0, y0 + 1), d = px(x0 + 1, y0 + 1);
    const double top = tx == 0.0 ? a : a + tx * (b - a);
    const double bottom = tx == 0.0 ? c : c + tx * (d - c);
    return static_cast<float>(ty == 0.0 ? top : top + ty * (bottom - top));
}

}  // namespace

AugmentParams draw_augment_params(const AugmentConfig& cfg, std::int64_t width, std::int64_t height,
                                  std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    AugmentParams p;
    p.width = width;
    p.height = height;
    // Draws happen in a fixed order whether or not an operation is enabled so
    // that toggling one flag does not shift the others' random streams.
    const double flip_draw = u01(rng);
    const double scale_draw = u01(rng);
    const double angle_draw = u01(rng);
    const double elastic_draw = u01(rng);
    const std::uint64_t field_seed = rng();
    if (cfg.flip) p.flip = flip_draw < cfg.flip_probability;
    if (cfg.scale) p.scale = cfg.scale_min + (cfg.scale_max - cfg.scale_min) * scale_draw;
    if (cfg.rotate) p.angle_deg = -cfg.rotate_max_deg + 2.0 * cfg.rotate_max_deg * angle_draw;
    if (cfg.elastic && elastic_draw < cfg.elastic_probability && cfg.elastic_alpha > 0) {
        std::mt19937_64 field_rng(field_seed);
        p.dx = smoothed_field(width, height, cfg.elastic_sigma, cfg.elastic_alpha, field_rng);
        p.dy = smoothed_field(width, height, cfg.elastic_sigma, cfg.elastic_alpha, field_rng);
    }
    return p;
}

void apply_augment(SliceStack& image, Plane& label, const AugmentParams& params) {
    const std::int64_t w = image.width, h = image.height;
    if (label.width != w || label.height != h) throw ShapeError("augment: image and label planes differ in size");
    if (params.width != w || params.height != h) throw ShapeError("augment: parameters drawn for another size");
    if (params.identity()) return;
    const double cx = 0.5 * static_cast<double>(w - 1), cy = 0.5 * static_cast<double>(h - 1);
    const double theta = params.angle_deg * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    std::vector<double> src_x(static_cast<std::size_t>(w * h)), src_y(src_x.size());
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            const double px = static_cast<double>(x) - cx, py = static_cast<double>(y) - cy;
            // inverse rotation and scale
            double qx = (c * px + s * py) / params.scale + cx;
            double qy = (-s * px + c * py) / params.scale + cy;
            if (params.flip) qx = static_cast<double>(w - 1) - qx;
            const std::size_t i = static_cast<std::size_t>(y * w + x);
            if (!params.dx.empty()) {
                qx += params.dx[i];
                qy += params.dy[i];
            }
            src_x[i] = snap(qx);
            src_y[i] = snap(qy);
        }
    }
    std::vector<float> out(image.values.size());
    for (std::int64_t ch = 0; ch < image.channels; ++ch) {
        const float* plane = image.values.data() + ch * w * h;
        float* dst = out.data() + ch * w * h;
        for (std::size_t i = 0; i < src_x.size(); ++i) dst[i] = sample_linear(plane, w, h, src_x[i], src_y[i]);
    }
    image.values = std::move(out);
    std::vector<float> lab(label.values.size());
    for (std::size_t i = 0; i < src_x.size(); ++i) {
        const auto xi = static_cast<std::int64_t>(std::llround(src_x[i]));
        const auto yi = static_cast<std::int64_t>(std::llround(src_y[i]));
        lab[i] = (xi < 0 || yi < 0 || xi >= w || yi >= h) ? 0.0f : label.at(xi, yi);
    }
    label.values = std::move(lab);
}

void augment_sample(SliceStack& image, Plane& label, const AugmentConfig& cfg, std::mt19937_64& rng) {
    apply_augment(image, label, draw_augment_params(cfg, image.width, image.height, rng));
}

}  // namespace dilseg
