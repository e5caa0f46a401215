#include <cmath>
#include <iostream>

#include "architectures.hpp"
#include "common.hpp"
#include "dilseg/error.hpp"

namespace dilseg::nn {

namespace F = torch::nn::functional;

namespace {

struct BottleneckImpl : tnn::Module {
    BottleneckImpl(std::int64_t in, std::int64_t mid, std::int64_t stride) {
        const std::int64_t out = mid * 4;
        c1 = register_module("c1", tnn::Conv2d(tnn::Conv2dOptions(in, mid, 1).bias(false)));
        b1 = register_module("b1", tnn::BatchNorm2d(mid));
        c2 = register_module("c2", tnn::Conv2d(tnn::Conv2dOptions(mid, mid, 3).stride(stride).padding(1).bias(false)));
        b2 = register_module("b2", tnn::BatchNorm2d(mid));
        c3 = register_module("c3", tnn::Conv2d(tnn::Conv2dOptions(mid, out, 1).bias(false)));
        b3 = register_module("b3", tnn::BatchNorm2d(out));
        if (stride != 1 || in != out) {
            down = register_module("down", tnn::Conv2d(tnn::Conv2dOptions(in, out, 1).stride(stride).bias(false)));
            down_bn = register_module("down_bn", tnn::BatchNorm2d(out));
        }
    }

    torch::Tensor forward(const torch::Tensor& x) {
        auto y = torch::relu(b1(c1(x)));
        y = torch::relu(b2(c2(y)));
        y = b3(c3(y));
        return torch::relu(y + (down ? down_bn(down(x)) : x));
    }

    tnn::Conv2d c1{nullptr}, c2{nullptr}, c3{nullptr}, down{nullptr};
    tnn::BatchNorm2d b1{nullptr}, b2{nullptr}, b3{nullptr}, down_bn{nullptr};
};
TORCH_MODULE(Bottleneck);

/// ResNet-50 topology (3-4-6-3 bottlenecks) with a width multiplier; base 64
/// gives the standard network.
struct BackboneImpl : tnn::Module {
    explicit BackboneImpl(std::int64_t in_channels, std::int64_t w) {
        stem = register_module(
            "stem", tnn::Conv2d(tnn::Conv2dOptions(in_channels, w, 7).stride(2).padding(3).bias(false)));
        stem_bn = register_module("stem_bn", tnn::BatchNorm2d(w));
        const int blocks[4] = {3, 4, 6, 3};
        std::int64_t in = w;
        for (int s = 0; s < 4; ++s) {
            tnn::Sequential layer;
            const std::int64_t mid = w << s;
            for (int b = 0; b < blocks[s]; ++b) {
                layer->push_back(Bottleneck(in, mid, b == 0 && s > 0 ? 2 : 1));
                in = mid * 4;
            }
            layers.push_back(register_module("layer" + std::to_string(s + 1), layer));
        }
    }

    /// Stem output (stride 2) followed by C2..C5.
    std::vector<torch::Tensor> forward(const torch::Tensor& x) {
        std::vector<torch::Tensor> out;
        auto h = torch::relu(stem_bn(stem(x)));
        out.push_back(h);
        h = F::max_pool2d(h, F::MaxPool2dFuncOptions(3).stride(2).padding(1));
        for (auto& l : layers) {
            h = l->forward(h);
            out.push_back(h);
        }
        return out;
    }

    tnn::Conv2d stem{nullptr};
    tnn::BatchNorm2d stem_bn{nullptr};
    std::vector<tnn::Sequential> layers;
};
TORCH_MODULE(Backbone);

tnn::Sequential head_tower(std::int64_t f, std::int64_t out, double final_bias) {
    tnn::Sequential s;
    for (int i = 0; i < 4; ++i) {
        s->push_back(tnn::Conv2d(tnn::Conv2dOptions(f, f, 3).padding(1)));
        s->push_back(tnn::Functional(torch::relu));
    }
    s->push_back(tnn::Conv2d(tnn::Conv2dOptions(f, out, 3).padding(1)));
    torch::NoGradGuard ng;
    for (auto& m : s->modules(false)) {
        if (auto* c = m->as<tnn::Conv2d>()) {
            tnn::init::normal_(c->weight, 0.0, 0.01);
            tnn::init::constant_(c->bias, 0.0);
        }
    }
    auto last = s[s->size() - 1]->as<tnn::Conv2d>();
    tnn::init::constant_(last->bias, final_bias);
    return s;
}

/// Anchor boxes (x0, y0, x1, y1) for pyramid levels P3..P5, ordered by
/// level, row, column, ratio, scale.
torch::Tensor make_anchors(const std::vector<std::pair<std::int64_t, std::int64_t>>& sizes) {
    const double ratios[3] = {0.5, 1.0, 2.0};
    const double scales[3] = {1.0, std::pow(2.0, 1.0 / 3.0), std::pow(2.0, 2.0 / 3.0)};
    std::vector<float> v;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
        const double stride = std::pow(2.0, static_cast<double>(k + 3));
        const double base = 4.0 * stride;
        for (std::int64_t y = 0; y < sizes[k].first; ++y) {
            for (std::int64_t x = 0; x < sizes[k].second; ++x) {
                const double cx = (x + 0.5) * stride, cy = (y + 0.5) * stride;
                for (double r : ratios) {
                    for (double s : scales) {
                        const double w = base * s / std::sqrt(r), h = base * s * std::sqrt(r);
                        v.push_back(static_cast<float>(cx - w / 2));
                        v.push_back(static_cast<float>(cy - h / 2));
                        v.push_back(static_cast<float>(cx + w / 2));
                        v.push_back(static_cast<float>(cy + h / 2));
                    }
                }
            }
        }
    }
    return torch::from_blob(v.data(), {static_cast<std::int64_t>(v.size() / 4), 4}, torch::kFloat32).clone();
}

float iou(const Detection& a, const Detection& b) {
    const float ix = std::max(0.0f, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
    const float iy = std::max(0.0f, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
    const float inter = ix * iy;
    const float ua = (a.x1 - a.x0) * (a.y1 - a.y0) + (b.x1 - b.x0) * (b.y1 - b.y0) - inter;
    return ua > 0 ? inter / ua : 0.0f;
}

class FPSNet : public SegNet {
public:
    static constexpr int kAnchorsPerCell = 9;

    explicit FPSNet(const NetworkSpec& spec) : SegNet(spec) {
        const std::int64_t w = spec.width();
        const std::int64_t f = 4 * w;
        backbone_ = register_module("backbone", Backbone(spec.in_channels, w));
        if (spec.backbone == dilseg::Backbone::PRETRAINED) {
            if (spec.backbone_weights && std::filesystem::exists(*spec.backbone_weights)) {
                torch::load(backbone_, spec.backbone_weights->string());
            } else {
                std::cerr << "warning: no pretrained backbone weights available; using a random backbone\n";
            }
        }
        if (spec.freeze_backbone) {
            for (auto& p : backbone_->parameters()) p.requires_grad_(false);
        }
        lat_.push_back(register_module("lat3", conv1x1(8 * w, f)));
        lat_.push_back(register_module("lat4", conv1x1(16 * w, f)));
        lat_.push_back(register_module("lat5", conv1x1(32 * w, f)));
        for (int k = 0; k < 3; ++k) {
            smooth_.push_back(register_module("smooth" + std::to_string(k + 3),
                                              tnn::Conv2d(tnn::Conv2dOptions(f, f, 3).padding(1))));
        }
        const double prior = 0.01;
        cls_ = register_module("cls_head", head_tower(f, kAnchorsPerCell, -std::log((1.0 - prior) / prior)));
        box_ = register_module("box_head", head_tower(f, kAnchorsPerCell * 4, 0.0));

        // Unet-shaped segmentation decoder over C5 -> C4 -> C3 -> C2 -> stem -> input size.
        const std::int64_t ch[5] = {8 * w, 4 * w, 2 * w, w, std::max<std::int64_t>(w / 2, 1)};
        const std::int64_t skip[4] = {16 * w, 8 * w, 4 * w, w};
        std::int64_t in = 32 * w;
        for (int i = 0; i < 5; ++i) {
            seg_up_.push_back(register_module("seg_up" + std::to_string(i), up2x(in, ch[i])));
            const std::int64_t cat = ch[i] + (i < 4 ? skip[i] : 0);
            seg_dec_.push_back(register_module("seg_dec" + std::to_string(i), DoubleConv(cat, ch[i])));
            in = ch[i];
        }
        seg_head_ = register_module("seg_head", conv1x1(ch[4], 1));
    }

    ForwardOutput forward(const torch::Tensor& x) override {
        check_input(x, 1);
        const std::int64_t S = spec_.fpsnet_size;
        auto xs = upsample_bilinear(x, {S, S});
        auto feats = backbone_->forward(xs);  // stem, C2, C3, C4, C5
        // FPN
        std::vector<torch::Tensor> p(3);
        p[2] = lat_[2](feats[4]);
        p[1] = lat_[1](feats[3]) + upsample_nearest(p[2], 2);
        p[0] = lat_[0](feats[2]) + upsample_nearest(p[1], 2);
        std::vector<torch::Tensor> cls, box;
        std::vector<std::pair<std::int64_t, std::int64_t>> sizes;
        const std::int64_t B = x.size(0);
        for (int k = 0; k < 3; ++k) {
            auto pk = smooth_[k](p[k]);
            sizes.emplace_back(pk.size(2), pk.size(3));
            cls.push_back(cls_->forward(pk).permute({0, 2, 3, 1}).reshape({B, -1}));
            box.push_back(box_->forward(pk).permute({0, 2, 3, 1}).reshape({B, -1, 4}));
        }
        ForwardOutput out;
        out.cls_logits = torch::cat(cls, 1);
        out.box_deltas = torch::cat(box, 1);
        out.anchors = make_anchors(sizes).to(x.device());

        auto h = feats[4];
        const int skip_idx[4] = {3, 2, 1, 0};
        for (int i = 0; i < 5; ++i) {
            h = seg_up_[i]->forward(h);
            if (i < 4) h = torch::cat({h, feats[skip_idx[i]]}, 1);
            h = seg_dec_[i]->forward(h);
        }
        out.seg_full = torch::sigmoid(seg_head_(h));
        out.detections = decode(out.cls_logits, out.box_deltas, out.anchors);

        auto seg = out.seg_full;
        if (!is_training()) seg = seg * box_mask(out.detections, S, x.device());
        out.main = F::adaptive_avg_pool2d(seg, F::AdaptiveAvgPool2dFuncOptions({x.size(2), x.size(3)}));
        return out;
    }

    torch::nn::Conv2d final_head() override { return seg_head_; }

private:
    std::vector<std::vector<Detection>> decode(const torch::Tensor& cls, const torch::Tensor& deltas,
                                               const torch::Tensor& anchors) const {
        torch::NoGradGuard ng;
        const float thr = spec_.fpsnet_score_threshold;
        auto scores = torch::sigmoid(cls).to(torch::kCPU).contiguous();
        auto d = deltas.to(torch::kCPU).contiguous();
        auto a = anchors.to(torch::kCPU).contiguous();
        const float max_dw = static_cast<float>(std::log(1000.0 / 16.0));
        std::vector<std::vector<Detection>> out(static_cast<std::size_t>(cls.size(0)));
        for (std::int64_t b = 0; b < cls.size(0); ++b) {
            auto sb = scores[b];
            auto keep = (sb > thr).nonzero().flatten();
            if (keep.numel() == 0) continue;
            auto kept_scores = sb.index_select(0, keep);
            auto order = std::get<1>(kept_scores.sort(0, true));
            const std::int64_t limit = std::min<std::int64_t>(order.numel(), 1000);
            std::vector<Detection> cand;
            for (std::int64_t i = 0; i < limit; ++i) {
                const std::int64_t idx = keep[order[i].item<std::int64_t>()].item<std::int64_t>();
                auto an = a[idx];
                auto dl = d[b][idx];
                const float ax0 = an[0].item<float>(), ay0 = an[1].item<float>();
                const float aw = an[2].item<float>() - ax0, ah = an[3].item<float>() - ay0;
                const float cx = ax0 + 0.5f * aw + dl[0].item<float>() * aw;
                const float cy = ay0 + 0.5f * ah + dl[1].item<float>() * ah;
                const float bw = aw * std::exp(std::min(dl[2].item<float>(), max_dw));
                const float bh = ah * std::exp(std::min(dl[3].item<float>(), max_dw));
                cand.push_back({cx - bw / 2, cy - bh / 2, cx + bw / 2, cy + bh / 2, sb[idx].item<float>()});
            }
            std::vector<Detection> kept;
            for (const auto& c : cand) {
                bool suppressed = false;
                for (const auto& k : kept) {
                    if (iou(c, k) > 0.5f) {
                        suppressed = true;
                        break;
                    }
                }
                if (!suppressed) kept.push_back(c);
                if (kept.size() >= 100) break;
            }
            out[static_cast<std::size_t>(b)] = std::move(kept);
        }
        return out;
    }

    static torch::Tensor box_mask(const std::vector<std::vector<Detection>>& dets, std::int64_t S,
                                  const torch::Device& device) {
        auto m = torch::zeros({static_cast<std::int64_t>(dets.size()), 1, S, S});
        auto acc = m.accessor<float, 4>();
        for (std::size_t b = 0; b < dets.size(); ++b) {
            for (const auto& d : dets[b]) {
                const auto x0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(d.x0)), 0, S);
                const auto y0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(d.y0)), 0, S);
                const auto x1 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::ceil(d.x1)), 0, S);
                const auto y1 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::ceil(d.y1)), 0, S);
                for (std::int64_t y = y0; y < y1; ++y) {
                    for (std::int64_t x = x0; x < x1; ++x) acc[static_cast<std::int64_t>(b)][0][y][x] = 1.0f;
                }
            }
        }
        return m.to(device);
    }

    Backbone backbone_{nullptr};
    std::vector<tnn::Conv2d> lat_;
    std::vector<tnn::Conv2d> smooth_;
    tnn::Sequential cls_{nullptr};
    tnn::Sequential box_{nullptr};
    std::vector<tnn::ConvTranspose2d> seg_up_;
    std::vector<DoubleConv> seg_dec_;
    tnn::Conv2d seg_head_{nullptr};
};

}  // namespace

SegNetPtr make_fpsnet(const NetworkSpec& spec) { return std::make_shared<FPSNet>(spec); }

}  // namespace dilseg::nn
