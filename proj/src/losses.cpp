#include "dilseg/losses.hpp"

#include <queue>

#include "dilseg/error.hpp"

namespace dilseg {

namespace F = torch::nn::functional;

torch::Tensor soft_dice_loss(const torch::Tensor& pred, const torch::Tensor& target, double eps) {
    if (pred.sizes() != target.sizes()) throw ShapeError("soft_dice_loss: prediction and target shapes differ");
    auto inter = (pred * target).sum();
    auto denom = pred.sum() + target.sum();
    return 1.0 - (2.0 * inter + eps) / (denom + eps);
}

torch::Tensor combined_loss(const torch::Tensor& pred_main, const torch::Tensor& pred_aux, const torch::Tensor& target,
                            double mu, double eps) {
    if (pred_aux.sizes() != target.sizes()) throw ShapeError("combined_loss: auxiliary prediction shape differs");
    if (mu < 0.0 || mu > 1.0) throw ValidationError("combined_loss: mu must lie in [0,1]");
    auto main = soft_dice_loss(pred_main, target, eps);
    if (mu == 1.0) return main;
    return mu * main + (1.0 - mu) * soft_dice_loss(pred_aux, target, eps);
}

torch::Tensor focal_loss(const torch::Tensor& logits, const torch::Tensor& targets, double alpha, double gamma) {
    auto valid = targets >= 0;
    auto t = targets.clamp_min(0).to(logits.dtype());
    auto p = torch::sigmoid(logits);
    auto ce = F::binary_cross_entropy_with_logits(logits, t,
                                                  F::BinaryCrossEntropyWithLogitsFuncOptions().reduction(torch::kNone));
    auto p_t = p * t + (1 - p) * (1 - t);
    auto a_t = alpha * t + (1 - alpha) * (1 - t);
    auto loss = a_t * ce * (1 - p_t).pow(gamma);
    loss = torch::where(valid, loss, torch::zeros_like(loss));
    auto num_pos = (targets == 1).sum().clamp_min(1).to(logits.dtype());
    return loss.sum() / num_pos;
}

std::vector<Detection> boxes_from_label(const torch::Tensor& label) {
    if (label.dim() != 2) throw ShapeError("boxes_from_label expects an (H, W) plane");
    auto l = label.to(torch::kCPU).to(torch::kFloat32).contiguous();
    const std::int64_t h = l.size(0), w = l.size(1);
    auto acc = l.accessor<float, 2>();
    std::vector<char> seen(static_cast<std::size_t>(h * w), 0);
    std::vector<Detection> out;
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            if (acc[y][x] < 0.5f || seen[y * w + x]) continue;
            Detection d{static_cast<float>(x), static_cast<float>(y), static_cast<float>(x + 1),
                        static_cast<float>(y + 1), 1.0f};
            std::queue<std::pair<std::int64_t, std::int64_t>> q;
            q.push({x, y});
            seen[y * w + x] = 1;
            while (!q.empty()) {
                auto [cx, cy] = q.front();
                q.pop();
                d.x0 = std::min(d.x0, static_cast<float>(cx));
                d.y0 = std::min(d.y0, static_cast<float>(cy));
                d.x1 = std::max(d.x1, static_cast<float>(cx + 1));
                d.y1 = std::max(d.y1, static_cast<float>(cy + 1));
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const std::int64_t nx = cx + dx, ny = cy + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                        if (seen[ny * w + nx] || acc[ny][nx] < 0.5f) continue;
                        seen[ny * w + nx] = 1;
                        q.push({nx, ny});
                    }
                }
            }
            out.push_back(d);
        }
    }
    return out;
}

namespace {

torch::Tensor boxes_tensor(const std::vector<Detection>& boxes) {
    auto t = torch::empty({static_cast<std::int64_t>(boxes.size()), 4});
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        t[i][0] = boxes[i].x0;
        t[i][1] = boxes[i].y0;
        t[i][2] = boxes[i].x1;
        t[i][3] = boxes[i].y1;
    }
    return t;
}

torch::Tensor pairwise_iou(const torch::Tensor& a, const torch::Tensor& b) {
    auto area = [](const torch::Tensor& t) { return (t.select(1, 2) - t.select(1, 0)) * (t.select(1, 3) - t.select(1, 1)); };
    auto lt = torch::max(a.slice(1, 0, 2).unsqueeze(1), b.slice(1, 0, 2).unsqueeze(0));
    auto rb = torch::min(a.slice(1, 2, 4).unsqueeze(1), b.slice(1, 2, 4).unsqueeze(0));
    auto wh = (rb - lt).clamp_min(0);
    auto inter = wh.select(2, 0) * wh.select(2, 1);
    auto uni = area(a).unsqueeze(1) + area(b).unsqueeze(0) - inter;
    return inter / uni.clamp_min(1e-9);
}

}  // namespace

torch::Tensor encode_boxes(const torch::Tensor& anchors, const torch::Tensor& boxes) {
    auto aw = anchors.select(1, 2) - anchors.select(1, 0);
    auto ah = anchors.select(1, 3) - anchors.select(1, 1);
    auto ax = anchors.select(1, 0) + 0.5 * aw;
    auto ay = anchors.select(1, 1) + 0.5 * ah;
    auto bw = boxes.select(1, 2) - boxes.select(1, 0);
    auto bh = boxes.select(1, 3) - boxes.select(1, 1);
    auto bx = boxes.select(1, 0) + 0.5 * bw;
    auto by = boxes.select(1, 1) + 0.5 * bh;
    return torch::stack({(bx - ax) / aw, (by - ay) / ah, torch::log(bw / aw), torch::log(bh / ah)}, 1);
}

std::pair<torch::Tensor, torch::Tensor> assign_anchors(const torch::Tensor& anchors,
                                                       const std::vector<std::vector<Detection>>& gt) {
    auto a = anchors.to(torch::kCPU);
    const std::int64_t A = a.size(0);
    const auto B = static_cast<std::int64_t>(gt.size());
    auto cls = torch::zeros({B, A}, torch::kFloat32);
    auto matched = torch::full({B, A}, -1, torch::kLong);
    for (std::int64_t b = 0; b < B; ++b) {
        if (gt[b].empty()) continue;
        auto iou = pairwise_iou(a, boxes_tensor(gt[b]));  // (A, G)
        auto [best, idx] = iou.max(1);
        auto c = torch::full({A}, -1.0f);
        c.masked_fill_(best < 0.4, 0.0f);
        c.masked_fill_(best >= 0.5, 1.0f);
        auto m = torch::where(best >= 0.5, idx, torch::full_like(idx, -1));
        auto best_anchor = std::get<1>(iou.max(0));  // (G)
        for (std::int64_t g = 0; g < best_anchor.size(0); ++g) {
            const auto k = best_anchor[g].item<std::int64_t>();
            c[k] = 1.0f;
            m[k] = g;
        }
        cls[b] = c;
        matched[b] = m;
    }
    return {cls, matched};
}

torch::Tensor detection_loss(const ForwardOutput& out, const std::vector<std::vector<Detection>>& gt) {
    if (!out.cls_logits.defined()) throw ValidationError("detection_loss needs a detection network output");
    auto [cls, matched] = assign_anchors(out.anchors, gt);
    const auto device = out.cls_logits.device();
    auto cls_t = cls.to(device);
    auto loss = focal_loss(out.cls_logits, cls_t);
    auto anchors = out.anchors.to(torch::kCPU);
    auto box_loss = torch::zeros({}, out.box_deltas.options());
    std::int64_t num_pos = 0;
    for (std::size_t b = 0; b < gt.size(); ++b) {
        auto pos = (matched[static_cast<std::int64_t>(b)] >= 0).nonzero().flatten();
        if (pos.numel() == 0) continue;
        num_pos += pos.numel();
        auto gidx = matched[static_cast<std::int64_t>(b)].index_select(0, pos);
        auto targets = encode_boxes(anchors.index_select(0, pos), boxes_tensor(gt[b]).index_select(0, gidx));
        auto pred = out.box_deltas[static_cast<std::int64_t>(b)].index_select(0, pos.to(device));
        box_loss = box_loss + F::smooth_l1_loss(pred, targets.to(device),
                                                F::SmoothL1LossFuncOptions().reduction(torch::kSum).beta(1.0 / 9.0));
    }
    return loss + box_loss / static_cast<double>(std::max<std::int64_t>(1, num_pos));
}

BatchLoss network_loss(const NetworkSpec& spec, const ForwardOutput& out, const torch::Tensor& target,
                       const torch::Tensor& target_full, double mu, double eps, double detection_weight) {
    BatchLoss r;
    switch (spec.arch) {
        case Architecture::UNET:
        case Architecture::RESUNET:
        case Architecture::MRRN:
            r.total = soft_dice_loss(out.main, target, eps);
            r.main_dice = r.total.detach();
            break;
        case Architecture::MRRN_DS:
            r.total = combined_loss(out.main, out.aux.at(0), target, mu, eps);
            r.main_dice = soft_dice_loss(out.main, target, eps).detach();
            break;
        case Architecture::UNETPP: {
            torch::Tensor sum;
            for (const auto& head : out.aux) {
                auto l = soft_dice_loss(head, target, eps);
                sum = sum.defined() ? sum + l : l;
            }
            r.total = sum / static_cast<double>(out.aux.size());
            r.main_dice = soft_dice_loss(out.main, target, eps).detach();
            break;
        }
        case Architecture::FPSNET:
        case Architecture::FPSNET_SL: {
            auto seg = soft_dice_loss(out.seg_full, target_full, eps);
            std::vector<std::vector<Detection>> gt;
            for (std::int64_t b = 0; b < target_full.size(0); ++b) gt.push_back(boxes_from_label(target_full[b][0]));
            r.total = seg + detection_weight * detection_loss(out, gt);
            r.main_dice = seg.detach();
            break;
        }
    }
    return r;
}

}  // namespace dilseg
