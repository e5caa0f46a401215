#pragma once

#include <vector>

#include <torch/torch.h>

#include "dilseg/networks.hpp"

namespace dilseg {

inline constexpr double kDiceEpsilon = 1.0;

/// 1 - (2 sum(p t) + eps) / (sum p + sum t + eps), sums over the whole batch.
torch::Tensor soft_dice_loss(const torch::Tensor& pred, const torch::Tensor& target, double eps = kDiceEpsilon);

/// mu * L(main) + (1 - mu) * L(aux). With mu == 1 the auxiliary term is not
/// evaluated and the result is L(main) itself.
torch::Tensor combined_loss(const torch::Tensor& pred_main, const torch::Tensor& pred_aux,
                            const torch::Tensor& target, double mu, double eps = kDiceEpsilon);

/// Sigmoid focal loss summed over anchors with target >= 0 (-1 = ignore),
/// divided by max(1, number of positive anchors).
torch::Tensor focal_loss(const torch::Tensor& logits, const torch::Tensor& targets, double alpha = 0.25,
                         double gamma = 2.0);

/// Ground-truth boxes (x0, y0, x1, y1) of the 8-connected foreground regions
/// (value >= 0.5) of one (H, W) label plane.
std::vector<Detection> boxes_from_label(const torch::Tensor& label);

/// Encodes `boxes` relative to `anchors` as (dx, dy, log dw, log dh).
torch::Tensor encode_boxes(const torch::Tensor& anchors, const torch::Tensor& boxes);

/// RetinaNet anchor assignment: IoU >= 0.5 positive, < 0.4 negative, the
/// rest ignored; each GT box also claims its best anchor. Returns
/// (B, A) class targets and (B, A) matched GT index (-1 when unmatched).
std::pair<torch::Tensor, torch::Tensor> assign_anchors(const torch::Tensor& anchors,
                                                       const std::vector<std::vector<Detection>>& gt);

/// Focal classification loss plus smooth-L1 box regression on positives.
torch::Tensor detection_loss(const ForwardOutput& out, const std::vector<std::vector<Detection>>& gt);

/// Training loss of one batch for the spec's architecture: soft Dice (Unet,
/// ResUnet, MRRN), weighted main + auxiliary Dice (MRRN-DS), mean over nested
/// heads (Unet++), segmentation Dice plus weighted detection loss (FPSnet).
/// `target` is (B, 1, H, W); `target_full` is the (B, 1, S, S) FPSnet label.
struct BatchLoss {
    torch::Tensor total;
    torch::Tensor main_dice;  // soft Dice of the main output, detached
};
BatchLoss network_loss(const NetworkSpec& spec, const ForwardOutput& out, const torch::Tensor& target,
                       const torch::Tensor& target_full, double mu, double eps, double detection_weight);

}  // namespace dilseg
