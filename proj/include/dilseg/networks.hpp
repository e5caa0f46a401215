#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "dilseg/config.hpp"

namespace dilseg {

/// Box in input-pixel coordinates of the detection frame, [x0, x1) x [y0, y1).
struct Detection {
    float x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    float score = 0;
};

struct ForwardOutput {
    /// (B, 1, H, W) foreground probability at the input in-plane size.
    torch::Tensor main;
    /// MRRN-DS: the deep-supervision map. Unet++: every nested head.
    std::vector<torch::Tensor> aux;
    /// FPSnet only: per-sample detections above the score threshold.
    std::vector<std::vector<Detection>> detections;
    /// FPSnet training signals: (B, A) class logits, (B, A, 4) box deltas,
    /// (A, 4) anchors, (B, 1, S, S) segmentation probability before box masking.
    torch::Tensor cls_logits;
    torch::Tensor box_deltas;
    torch::Tensor anchors;
    torch::Tensor seg_full;
};

/// Uniform forward contract over every architecture.
class SegNet : public torch::nn::Module {
public:
    explicit SegNet(NetworkSpec spec) : spec_(std::move(spec)) {}
    ~SegNet() override = default;

    virtual ForwardOutput forward(const torch::Tensor& x) = 0;
    /// The 1x1 convolution producing the main logits.
    virtual torch::nn::Conv2d final_head() = 0;

    const NetworkSpec& spec() const { return spec_; }

protected:
    /// Throws ShapeError unless x is (B, in_channels, H, W) with H and W
    /// divisible by `multiple`.
    void check_input(const torch::Tensor& x, std::int64_t multiple) const;

    NetworkSpec spec_;
};

using SegNetPtr = std::shared_ptr<SegNet>;

/// Builds the network for a validated spec. Weight initialisation draws from
/// torch's global generator, so seed it first for reproducible weights.
SegNetPtr build_network(const NetworkSpec& spec);

/// Number of trainable scalars (parameters with requires_grad).
std::int64_t count_parameters(const torch::nn::Module& module);

/// Weights plus a JSON header (spec, spec hash, toolkit version, `meta`).
void save_checkpoint(const SegNetPtr& net, const std::filesystem::path& path, const Json& meta = Json::object());

struct LoadedCheckpoint {
    SegNetPtr net;
    Json header;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const std::string& device = "cpu");

torch::Device parse_device(const std::string& device);

}  // namespace dilseg
