#pragma once

#include <vector>

#include "common.hpp"
#include "dilseg/networks.hpp"

namespace dilseg::nn {

/// Encoder-decoder with skip concatenations; plain double-conv blocks (Unet)
/// or residual units (ResUnet).
class UNetLike : public SegNet {
public:
    UNetLike(const NetworkSpec& spec, bool residual);
    ForwardOutput forward(const torch::Tensor& x) override;
    torch::nn::Conv2d final_head() override { return head_; }

private:
    std::vector<tnn::Sequential> enc_;
    std::vector<tnn::ConvTranspose2d> up_;
    std::vector<tnn::Sequential> dec_;
    tnn::Conv2d head_{nullptr};
};

}  // namespace dilseg::nn
