#pragma once

#include <torch/torch.h>

namespace dilseg::nn {

namespace tnn = torch::nn;

/// conv (no bias) -> batch norm -> ReLU
struct ConvBnReluImpl : tnn::Module {
    ConvBnReluImpl(std::int64_t in, std::int64_t out, std::int64_t kernel = 3, std::int64_t stride = 1);
    torch::Tensor forward(const torch::Tensor& x);

    tnn::Conv2d conv{nullptr};
    tnn::BatchNorm2d bn{nullptr};
};
TORCH_MODULE(ConvBnRelu);

struct DoubleConvImpl : tnn::Module {
    DoubleConvImpl(std::int64_t in, std::int64_t out);
    torch::Tensor forward(const torch::Tensor& x);

    ConvBnRelu a{nullptr};
    ConvBnRelu b{nullptr};
};
TORCH_MODULE(DoubleConv);

/// Two 3x3 conv-bn layers with an identity (or 1x1 projection) shortcut.
struct ResidualUnitImpl : tnn::Module {
    ResidualUnitImpl(std::int64_t in, std::int64_t out);
    torch::Tensor forward(const torch::Tensor& x);

    tnn::Conv2d c1{nullptr}, c2{nullptr};
    tnn::BatchNorm2d b1{nullptr}, b2{nullptr};
    tnn::Conv2d proj{nullptr};
    tnn::BatchNorm2d proj_bn{nullptr};
};
TORCH_MODULE(ResidualUnit);

tnn::Conv2d conv1x1(std::int64_t in, std::int64_t out, bool bias = true);
tnn::ConvTranspose2d up2x(std::int64_t in, std::int64_t out);

torch::Tensor max_pool(const torch::Tensor& x, std::int64_t factor);
torch::Tensor upsample_nearest(const torch::Tensor& x, std::int64_t factor);
torch::Tensor upsample_bilinear(const torch::Tensor& x, std::vector<std::int64_t> size);

}  // namespace dilseg::nn
