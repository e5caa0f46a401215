#include "common.hpp"

#include "dilseg/error.hpp"
#include "dilseg/networks.hpp"

namespace dilseg {

void SegNet::check_input(const torch::Tensor& x, std::int64_t multiple) const {
    if (x.dim() != 4) throw ShapeError("network input must be (B, C, H, W), got " + std::to_string(x.dim()) + " dims");
    if (x.size(1) != spec_.in_channels) {
        throw ShapeError("network expects " + std::to_string(spec_.in_channels) + " channels, got " +
                         std::to_string(x.size(1)));
    }
    if (x.size(2) % multiple != 0 || x.size(3) % multiple != 0) {
        throw ShapeError("input in-plane size must be divisible by " + std::to_string(multiple));
    }
}

}  // namespace dilseg

namespace dilseg::nn {

namespace F = torch::nn::functional;

ConvBnReluImpl::ConvBnReluImpl(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride) {
    conv = register_module(
        "conv", tnn::Conv2d(tnn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2).bias(false)));
    bn = register_module("bn", tnn::BatchNorm2d(out));
}

torch::Tensor ConvBnReluImpl::forward(const torch::Tensor& x) { return torch::relu(bn(conv(x))); }

DoubleConvImpl::DoubleConvImpl(std::int64_t in, std::int64_t out) {
    a = register_module("a", ConvBnRelu(in, out));
    b = register_module("b", ConvBnRelu(out, out));
}

torch::Tensor DoubleConvImpl::forward(const torch::Tensor& x) { return b(a(x)); }

ResidualUnitImpl::ResidualUnitImpl(std::int64_t in, std::int64_t out) {
    c1 = register_module("c1", tnn::Conv2d(tnn::Conv2dOptions(in, out, 3).padding(1).bias(false)));
    b1 = register_module("b1", tnn::BatchNorm2d(out));
    c2 = register_module("c2", tnn::Conv2d(tnn::Conv2dOptions(out, out, 3).padding(1).bias(false)));
    b2 = register_module("b2", tnn::BatchNorm2d(out));
    if (in != out) {
        proj = register_module("proj", tnn::Conv2d(tnn::Conv2dOptions(in, out, 1).bias(false)));
        proj_bn = register_module("proj_bn", tnn::BatchNorm2d(out));
    }
}

torch::Tensor ResidualUnitImpl::forward(const torch::Tensor& x) {
    auto y = b2(c2(torch::relu(b1(c1(x)))));
    auto shortcut = proj ? proj_bn(proj(x)) : x;
    return torch::relu(y + shortcut);
}

tnn::Conv2d conv1x1(std::int64_t in, std::int64_t out, bool bias) {
    return tnn::Conv2d(tnn::Conv2dOptions(in, out, 1).bias(bias));
}

tnn::ConvTranspose2d up2x(std::int64_t in, std::int64_t out) {
    return tnn::ConvTranspose2d(tnn::ConvTranspose2dOptions(in, out, 2).stride(2));
}

torch::Tensor max_pool(const torch::Tensor& x, std::int64_t factor) {
    if (factor == 1) return x;
    return F::max_pool2d(x, F::MaxPool2dFuncOptions(factor).stride(factor));
}

torch::Tensor upsample_nearest(const torch::Tensor& x, std::int64_t factor) {
    if (factor == 1) return x;
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .size(std::vector<std::int64_t>{x.size(2) * factor, x.size(3) * factor})
                                 .mode(torch::kNearest));
}

torch::Tensor upsample_bilinear(const torch::Tensor& x, std::vector<std::int64_t> size) {
    if (x.size(2) == size[0] && x.size(3) == size[1]) return x;
    return F::interpolate(x, F::InterpolateFuncOptions().size(size).mode(torch::kBilinear).align_corners(false));
}

}  // namespace dilseg::nn
