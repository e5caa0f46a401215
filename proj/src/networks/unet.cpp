#include "unet.hpp"

#include "architectures.hpp"

namespace dilseg::nn {

UNetLike::UNetLike(const NetworkSpec& spec, bool residual) : SegNet(spec) {
    const int L = spec.num_levels;
    const std::int64_t w = spec.width();
    auto block = [&](std::int64_t in, std::int64_t out) {
        return residual ? tnn::Sequential(ResidualUnit(in, out)) : tnn::Sequential(DoubleConv(in, out));
    };
    std::int64_t in = spec.in_channels;
    for (int l = 0; l <= L; ++l) {
        const std::int64_t out = w << l;
        enc_.push_back(register_module("enc" + std::to_string(l), block(in, out)));
        in = out;
    }
    for (int l = L - 1; l >= 0; --l) {
        const std::int64_t out = w << l;
        up_.push_back(register_module("up" + std::to_string(l), up2x(out * 2, out)));
        dec_.push_back(register_module("dec" + std::to_string(l), block(out * 2, out)));
    }
    head_ = register_module("head", conv1x1(w, 1));
}

ForwardOutput UNetLike::forward(const torch::Tensor& x) {
    const int L = spec_.num_levels;
    check_input(x, std::int64_t{1} << L);
    std::vector<torch::Tensor> skips;
    auto h = x;
    for (int l = 0; l <= L; ++l) {
        if (l > 0) h = max_pool(h, 2);
        h = enc_[l]->forward(h);
        if (l < L) skips.push_back(h);
    }
    for (int i = 0; i < L; ++i) {
        h = up_[i]->forward(h);
        h = dec_[i]->forward(torch::cat({h, skips[L - 1 - i]}, 1));
    }
    ForwardOutput out;
    out.main = torch::sigmoid(head_(h));
    return out;
}

SegNetPtr make_unet(const NetworkSpec& spec) { return std::make_shared<UNetLike>(spec, false); }

}  // namespace dilseg::nn
