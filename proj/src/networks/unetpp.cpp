#include <map>

#include "architectures.hpp"
#include "common.hpp"

namespace dilseg::nn {

namespace {

/// Nested dense decoder: node X(i,j) at depth i concatenates X(i,0..j-1) with
/// the upsampled X(i+1,j-1). Every X(0,j), j >= 1, has its own head.
class UNetPP : public SegNet {
public:
    explicit UNetPP(const NetworkSpec& spec) : SegNet(spec) {
        const int L = spec.num_levels;
        const std::int64_t w = spec.width();
        for (int i = 0; i <= L; ++i) {
            const std::int64_t wi = w << i;
            const std::int64_t in = i == 0 ? spec.in_channels : (wi / 2);
            node_.insert_or_assign({i, 0}, register_module(name(i, 0), DoubleConv(in, wi)));
        }
        for (int j = 1; j <= L; ++j) {
            for (int i = 0; i + j <= L; ++i) {
                const std::int64_t wi = w << i;
                up_.insert_or_assign({i, j}, register_module("up_" + std::to_string(i) + "_" + std::to_string(j), up2x(wi * 2, wi)));
                node_.insert_or_assign({i, j}, register_module(name(i, j), DoubleConv(wi * (j + 1), wi)));
            }
        }
        for (int j = 1; j <= L; ++j) heads_.push_back(register_module("head" + std::to_string(j), conv1x1(w, 1)));
    }

    ForwardOutput forward(const torch::Tensor& x) override {
        const int L = spec_.num_levels;
        check_input(x, std::int64_t{1} << L);
        std::map<std::pair<int, int>, torch::Tensor> X;
        for (int i = 0; i <= L; ++i) X[{i, 0}] = node_.at({i, 0})(i == 0 ? x : max_pool(X[{i - 1, 0}], 2));
        for (int j = 1; j <= L; ++j) {
            for (int i = 0; i + j <= L; ++i) {
                std::vector<torch::Tensor> parts;
                for (int k = 0; k < j; ++k) parts.push_back(X[{i, k}]);
                parts.push_back(up_.at({i, j})(X[{i + 1, j - 1}]));
                X[{i, j}] = node_.at({i, j})(torch::cat(parts, 1));
            }
        }
        ForwardOutput out;
        for (int j = 1; j <= L; ++j) out.aux.push_back(torch::sigmoid(heads_[j - 1](X[{0, j}])));
        if (spec_.unetpp_inference == UnetppInference::LAST) {
            out.main = out.aux.back();
        } else {
            out.main = torch::stack(out.aux, 0).mean(0);
        }
        return out;
    }

    torch::nn::Conv2d final_head() override { return heads_.back(); }

private:
    static std::string name(int i, int j) { return "x_" + std::to_string(i) + "_" + std::to_string(j); }

    std::map<std::pair<int, int>, DoubleConv> node_;
    std::map<std::pair<int, int>, tnn::ConvTranspose2d> up_;
    std::vector<tnn::Conv2d> heads_;
};

}  // namespace

SegNetPtr make_unetpp(const NetworkSpec& spec) { return std::make_shared<UNetPP>(spec); }

}  // namespace dilseg::nn
