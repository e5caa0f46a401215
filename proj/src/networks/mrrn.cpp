#include <set>

#include "architectures.hpp"
#include "common.hpp"

namespace dilseg::nn {

namespace {

/// Block at resolution level `level`. Concatenates its input with the
/// max-pooled features of the streams it reads, and adds a 1x1 projection of
/// its output, upsampled, into the streams it writes.
struct MRRBlockImpl : tnn::Module {
    MRRBlockImpl(int level, std::int64_t in, std::int64_t out, std::vector<int> reads, std::vector<int> writes,
                 const std::vector<std::int64_t>& stream_channels)
        : level_(level), reads_(std::move(reads)), writes_(std::move(writes)) {
        std::int64_t total_in = in;
        for (int s : reads_) total_in += stream_channels[s];
        c1_ = register_module("c1", ConvBnRelu(total_in, out));
        c2_ = register_module("c2", ConvBnRelu(out, out));
        for (int s : writes_) {
            writers_.push_back(register_module("write" + std::to_string(s), conv1x1(out, stream_channels[s])));
        }
    }

    torch::Tensor forward(const torch::Tensor& x, std::vector<torch::Tensor>& streams) {
        std::vector<torch::Tensor> parts{x};
        for (int s : reads_) parts.push_back(max_pool(streams[s], std::int64_t{1} << (level_ - s)));
        auto y = c2_(c1_(parts.size() == 1 ? x : torch::cat(parts, 1)));
        for (std::size_t k = 0; k < writes_.size(); ++k) {
            const int s = writes_[k];
            streams[s] = streams[s] + upsample_nearest(writers_[k](y), std::int64_t{1} << (level_ - s));
        }
        return y;
    }

    int level_;
    std::vector<int> reads_;
    std::vector<int> writes_;
    ConvBnRelu c1_{nullptr}, c2_{nullptr};
    std::vector<tnn::Conv2d> writers_;
};
TORCH_MODULE(MRRBlock);

/// Residual feature streams start at each encoder resolution (levels
/// 0..L-1) from that level's encoder output and run through every later block
/// whose resolution they can be pooled to. A block only writes streams that a
/// later block reads. The full-resolution decoder output is combined with
/// stream 0 by a final residual unit.
class MRRN : public SegNet {
public:
    explicit MRRN(const NetworkSpec& spec) : SegNet(spec) {
        const int L = spec.num_levels;
        const std::int64_t w = spec.width();
        for (int l = 0; l < L; ++l) {
            const bool on = spec.ablation == Ablation::NONE ||
                            (spec.ablation == Ablation::DROP_FULLRES_STREAM && l > 0) ||
                            (spec.ablation == Ablation::KEEP_ONLY_FULLRES_STREAM && l == 0);
            if (on) active_.insert(l);
            stream_ch_.push_back(w << l);
        }
        auto below = [&](int level) {
            std::vector<int> s;
            for (int a : active_) {
                if (a < level) s.push_back(a);
            }
            return s;
        };
        first_ = register_module("enc0", DoubleConv(spec.in_channels, w));
        for (int l = 1; l <= L; ++l) {
            const std::int64_t wl = w << l;
            enc_.push_back(register_module("enc" + std::to_string(l),
                                           MRRBlock(l, wl / 2, wl, below(l), below(l), stream_ch_)));
        }
        for (int l = L - 1; l >= 0; --l) {
            const std::int64_t wl = w << l;
            auto reads = below(l);
            if (active_.count(l)) reads.push_back(l);
            // stream 0 also feeds the final residual unit
            auto writes = l == 0 ? reads : below(l);
            up_.push_back(register_module("up" + std::to_string(l), up2x(wl * 2, wl)));
            dec_.push_back(register_module("dec" + std::to_string(l), MRRBlock(l, wl * 2, wl, reads, writes, stream_ch_)));
        }
        const std::int64_t final_in = active_.count(0) ? 2 * w : w;
        fc1_ = register_module("final_c1", ConvBnRelu(final_in, w));
        fc2_ = register_module("final_c2", tnn::Conv2d(tnn::Conv2dOptions(w, w, 3).padding(1).bias(false)));
        fbn_ = register_module("final_bn", tnn::BatchNorm2d(w));
        head_ = register_module("head", conv1x1(w, 1));
        if (spec.arch == Architecture::MRRN_DS) {
            aux_head_ = register_module("aux_head", conv1x1(w << (spec.supervision_level - 1), 1));
        }
    }

    ForwardOutput forward(const torch::Tensor& x) override {
        const int L = spec_.num_levels;
        check_input(x, std::int64_t{1} << L);
        std::vector<torch::Tensor> streams(L);
        std::vector<torch::Tensor> skips;
        auto h = first_(x);
        skips.push_back(h);
        if (active_.count(0)) streams[0] = h;
        for (int l = 1; l <= L; ++l) {
            h = enc_[l - 1]->forward(max_pool(h, 2), streams);
            if (l < L) {
                skips.push_back(h);
                if (active_.count(l)) streams[l] = h;
            }
        }
        std::vector<torch::Tensor> dec_out(L);
        for (int i = 0; i < L; ++i) {
            const int l = L - 1 - i;
            h = up_[i]->forward(h);
            h = dec_[i]->forward(torch::cat({h, skips[l]}, 1), streams);
            dec_out[l] = h;
        }
        auto d0 = dec_out[0];
        auto mixed = active_.count(0) ? torch::cat({d0, streams[0]}, 1) : d0;
        auto f = torch::relu(d0 + fbn_(fc2_(fc1_(mixed))));
        ForwardOutput out;
        out.main = torch::sigmoid(head_(f));
        if (aux_head_) {
            auto tap = dec_out[spec_.supervision_level - 1];
            auto logits = upsample_bilinear(aux_head_(tap), {x.size(2), x.size(3)});
            out.aux.push_back(torch::sigmoid(logits));
        }
        return out;
    }

    torch::nn::Conv2d final_head() override { return head_; }

private:
    std::set<int> active_;
    std::vector<std::int64_t> stream_ch_;
    DoubleConv first_{nullptr};
    std::vector<MRRBlock> enc_;
    std::vector<tnn::ConvTranspose2d> up_;
    std::vector<MRRBlock> dec_;
    ConvBnRelu fc1_{nullptr};
    tnn::Conv2d fc2_{nullptr};
    tnn::BatchNorm2d fbn_{nullptr};
    tnn::Conv2d head_{nullptr};
    tnn::Conv2d aux_head_{nullptr};
};

}  // namespace

SegNetPtr make_mrrn(const NetworkSpec& spec) { return std::make_shared<MRRN>(spec); }

}  // namespace dilseg::nn
