#include "dilseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "dilseg/error.hpp"
#include "dilseg/hashing.hpp"
#include "dilseg/version.hpp"

namespace dilseg {

namespace fs = std::filesystem;

SliceDataset::SliceDataset(const std::vector<TrainingCase>& cases, const NetworkSpec& spec, double input_scale)
    : cases_(cases), spec_(spec), input_scale_(input_scale), context_((spec.in_channels - 1) / 2) {
    for (std::size_t c = 0; c < cases.size(); ++c) {
        const auto& m = cases[c].mask;
        if (m.shape() != cases[c].image.shape()) throw ShapeError(cases[c].case_id + ": image and mask grids differ");
        const std::size_t plane = static_cast<std::size_t>(m.nx() * m.ny());
        for (std::int64_t z = 0; z < m.nz(); ++z) {
            bool fg = false;
            for (std::size_t i = 0; i < plane && !fg; ++i) fg = m[static_cast<std::size_t>(z) * plane + i] != 0.0f;
            (fg ? fg_ : bg_).push_back({c, z});
        }
    }
}

std::vector<SliceRef> SliceDataset::epoch_samples(double background_ratio, std::uint64_t seed, int epoch) const {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(epoch), 0x5a5a));
    auto shuffle = [&](std::vector<SliceRef>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
    };
    std::vector<SliceRef> out = fg_;
    if (fg_.empty()) {
        out = bg_;
    } else {
        auto bg = bg_;
        shuffle(bg);
        const auto n_bg = std::min(bg.size(), static_cast<std::size_t>(
                                                  std::llround(background_ratio * static_cast<double>(fg_.size()))));
        out.insert(out.end(), bg.begin(), bg.begin() + static_cast<std::ptrdiff_t>(n_bg));
    }
    shuffle(out);
    return out;
}

Batch SliceDataset::make_batch(const std::vector<SliceRef>& samples, const AugmentConfig* augment, std::uint64_t seed,
                               int epoch) const {
    if (samples.empty()) throw ValidationError("empty batch");
    const auto& first = cases_[samples.front().case_index].image;
    const std::int64_t H = first.ny(), W = first.nx(), C = spec_.in_channels;
    const auto B = static_cast<std::int64_t>(samples.size());
    const bool fps = is_fpsnet(spec_.arch);
    const std::int64_t S = spec_.fpsnet_size;
    Batch batch;
    batch.image = torch::empty({B, C, H, W});
    batch.target = torch::empty({B, 1, H, W});
    if (fps) batch.target_full = torch::empty({B, 1, S, S});
    for (std::int64_t b = 0; b < B; ++b) {
        const auto& ref = samples[static_cast<std::size_t>(b)];
        const auto& tc = cases_[ref.case_index];
        if (tc.image.ny() != H || tc.image.nx() != W) throw ShapeError("cases in a batch differ in in-plane size");
        SliceStack stack = stack_slices(tc.image, ref.z, context_);
        Plane label = extract_slice(tc.mask, ref.z);
        for (auto& v : label.values) v = v != 0.0f ? 1.0f : 0.0f;
        if (augment) {
            std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(epoch),
                                            (static_cast<std::uint64_t>(ref.case_index) << 20) ^
                                                static_cast<std::uint64_t>(ref.z)));
            augment_sample(stack, label, *augment, rng);
        }
        for (auto& v : stack.values) v = static_cast<float>(v * input_scale_);
        batch.image[b].copy_(torch::from_blob(stack.values.data(), {C, H, W}, torch::kFloat32));
        batch.target[b][0].copy_(torch::from_blob(label.values.data(), {H, W}, torch::kFloat32));
        if (fps) {
            Plane full = spec_.arch == Architecture::FPSNET_SL ? make_smoothed_labels(label, {S, S})
                                                               : make_binary_labels(label, {S, S});
            batch.target_full[b][0].copy_(torch::from_blob(full.values.data(), {S, S}, torch::kFloat32));
        }
    }
    return batch;
}

LabelVolume predict_volume(SegNet& net, const ScalarVolume& image, double input_scale, const std::string& device,
                           int batch) {
    torch::NoGradGuard ng;
    const bool was_training = net.is_training();
    net.eval();
    const auto dev = parse_device(device);
    const int k = (net.spec().in_channels - 1) / 2;
    const std::int64_t H = image.ny(), W = image.nx(), C = net.spec().in_channels;
    LabelVolume out(image.geometry());
    for (std::int64_t z0 = 0; z0 < image.nz(); z0 += batch) {
        const std::int64_t n = std::min<std::int64_t>(batch, image.nz() - z0);
        auto x = torch::empty({n, C, H, W});
        for (std::int64_t i = 0; i < n; ++i) {
            SliceStack s = stack_slices(image, z0 + i, k);
            for (auto& v : s.values) v = static_cast<float>(v * input_scale);
            x[i].copy_(torch::from_blob(s.values.data(), {C, H, W}, torch::kFloat32));
        }
        auto p = net.forward(x.to(dev)).main.to(torch::kCPU).contiguous();
        const float* src = p.data_ptr<float>();
        std::copy(src, src + n * H * W, out.data().data() + static_cast<std::size_t>(z0 * H * W));
    }
    if (was_training) net.train();
    return out;
}

double validation_dice(SegNet& net, const std::vector<TrainingCase>& cases, double input_scale,
                       const std::string& device) {
    double fg_sum = 0.0, all_sum = 0.0;
    std::size_t fg_n = 0, all_n = 0;
    for (const auto& c : cases) {
        const auto prob = predict_volume(net, c.image, input_scale, device);
        const std::size_t plane = static_cast<std::size_t>(c.mask.nx() * c.mask.ny());
        for (std::int64_t z = 0; z < c.mask.nz(); ++z) {
            std::size_t inter = 0, np = 0, ng = 0;
            for (std::size_t i = 0; i < plane; ++i) {
                const std::size_t v = static_cast<std::size_t>(z) * plane + i;
                const bool p = prob[v] >= 0.5f, g = c.mask[v] != 0.0f;
                inter += p && g;
                np += p;
                ng += g;
            }
            const double d = np + ng == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
            all_sum += d;
            ++all_n;
            if (ng > 0) {
                fg_sum += d;
                ++fg_n;
            }
        }
    }
    if (fg_n > 0) return fg_sum / static_cast<double>(fg_n);
    return all_n ? all_sum / static_cast<double>(all_n) : 0.0;
}

namespace {

std::string fmt_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

void write_training_log(const std::vector<EpochLog>& log, const fs::path& path, const std::string& config_hash) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "# " << kToolkitName << " " << kToolkitVersion << " config_hash=" << config_hash << "\n";
    out << "epoch,lr,train_loss,train_dice_loss,val_dice\n";
    for (const auto& e : log) {
        out << e.epoch << "," << fmt_g(e.lr) << "," << fmt_g(e.train_loss) << "," << fmt_g(e.train_dice_loss) << ","
            << (e.val_dice ? fmt_g(*e.val_dice) : "") << "\n";
    }
}

TrainResult train_model(const NetworkSpec& spec, const TrainConfig& config, const std::vector<TrainingCase>& train,
                        const std::vector<TrainingCase>& val, const fs::path& out_dir, const Json& checkpoint_meta,
                        const EpochCallback& on_epoch) {
    config.validate();
    spec.validate();
    if (train.empty()) throw ValidationError("no training cases");
    at::set_num_threads(config.threads);
    torch::manual_seed(config.seed);
    const auto device = parse_device(config.device);
    auto net = build_network(spec);
    net->to(device);
    net->train();

    SliceDataset data(train, spec, config.input_scale);
    std::vector<torch::Tensor> params;
    for (auto& p : net->parameters()) {
        if (p.requires_grad()) params.push_back(p);
    }
    torch::optim::Adam opt(params, torch::optim::AdamOptions(config.lr));
    const std::string config_hash = checkpoint_meta.value("config_hash", std::string());

    TrainResult result;
    result.checkpoint = out_dir / "best.pt";
    result.log_csv = out_dir / "log.csv";
    fs::create_directories(out_dir);
    int since_improvement = 0;
    const AugmentConfig* aug = config.augment_enabled && config.augment.any() ? &config.augment : nullptr;

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        const double lr = learning_rate(config, epoch);
        for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
        net->train();
        const auto samples = data.epoch_samples(config.background_slice_ratio, config.seed, epoch);
        double loss_sum = 0.0, dice_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(config.batch_size));
            const std::vector<SliceRef> chunk(samples.begin() + static_cast<std::ptrdiff_t>(start),
                                              samples.begin() + static_cast<std::ptrdiff_t>(end));
            Batch b = data.make_batch(chunk, aug, config.seed, epoch);
            auto out = net->forward(b.image.to(device));
            auto loss = network_loss(spec, out, b.target.to(device),
                                     b.target_full.defined() ? b.target_full.to(device) : torch::Tensor(), config.mu,
                                     config.dice_epsilon, config.detection_loss_weight);
            const double lv = loss.total.item<double>();
            if (!std::isfinite(lv)) {
                throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batches) + " (lr " + fmt_g(lr) + ")");
            }
            opt.zero_grad();
            loss.total.backward();
            opt.step();
            loss_sum += lv;
            dice_sum += loss.main_dice.item<double>();
            ++batches;
        }
        EpochLog e;
        e.epoch = epoch;
        e.lr = lr;
        e.train_loss = loss_sum / static_cast<double>(batches);
        e.train_dice_loss = dice_sum / static_cast<double>(batches);
        bool improved;
        if (!val.empty()) {
            e.val_dice = validation_dice(*net, val, config.input_scale, config.device);
            improved = result.best_epoch < 0 || *e.val_dice > result.best_score;
            if (improved) result.best_score = *e.val_dice;
        } else {
            improved = result.best_epoch < 0 || e.train_loss < result.best_score;
            if (improved) result.best_score = e.train_loss;
        }
        result.log.push_back(e);
        if (improved) {
            result.best_epoch = epoch;
            since_improvement = 0;
            Json meta = checkpoint_meta;
            meta["epoch"] = epoch;
            meta["train_loss"] = e.train_loss;
            meta["val_dice"] = e.val_dice ? Json(*e.val_dice) : Json(nullptr);
            save_checkpoint(net, result.checkpoint, meta);
        } else {
            ++since_improvement;
        }
        write_training_log(result.log, result.log_csv, config_hash);
        if (on_epoch && !on_epoch(e)) break;
        if (config.stop_train_loss && e.train_dice_loss < *config.stop_train_loss) {
            result.reached_target_loss = true;
            break;
        }
        if (since_improvement >= config.early_stop_patience) {
            result.early_stopped = true;
            break;
        }
    }
    return result;
}

CrossValidationResult cross_validate(const NetworkSpec& spec, const TrainConfig& config,
                                     const std::vector<TrainingCase>& cases, const FoldAssignment& folds,
                                     const fs::path& out_dir, const Json& checkpoint_meta) {
    CrossValidationResult r;
    r.folds = folds;
    for (int k = 0; k < folds.k; ++k) {
        std::vector<TrainingCase> tr, va;
        for (const auto& c : cases) {
            auto it = folds.patient_fold.find(c.patient_id);
            if (it == folds.patient_fold.end()) throw ValidationError("patient " + c.patient_id + " has no fold");
            (it->second == k ? va : tr).push_back(c);
        }
        TrainConfig fold_cfg = config;
        fold_cfg.seed = derive_seed(config.seed, static_cast<std::uint64_t>(k));
        Json meta = checkpoint_meta;
        meta["fold"] = k;
        meta["fold_hash"] = hex64(folds.hash);
        r.runs.push_back(train_model(spec, fold_cfg, tr, va, out_dir / ("fold" + std::to_string(k)), meta));
    }
    return r;
}

}  // namespace dilseg
