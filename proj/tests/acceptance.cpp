// Acceptance suite: one numbered check per criterion, one PASS/FAIL line each.
//   dilseg_acceptance <n|all> [--work DIR]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "dilseg/config.hpp"
#include "dilseg/evaluation.hpp"
#include "dilseg/experiment.hpp"
#include "dilseg/losses.hpp"
#include "dilseg/networks.hpp"
#include "dilseg/stats.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace dilseg;

namespace {

fs::path g_work = "acceptance_work";

struct Outcome {
    bool pass = true;
    std::ostringstream detail;
    int failures = 0;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            if (failures++ < 5) detail << " [fail: " << what << "]";
        }
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome metrics_oracle() {
    Outcome o;
    const auto t0 = Clock::now();
    std::mt19937_64 rng(20240601);
    int tp = 0, fp = 0, pos = 0, otp = 0, ofp = 0, opos = 0;
    std::vector<CaseEvaluation> cases;
    for (int trial = 0; trial < 200; ++trial) {
        auto [gt, pred] = fixture::random_pair(rng);
        const double voxel_cc = gt.geometry().voxel_volume_mm3() / 1000.0;
        const auto ref = oracle::score(oracle::to_grid(gt), oracle::to_grid(pred), voxel_cc);
        const auto lab = oracle::flood_fill(oracle::to_grid(pred));

        const auto comps = extract_lesions(pred);
        const int nref = lab.empty() ? 0 : *std::max_element(lab.begin(), lab.end());
        o.check(static_cast<int>(comps.size()) == nref, "component count");
        for (const auto& c : comps) {
            std::vector<std::size_t> expect;
            for (std::size_t i = 0; i < lab.size(); ++i)
                if (lab[i] == c.id) expect.push_back(i);
            o.check(c.voxels == expect, "component voxels");
            o.check(c.ignored == (ref.ignored_components.count(c.id) == 1), "ignored flag");
        }
        const auto e = evaluate_case("c" + std::to_string(trial), gt, pred);
        for (const auto& m : e.matches) {
            if (m.gt_lesion_id) {
                o.check(std::fabs(m.dsc - ref.gt_dsc.at(*m.gt_lesion_id)) <= 1e-12, "lesion DSC");
                o.check((m.status == MatchStatus::TRUE_POSITIVE) == ref.gt_detected.at(*m.gt_lesion_id), "TP status");
            } else if (m.status == MatchStatus::FALSE_POSITIVE) {
                o.check(ref.fp_components.count(*m.pred_component_id) == 1, "FP component");
            } else {
                o.check(ref.ignored_components.count(*m.pred_component_id) == 1, "ignored component");
            }
        }
        o.check(e.tp == ref.tp && e.fp == ref.fp && e.n_gt == ref.positives, "case counts");
        const auto dm = detection_metrics(e.tp, e.fp, e.n_gt);
        o.check(dm.recall == ref.recall && dm.precision == ref.precision && dm.f1 == ref.f1, "case metrics");
        tp += e.tp;
        fp += e.fp;
        pos += e.n_gt;
        otp += ref.tp;
        ofp += ref.fp;
        opos += ref.positives;
        cases.push_back(e);
    }
    const auto all = detection_metrics(cases);
    o.check(all.tp == otp && all.fp == ofp && all.positives == opos, "pooled counts");
    const double secs = seconds_since(t0);
    o.check(secs < 60.0, "runtime");
    o.detail << "200 cases, pooled tp=" << tp << " fp=" << fp << " lesions=" << pos << ", recall=" << all.recall
             << " precision=" << all.precision << " f1=" << all.f1 << ", " << secs << " s";
    return o;
}

Outcome table_f1() {
    Outcome o;
    struct Row {
        const char* model;
        double precision, recall, f1;
    };
    const Row rows[] = {{"Unet", 0.49, 0.96, 0.65},   {"Unet++", 0.48, 0.96, 0.64}, {"ResUnet", 0.47, 0.93, 0.63},
                        {"MRRN", 0.45, 0.96, 0.61},   {"MRRN-DS", 0.49, 1.00, 0.66}, {"FPSnet", 0.61, 0.81, 0.69},
                        {"FPSnet-SL", 0.42, 0.89, 0.57}};
    int ok = 0;
    for (const auto& r : rows) {
        const double f1 = f1_score(r.precision, r.recall);
        // Integer reconstruction over the 27 held-out lesions: nearest TP for
        // the recall, nearest FP for the precision.
        const int tp = static_cast<int>(std::lround(r.recall * 27));
        const int fpc = static_cast<int>(std::lround(tp / r.precision - tp));
        const auto dm = detection_metrics(tp, fpc, 27);
        const bool pass = std::fabs(f1 - r.f1) <= 0.005;
        ok += pass;
        o.check(pass, std::string(r.model));
        char buf[160];
        std::snprintf(buf, sizeof(buf), " %s %.2f/%.2f->%.4f (printed %.2f, counts %d/%d/27->%.4f)", r.model,
                      r.precision, r.recall, f1, r.f1, tp, fpc, dm.f1);
        o.detail << buf;
    }
    o.detail << "; " << ok << "/7 within 0.005";
    return o;
}

Outcome threshold_strictness() {
    Outcome o;
    Geometry g;
    g.shape = {20, 20, 4};
    g.spacing = {2.0, 2.0, 3.0};  // 12 mm3 per voxel
    LabelVolume gt(g), pred(g);
    // GT 10 voxels in a row, prediction 10 voxels sharing exactly one: DSC = 2/20.
    for (int x = 0; x < 10; ++x) gt.at(x, 5, 1) = 1;
    for (int x = 9; x < 19; ++x) pred.at(x, 5, 1) = 1;
    auto e = evaluate_case("dsc", gt, pred);
    o.check(e.matches.size() >= 1 && e.matches[0].dsc == 0.1, "constructed DSC is exactly 0.1");
    o.check(e.matches[0].status == MatchStatus::FALSE_NEGATIVE, "DSC 0.1 must be FALSE_NEGATIVE");
    o.detail << "DSC=" << e.matches[0].dsc << " -> " << to_string(e.matches[0].status);
    // One more shared voxel lifts DSC above the threshold.
    pred.at(8, 5, 1) = 1;
    e = evaluate_case("dsc+", gt, pred);
    o.check(e.matches[0].status == MatchStatus::TRUE_POSITIVE, "DSC above 0.1 is TRUE_POSITIVE");

    Geometry u;
    u.shape = {12, 12, 3};
    u.spacing = {1.0, 1.0, 1.0};
    LabelVolume small(u), empty(u);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) small.at(x, y, 1) = 1;  // 100 mm3 = 0.1 cc
    const auto comps = extract_lesions(small);
    o.check(comps.size() == 1 && comps[0].volume_cc == 0.1, "constructed volume is exactly 0.1 cc");
    e = evaluate_case("vol", empty, small);
    o.check(e.matches.size() == 1 && e.matches[0].status == MatchStatus::IGNORED_SMALL,
            "0.1 cc component must be IGNORED_SMALL");
    o.detail << "; volume=" << comps[0].volume_cc << " cc -> " << to_string(e.matches[0].status);
    small.at(0, 0, 2) = 1;
    e = evaluate_case("vol+", empty, small);
    o.check(e.fp == 1, "component above 0.1 cc counts");
    return o;
}

Outcome loss_gradient() {
    Outcome o;
    torch::manual_seed(7);
    auto opts = torch::TensorOptions().dtype(torch::kFloat64);
    auto pm = torch::sigmoid(torch::randn({1, 1, 8, 8}, opts)).detach().requires_grad_(true);
    auto pa = torch::sigmoid(torch::randn({1, 1, 8, 8}, opts)).detach().requires_grad_(true);
    auto t = (torch::rand({1, 1, 8, 8}, opts) > 0.5).to(torch::kFloat64);
    auto loss = combined_loss(pm, pa, t, 0.75);
    loss.backward();
    auto analytic = torch::cat({pm.grad().flatten(), pa.grad().flatten()});
    std::vector<double> fd;
    const double h = 1e-6;
    for (auto* p : {&pm, &pa}) {
        auto base = p->detach().clone();
        for (int64_t i = 0; i < base.numel(); ++i) {
            auto up = base.clone(), dn = base.clone();
            up.view(-1)[i] += h;
            dn.view(-1)[i] -= h;
            const bool main = p == &pm;
            const double lu = combined_loss(main ? up : pm.detach(), main ? pa.detach() : up, t, 0.75).item<double>();
            const double ld = combined_loss(main ? dn : pm.detach(), main ? pa.detach() : dn, t, 0.75).item<double>();
            fd.push_back((lu - ld) / (2 * h));
        }
    }
    auto numeric = torch::tensor(fd, opts);
    const double rel = ((analytic - numeric).norm() / numeric.norm()).item<double>();
    o.check(rel < 1e-4, "gradient relative error");
    auto m1 = combined_loss(pm.detach(), pa.detach(), t, 1.0);
    auto sd = soft_dice_loss(pm.detach(), t);
    const bool bitwise = torch::equal(m1, sd);
    o.check(bitwise, "mu=1 equals soft Dice bitwise");
    char buf[128];
    std::snprintf(buf, sizeof(buf), "relative error %.3e, mu=1 bitwise %s", rel, bitwise ? "equal" : "different");
    o.detail << buf;
    return o;
}

Outcome shape_contract() {
    Outcome o;
    const auto t0 = Clock::now();
    torch::NoGradGuard ng;
    for (auto a : {Architecture::UNET, Architecture::UNETPP, Architecture::RESUNET, Architecture::MRRN,
                   Architecture::MRRN_DS, Architecture::FPSNET, Architecture::FPSNET_SL}) {
        torch::manual_seed(1);
        auto spec = NetworkSpec::defaults(a);
        auto net = build_network(spec);
        net->eval();
        auto x = torch::rand({3, spec.in_channels, 128, 128});
        auto out = net->forward(x);
        const bool shape = out.main.sizes() == torch::IntArrayRef({3, 1, 128, 128});
        const bool range = out.main.min().item<float>() >= 0.0f && out.main.max().item<float>() <= 1.0f;
        o.check(shape, std::string(to_string(a)) + " main shape");
        o.check(range, std::string(to_string(a)) + " main range");
        if (a == Architecture::MRRN_DS) {
            o.check(out.aux.size() == 1 && out.aux[0].sizes() == out.main.sizes(), "MRRN_DS auxiliary map");
            const bool ar = !out.aux.empty() && out.aux[0].min().item<float>() >= 0.0f &&
                            out.aux[0].max().item<float>() <= 1.0f;
            o.check(ar, "MRRN_DS auxiliary range");
        }
        o.detail << to_string(a) << (shape && range ? " ok " : " BAD ");
    }
    const double secs = seconds_since(t0);
    o.check(secs < 300.0, "runtime");
    o.detail << "(" << secs << " s)";
    return o;
}

Outcome parameter_counts() {
    Outcome o;
    const std::pair<Architecture, double> targets[] = {{Architecture::UNET, 13e6},
                                                       {Architecture::UNETPP, 9e6},
                                                       {Architecture::RESUNET, 32e6},
                                                       {Architecture::MRRN, 39e6},
                                                       {Architecture::MRRN_DS, 39e6}};
    for (const auto& [a, target] : targets) {
        torch::manual_seed(0);
        const auto n = static_cast<double>(count_parameters(*build_network(NetworkSpec::defaults(a))));
        const double dev = n / target - 1.0;
        o.check(std::fabs(dev) <= 0.20, to_string(a));
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%s %.2fM (%+.1f%%) ", to_string(a), n / 1e6, 100 * dev);
        o.detail << buf;
    }
    return o;
}

/// MRRN-DS memorisation setup on the 8-case phantom: reduced width, no
/// augmentation, constant learning rate, stop once the Dice loss is below 0.1.
ExperimentConfig overfit_config(const fs::path& out) {
    ExperimentConfig c;
    c.name = "overfit";
    c.phantom = PhantomConfig{};
    c.phantom_cases = 8;
    c.preprocess.crop_size = {96, 96};
    c.network = NetworkSpec::defaults(Architecture::MRRN_DS);
    c.network.base_width = 16;
    c.train.augment_enabled = false;
    c.train.lr = 1e-3;
    c.train.warm_epochs = 200;
    c.train.decay_epochs = 100;
    c.train.max_epochs = 200;
    c.train.stop_train_loss = 0.1;
    c.train.early_stop_patience = 200;
    c.train.background_slice_ratio = 0.5;
    c.output_dir = out;
    c.seed = 42;
    c.sync_seed();
    c.validate();
    return c;
}

struct OverfitRun {
    PipelineResult result;
    double seconds = 0.0;
};

OverfitRun run_overfit(const fs::path& out) {
    fs::remove_all(out);
    const auto t0 = Clock::now();
    OverfitRun r;
    r.result = run_pipeline(overfit_config(out), TrainSelection::all_data());
    r.seconds = seconds_since(t0);
    return r;
}

Outcome overfit_smoke() {
    Outcome o;
    const auto run = run_overfit(g_work / "overfit");
    const auto& t = run.result.training.runs.at(0);
    const auto& last = t.log.back();
    const auto rep = build_report({run.result.evaluations});
    const auto& m = rep.models.front();
    const double med = m.groups.empty() ? 0.0 : m.groups.front().median;
    o.check(last.train_dice_loss < 0.1, "training Dice loss below 0.1");
    o.check(t.log.size() <= 200, "epoch budget");
    o.check(med > 0.8, "median lesion DSC above 0.8");
    o.check(m.detection.recall == 1.0, "recall 1.0");
    o.check(run.seconds < 3 * 3600.0, "runtime");
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "epochs=%zu final dice loss=%.4f median DSC=%.4f recall=%.3f (%d/%d) precision=%.3f, %.0f s",
                  t.log.size(), last.train_dice_loss, med, m.detection.recall, m.detection.tp, m.detection.positives,
                  m.detection.precision, run.seconds);
    o.detail << buf;
    return o;
}

Outcome stats_exact() {
    Outcome o;
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> small(-4, 4);
    std::normal_distribution<double> nd;
    double worst = 0.0;
    int checked = 0;
    for (int n = 1; n <= 10; ++n) {
        for (int rep = 0; rep < 20; ++rep) {
            std::vector<double> d;
            for (int i = 0; i < n; ++i) d.push_back(rep % 2 ? small(rng) * 0.5 : nd(rng));
            bool all_zero = true;
            for (double v : d) all_zero &= v == 0.0;
            if (all_zero) d[0] = 1.0;
            const double err = std::fabs(signed_rank_exact_p(d) - oracle::signed_rank_p(d));
            worst = std::max(worst, err);
            o.check(err <= 1e-12, "signed-rank p");
            std::vector<double> neg;
            for (double v : d) neg.push_back(-v);
            o.check(std::fabs(rank_biserial(d) + rank_biserial(neg)) <= 1e-12, "rank-biserial antisymmetry");
            ++checked;
        }
        for (int na = 1; na < n; ++na) {
            for (int rep = 0; rep < 4; ++rep) {
                std::vector<double> a, b;
                for (int i = 0; i < n; ++i) (i < na ? a : b).push_back(rep % 2 ? small(rng) : nd(rng));
                const double err = std::fabs(rank_sum_exact_p(a, b) - oracle::rank_sum_p(a, b));
                worst = std::max(worst, err);
                o.check(err <= 1e-12, "rank-sum p");
                ++checked;
            }
        }
    }
    o.check(rank_biserial({1, 2, 3, 4}) == 1.0 && rank_biserial({-1, -2, -3}) == -1.0, "rank-biserial extremes");
    double worst_rho = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        const int n = 3 + rep % 18;
        std::vector<double> x, y;
        for (int i = 0; i < n; ++i) {
            x.push_back(rep % 3 == 0 ? small(rng) : nd(rng));
            y.push_back(rep % 4 == 0 ? small(rng) : nd(rng));
        }
        x[0] = 100.0;
        y[1] = 100.0;  // keep both samples non-constant
        const double ref = oracle::pearson(oracle::mid_ranks(x), oracle::mid_ranks(y));
        const double err = std::fabs(spearman(x, y).rho - ref);
        worst_rho = std::max(worst_rho, err);
        o.check(err <= 1e-12, "spearman rho");
    }
    o.detail << checked << " exact p-values, worst |dp|=" << worst << ", worst |drho|=" << worst_rho;
    return o;
}

Outcome schedule() {
    Outcome o;
    TrainConfig c;
    for (int e = 0; e <= 20; ++e) o.check(learning_rate(c, e) == 1e-4, "constant through epoch 20");
    const double at70 = learning_rate(c, 70), at120 = learning_rate(c, 120);
    o.check(std::fabs(at70 - 5e-5) <= 1e-18, "5e-5 at epoch 70");
    o.check(at120 == 0.0, "0 at epoch 120");
    o.detail << "lr(20)=" << learning_rate(c, 20) << " lr(70)=" << at70 << " lr(120)=" << at120;
    return o;
}

Outcome ablation_plumbing() {
    Outcome o;
    const fs::path out = g_work / "ablation";
    fs::remove_all(out);
    auto c = overfit_config(out);
    c.name = "ablation";
    c.train.max_epochs = 2;
    c.train.stop_train_loss.reset();
    const auto t0 = Clock::now();
    std::vector<AblationRun> runs;
    try {
        runs = cmd_ablate(c, TrainSelection::all_data());
    } catch (const std::exception& e) {
        o.check(false, std::string("ablation threw: ") + e.what());
        return o;
    }
    std::map<std::string, int> kinds;
    for (const auto& r : runs) {
        ++kinds[r.kind];
        const auto& t = r.result.training.runs.at(0);
        bool finite = !t.log.empty();
        for (const auto& e : t.log) finite &= std::isfinite(e.train_loss);
        o.check(finite, r.kind + ":" + r.label + " finite losses");
    }
    o.check(kinds["SUPERVISION"] == 4 && kinds["MU"] == 3 && kinds["STREAM"] == 2, "grid coverage");
    const fs::path table = run_paths(c).root / "ablation" / "ablation_table.csv";
    std::ifstream in(table);
    int lines = 0;
    for (std::string line; std::getline(in, line);) ++lines;
    o.check(lines == 2 + 9, "consolidated table rows");
    o.detail << runs.size() << " configurations (supervision " << kinds["SUPERVISION"] << ", mu " << kinds["MU"]
             << ", stream " << kinds["STREAM"] << "), table " << table.string() << ", " << seconds_since(t0) << " s";
    return o;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome reproducibility() {
    Outcome o;
    const auto a = run_overfit(g_work / "repro_a");
    const auto b = run_overfit(g_work / "repro_b");
    const double la = a.result.training.runs.at(0).log.at(0).train_loss;
    const double lb = b.result.training.runs.at(0).log.at(0).train_loss;
    o.check(std::memcmp(&la, &lb, sizeof(double)) == 0, "epoch-0 loss bitwise");
    int files = 0;
    for (const auto& sub : {fs::path("report") / "all", fs::path("evaluation") / "all"}) {
        const fs::path da = a.result.paths.root / sub, db = b.result.paths.root / sub;
        for (const auto& entry : fs::directory_iterator(da)) {
            const auto ext = entry.path().extension();
            if (ext != ".csv" && ext != ".json") continue;
            ++files;
            o.check(slurp(entry.path()) == slurp(db / entry.path().filename()),
                    (sub / entry.path().filename()).string() + " differs");
        }
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "epoch-0 loss %.17g vs %.17g, %d CSV/JSON files compared", la, lb, files);
    o.detail << buf;
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    at::set_num_threads(1);
    std::string which = argc > 1 ? argv[1] : "all";
    for (int i = 2; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--work") g_work = argv[i + 1];
    }
    fs::create_directories(g_work);
    if (const char* cache = std::getenv(kCacheEnv); !cache) {
        const auto dir = fs::absolute(g_work / "cache");
        setenv(kCacheEnv, dir.c_str(), 1);
    }
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"metrics oracle equivalence", metrics_oracle},
        {"F1 from printed precision/recall", table_f1},
        {"threshold strictness", threshold_strictness},
        {"loss gradient check", loss_gradient},
        {"shape/contract suite", shape_contract},
        {"parameter-count tolerance", parameter_counts},
        {"overfit smoke test", overfit_smoke},
        {"statistics exact suite", stats_exact},
        {"learning-rate schedule", schedule},
        {"ablation plumbing", ablation_plumbing},
        {"reproducibility", reproducibility},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (which != "all" && which != std::to_string(i + 1)) continue;
        Outcome r;
        try {
            r = criteria[i].second();
        } catch (const std::exception& e) {
            r.pass = false;
            r.detail << "exception: " << e.what();
        }
        failed += !r.pass;
        std::cout << "criterion " << (i + 1) << " " << (r.pass ? "PASS" : "FAIL") << "  " << criteria[i].first
                  << ": " << r.detail.str() << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
