// dilseg command-line driver.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "CLI11.hpp"
#include "dilseg/config.hpp"
#include "dilseg/error.hpp"
#include "dilseg/experiment.hpp"
#include "dilseg/manifest.hpp"
#include "dilseg/networks.hpp"
#include "dilseg/version.hpp"

namespace fs = std::filesystem;
using namespace dilseg;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<int> fold;
    bool all_data = false;
    std::string arch;
    std::string device;
};

void add_common(CLI::App* cmd, Common& o, bool selection) {
    cmd->add_option("--config", o.config, "Experiment config (JSON); built-in phantom defaults when omitted")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "Override the experiment seed");
    cmd->add_option("--out", o.out, "Override the output directory (runs land in <out>/<config_hash>)");
    cmd->add_option("--arch", o.arch, "Override the architecture: UNET UNETPP RESUNET MRRN MRRN_DS FPSNET FPSNET_SL");
    cmd->add_option("--device", o.device, "Torch device, e.g. cpu or cuda:0");
    if (selection) {
        cmd->add_option("--fold", o.fold, "Train/apply a single cross-validation fold K");
        cmd->add_flag("--all-data", o.all_data, "Train/apply one model on every case (no held-out fold)");
    }
}

ExperimentConfig resolve(const Common& o) {
    ExperimentConfig c;
    if (!o.config.empty()) {
        c = load_experiment_config(o.config);
    } else {
        c.phantom = PhantomConfig{};
    }
    if (o.seed) c.seed = *o.seed;
    c.sync_seed();
    if (!o.out.empty()) c.output_dir = o.out;
    if (!o.arch.empty()) {
        c.network = NetworkSpec::defaults(architecture_from_string(o.arch));
        c.preprocess.slice_context = (c.network.in_channels - 1) / 2;
    }
    if (!o.device.empty()) c.train.device = o.device;
    c.validate();
    return c;
}

TrainSelection selection(const Common& o) {
    if (o.all_data && o.fold) throw ValidationError("--fold and --all-data are exclusive");
    if (o.all_data) return TrainSelection::all_data();
    if (o.fold) return TrainSelection::single_fold(*o.fold);
    return TrainSelection::cross_validation();
}

void print_run(const ExperimentConfig& c) {
    const auto p = run_paths(c);
    std::cout << "config_hash " << p.hash << "\nrun_dir " << p.root.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(kToolkitName) + " " + kToolkitVersion +
                 ": prostate lesion segmentation experiments (phantom or NIfTI manifest data).\n"
                 "Outputs go to <output_dir>/<config_hash>/. Set " +
                 kCacheEnv + " to share preprocessed volumes between runs."};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolkitVersion));

    Common o;
    std::string path_arg, root_arg, checkpoint, predictions, manifest_out;
    std::vector<std::string> evaluations;

    auto* init = app.add_subcommand("init-config", "Write the default config (phantom data) to --path");
    init->add_option("--path", path_arg, "Destination JSON file")->required();
    add_common(init, o, false);

    auto* phantom = app.add_subcommand("phantom", "Generate the synthetic phantom dataset");
    add_common(phantom, o, false);

    auto* preprocess = app.add_subcommand("preprocess", "Resample, clean and crop every case into the store");
    add_common(preprocess, o, false);

    auto* train = app.add_subcommand("train", "Train (all folds by default, --fold K, or --all-data)");
    add_common(train, o, true);

    auto* predict = app.add_subcommand("predict", "Predict probability maps and masks in the original frame");
    add_common(predict, o, true);
    predict->add_option("--checkpoint", checkpoint, "Apply this checkpoint to every case instead of the trained run");

    auto* evaluate = app.add_subcommand("evaluate", "Lesion-level scoring of the predictions");
    add_common(evaluate, o, true);
    evaluate->add_option("--predictions", predictions, "Directory of <case>_mask.nii.gz (default: the run's)");

    auto* report = app.add_subcommand("report", "Tables, figures and pairwise statistics over evaluations");
    add_common(report, o, true);
    report->add_option("--evaluation", evaluations, "evaluation.json files, one per model (default: the run's)");

    auto* run = app.add_subcommand("run", "preprocess, train, predict, evaluate and report in one go");
    add_common(run, o, true);

    auto* ablate = app.add_subcommand("ablate", "Supervision-level, mu and stream ablation sweeps");
    add_common(ablate, o, true);

    auto* params = app.add_subcommand("params", "Print the trainable parameter count of the configured network");
    add_common(params, o, false);

    auto* importer = app.add_subcommand("import-prostatex", "Build a manifest from a ProstateX-layout directory");
    importer->add_option("--root", root_arg, "Dataset root")->required()->check(CLI::ExistingDirectory);
    importer->add_option("--out", manifest_out, "Output directory for merged masks and manifest.json")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*importer) {
            const auto cases = import_prostatex(root_arg, manifest_out);
            std::cout << "imported " << cases.size() << " cases into " << (fs::path(manifest_out) / "manifest.json")
                      << "\n";
            return 0;
        }
        const ExperimentConfig c = resolve(o);
        if (*init) {
            save_experiment_config(c, path_arg);
            std::cout << "wrote " << path_arg << " (config_hash " << config_hash(c) << ")\n";
            return 0;
        }
        if (*params) {
            torch::manual_seed(static_cast<std::uint64_t>(c.seed));
            auto net = build_network(c.network);
            std::cout << to_string(c.network.arch) << " width " << c.network.width() << " parameters "
                      << count_parameters(*net) << "\n";
            return 0;
        }
        print_run(c);
        const auto p = run_paths(c);
        if (*phantom) {
            const auto cases = cmd_phantom(c);
            std::cout << "generated " << cases.size() << " cases in " << p.phantom.string() << "\n";
        } else if (*preprocess) {
            stamp_run(c);
            const auto items = cmd_preprocess(c, load_dataset(c));
            std::cout << "preprocessed " << items.size() << " cases\n";
        } else if (*train) {
            const auto r = cmd_train(c, selection(o));
            for (const auto& t : r.runs) {
                std::cout << "checkpoint " << t.checkpoint.string() << " best_epoch " << t.best_epoch << "\n";
            }
        } else if (*predict) {
            const auto sel = selection(o);
            std::vector<PredictionItem> items;
            if (!checkpoint.empty()) {
                items = cmd_predict(c, checkpoint, load_dataset(c), p.predictions / "checkpoint");
            } else {
                items = predict_selection(c, sel);
            }
            std::cout << "predicted " << items.size() << " cases\n";
        } else if (*evaluate) {
            const auto sel = selection(o);
            const fs::path dir = predictions.empty() ? p.predictions / sel.tag() : fs::path(predictions);
            std::vector<CaseManifest> scored;
            for (const auto& m : load_dataset(c)) {
                if (fs::exists(dir / (m.case_id + "_mask.nii.gz"))) scored.push_back(m);
            }
            if (scored.empty()) throw IoError("no predictions found in " + dir.string());
            const auto out_dir = p.evaluation / (predictions.empty() ? sel.tag() : fs::path(dir).filename().string());
            cmd_evaluate(c, scored, dir, out_dir);
            std::cout << "evaluation " << (out_dir / "evaluation.json").string() << "\n";
        } else if (*report) {
            const auto sel = selection(o);
            std::vector<fs::path> files(evaluations.begin(), evaluations.end());
            if (files.empty()) files.push_back(p.evaluation / sel.tag() / "evaluation.json");
            for (const auto& f : files) {
                if (!fs::exists(f)) throw IoError("missing evaluation " + f.string());
            }
            const auto rf = cmd_report(files, p.report / sel.tag(), p.hash);
            (void)rf;
            std::cout << "report " << (p.report / sel.tag()).string() << "\n";
        } else if (*run) {
            const auto r = run_pipeline(c, selection(o));
            std::cout << "report " << (r.paths.report / selection(o).tag()).string() << "\n";
        } else if (*ablate) {
            const auto runs = cmd_ablate(c, selection(o));
            std::cout << "ablation runs " << runs.size() << ", table "
                      << (p.root / "ablation" / "ablation_table.csv").string() << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
