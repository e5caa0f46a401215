#include "dilseg/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "dilseg/error.hpp"
#include "dilseg/hashing.hpp"
#include "dilseg/phantom.hpp"
#include "dilseg/version.hpp"
#include "dilseg/volume_io.hpp"

namespace dilseg {

namespace fs = std::filesystem;

std::string TrainSelection::tag() const {
    switch (mode) {
        case Mode::ALL_DATA: return "all";
        case Mode::FOLD: return "fold" + std::to_string(fold);
        case Mode::CROSS_VALIDATION: return "cv";
    }
    return "?";
}

RunPaths run_paths(const ExperimentConfig& c) {
    RunPaths p;
    p.hash = config_hash(c);
    p.root = c.output_dir / p.hash;
    p.phantom = p.root / "phantom";
    p.preprocessed = p.root / "preprocessed";
    p.train = p.root / "train";
    p.predictions = p.root / "predictions";
    p.evaluation = p.root / "evaluation";
    p.report = p.root / "report";
    return p;
}

void stamp_run(const ExperimentConfig& c) {
    const auto p = run_paths(c);
    fs::create_directories(p.root);
    Json j = to_json(c);
    j["config_hash"] = p.hash;
    j["toolkit"] = std::string(kToolkitName) + " " + kToolkitVersion;
    std::ofstream out(p.root / "config.json", std::ios::trunc);
    if (!out) throw IoError("cannot write " + (p.root / "config.json").string());
    out << j.dump(2) << "\n";
}

std::vector<CaseManifest> cmd_phantom(const ExperimentConfig& c) {
    if (!c.phantom) throw ValidationError("config has no phantom section");
    const auto p = run_paths(c);
    stamp_run(c);
    return generate_dataset(*c.phantom, c.phantom_cases, c.seed, p.phantom);
}

std::vector<CaseManifest> load_dataset(const ExperimentConfig& c) {
    if (c.phantom) {
        const auto manifest = run_paths(c).phantom / "manifest.json";
        if (fs::exists(manifest)) return load_manifest(manifest);
        return cmd_phantom(c);
    }
    if (!c.manifest) throw ValidationError("config names neither a phantom nor a manifest");
    return load_manifest(*c.manifest);
}

namespace {

std::uint64_t file_hash(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return fnv1a64(ss.str());
}

std::string preprocess_key(const ExperimentConfig& c, const CaseManifest& m) {
    std::string s = to_json(c.preprocess).dump() + "|" + m.case_id + "|" + hex64(file_hash(m.image_path)) + "|" +
                    hex64(file_hash(m.mask_path));
    if (m.prostate_mask_path) s += "|" + hex64(file_hash(*m.prostate_mask_path));
    return hex64(fnv1a64(s));
}

fs::path store_dir(const ExperimentConfig& c, const CaseManifest& m, const std::string& key) {
    if (const char* cache = std::getenv(kCacheEnv); cache && *cache) {
        return fs::path(cache) / (m.case_id + "-" + key);
    }
    return run_paths(c).preprocessed / m.case_id;
}

std::map<std::string, const CaseManifest*> by_id(const std::vector<CaseManifest>& cases) {
    std::map<std::string, const CaseManifest*> m;
    for (const auto& c : cases) m[c.case_id] = &c;
    return m;
}

}  // namespace

std::vector<PreprocessedItem> cmd_preprocess(const ExperimentConfig& c, const std::vector<CaseManifest>& cases) {
    c.preprocess.validate();
    std::vector<PreprocessedItem> out;
    for (const auto& m : cases) {
        const std::string key = preprocess_key(c, m);
        const fs::path dir = store_dir(c, m, key);
        PreprocessedItem item;
        item.manifest = m;
        item.image = dir / "image.nii.gz";
        item.mask = dir / "mask.nii.gz";
        const fs::path sidecar = dir / "crop.json";
        bool cached = false;
        if (fs::exists(sidecar) && fs::exists(item.image) && fs::exists(item.mask)) {
            try {
                item.sidecar = read_sidecar(sidecar);
                cached = item.sidecar.config_hash == key;
            } catch (const Error&) {
                cached = false;
            }
        }
        if (!cached) {
            auto pc = preprocess_case(m, c.preprocess);
            fs::create_directories(dir);
            const std::string stamp = "preprocess=" + key;
            save_volume(pc.image, item.image, stamp);
            save_volume(pc.mask, item.mask, stamp);
            if (pc.prostate) save_volume(*pc.prostate, dir / "prostate.nii.gz", stamp);
            item.sidecar = CropSidecar{m.case_id, pc.crop, pc.original, pc.resampled, key};
            write_sidecar(item.sidecar, sidecar);
        }
        out.push_back(std::move(item));
    }
    return out;
}

std::vector<TrainingCase> load_training_cases(const std::vector<PreprocessedItem>& items) {
    std::vector<TrainingCase> out;
    for (const auto& it : items) {
        TrainingCase t;
        t.case_id = it.manifest.case_id;
        t.patient_id = it.manifest.patient_id.empty() ? it.manifest.case_id : it.manifest.patient_id;
        t.image = load_scalar_volume(it.image);
        t.mask = load_label_volume(it.mask);
        out.push_back(std::move(t));
    }
    return out;
}

FoldAssignment dataset_folds(const ExperimentConfig& c, const std::vector<CaseManifest>& cases) {
    if (has_explicit_folds(cases)) return folds_from_manifest(cases, c.train.folds);
    return make_folds(cases, c.train.folds, c.seed, c.train.stratify_folds);
}

namespace {

void write_folds(const FoldAssignment& f, const fs::path& path, const std::string& hash) {
    fs::create_directories(path.parent_path());
    Json j;
    j["toolkit"] = std::string(kToolkitName) + " " + kToolkitVersion;
    j["config_hash"] = hash;
    j["k"] = f.k;
    j["hash"] = hex64(f.hash);
    j["patients"] = f.patient_fold;
    std::ofstream out(path, std::ios::trunc);
    out << j.dump(2) << "\n";
}

std::vector<TrainingCase> subset(const std::vector<TrainingCase>& all, const FoldAssignment& f, int fold, bool in) {
    std::vector<TrainingCase> out;
    for (const auto& t : all) {
        auto it = f.patient_fold.find(t.patient_id);
        if (it == f.patient_fold.end()) throw ValidationError("patient " + t.patient_id + " has no fold");
        if ((it->second == fold) == in) out.push_back(t);
    }
    return out;
}

}  // namespace

TrainOutcome cmd_train(const ExperimentConfig& c, const TrainSelection& sel) {
    c.validate();
    const auto p = run_paths(c);
    stamp_run(c);
    const auto cases = load_dataset(c);
    const auto items = cmd_preprocess(c, cases);
    const auto data = load_training_cases(items);
    Json meta;
    meta["config_hash"] = p.hash;
    meta["selection"] = sel.tag();
    TrainOutcome out;
    out.selection = sel;
    if (sel.mode == TrainSelection::Mode::ALL_DATA) {
        out.runs.push_back(train_model(c.network, c.train, data, {}, p.train / "all", meta));
        return out;
    }
    const FoldAssignment folds = dataset_folds(c, cases);
    write_folds(folds, p.train / "folds.json", p.hash);
    out.folds = folds;
    std::vector<int> ks;
    if (sel.mode == TrainSelection::Mode::FOLD) {
        if (sel.fold < 0 || sel.fold >= folds.k) throw ValidationError("fold out of range");
        ks.push_back(sel.fold);
    } else {
        for (int k = 0; k < folds.k; ++k) ks.push_back(k);
    }
    for (int k : ks) {
        TrainConfig tc = c.train;
        tc.seed = derive_seed(c.train.seed, static_cast<std::uint64_t>(k));
        Json m = meta;
        m["fold"] = k;
        m["fold_hash"] = hex64(folds.hash);
        out.runs.push_back(train_model(c.network, tc, subset(data, folds, k, false), subset(data, folds, k, true),
                                       p.train / ("fold" + std::to_string(k)), m));
    }
    return out;
}

std::vector<PredictionItem> cmd_predict(const ExperimentConfig& c, const fs::path& checkpoint,
                                        const std::vector<CaseManifest>& cases, const fs::path& out_dir) {
    auto ck = load_checkpoint(checkpoint, c.train.device);
    const std::string expected = config_hash(c);
    const std::string trained = ck.header.at("meta").value("config_hash", std::string());
    if (!trained.empty() && trained != expected) {
        std::cerr << "warning: checkpoint " << checkpoint << " was trained under config " << trained
                  << ", evaluating under " << expected << "\n";
    }
    at::set_num_threads(c.train.threads);
    const auto items = cmd_preprocess(c, cases);
    fs::create_directories(out_dir);
    std::vector<PredictionItem> out;
    for (const auto& it : items) {
        const auto image = load_scalar_volume(it.image);
        auto prob = predict_volume(*ck.net, image, c.train.input_scale, c.train.device);
        auto restored = restore_to_original(prob, it.sidecar.resampled, it.sidecar.crop, it.sidecar.original,
                                            Interpolation::Linear);
        for (auto& v : restored.data()) v = std::clamp(v, 0.0f, 1.0f);
        PredictionItem p;
        p.case_id = it.manifest.case_id;
        p.probability = out_dir / (p.case_id + "_prob.nii.gz");
        p.mask = out_dir / (p.case_id + "_mask.nii.gz");
        save_volume(restored, p.probability, "config_hash=" + expected);
        save_volume(binarize(restored, c.evaluation.binarize_threshold), p.mask, "config_hash=" + expected);
        out.push_back(p);
    }
    return out;
}

std::vector<PredictionItem> predict_selection(const ExperimentConfig& c, const TrainSelection& sel) {
    const auto p = run_paths(c);
    const auto cases = load_dataset(c);
    const fs::path out_dir = p.predictions / sel.tag();
    if (sel.mode == TrainSelection::Mode::ALL_DATA) return cmd_predict(c, p.train / "all" / "best.pt", cases, out_dir);
    const FoldAssignment folds = dataset_folds(c, cases);
    std::vector<PredictionItem> out;
    for (int k = 0; k < folds.k; ++k) {
        if (sel.mode == TrainSelection::Mode::FOLD && k != sel.fold) continue;
        std::vector<CaseManifest> held;
        for (const auto& m : cases) {
            if (folds.fold_of(m) == k) held.push_back(m);
        }
        auto part = cmd_predict(c, p.train / ("fold" + std::to_string(k)) / "best.pt", held, out_dir);
        out.insert(out.end(), part.begin(), part.end());
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.case_id < b.case_id; });
    return out;
}

void save_model_evaluations(const ModelEvaluations& m, const fs::path& path, const std::string& hash) {
    Json j;
    j["toolkit"] = std::string(kToolkitName) + " " + kToolkitVersion;
    j["config_hash"] = hash;
    j["model"] = m.model;
    Json cases = Json::array();
    for (const auto& e : m.cases) cases.push_back(e.case_id + ".json");
    j["case_files"] = cases;
    Json lesions = Json::array();
    for (const auto& l : m.lesions) {
        lesions.push_back({{"case_id", l.case_id},
                           {"lesion_id", l.lesion_id},
                           {"dsc", l.dsc},
                           {"detected", l.detected},
                           {"gleason", l.gleason ? Json(l.gleason->to_string()) : Json(nullptr)},
                           {"zone", to_string(l.zone)},
                           {"volume_cc", l.volume_cc}});
    }
    j["lesions"] = lesions;
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

ModelEvaluations load_model_evaluations(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    ModelEvaluations m;
    try {
        const Json j = Json::parse(in);
        m.model = j.at("model").get<std::string>();
        for (const auto& f : j.at("case_files")) {
            m.cases.push_back(read_case_evaluation_json(path.parent_path() / f.get<std::string>()));
        }
        for (const auto& lj : j.at("lesions")) {
            LesionOutcome l;
            l.case_id = lj.at("case_id").get<std::string>();
            l.lesion_id = lj.at("lesion_id").get<int>();
            l.dsc = lj.at("dsc").get<double>();
            l.detected = lj.at("detected").get<bool>();
            if (!lj.at("gleason").is_null()) l.gleason = Gleason::parse(lj["gleason"].get<std::string>());
            l.zone = zone_from_string(lj.at("zone").get<std::string>());
            l.volume_cc = lj.at("volume_cc").get<double>();
            m.lesions.push_back(l);
        }
    } catch (const Json::exception& e) {
        throw FormatError("malformed evaluation file " + path.string() + ": " + e.what());
    }
    return m;
}

ModelEvaluations cmd_evaluate(const ExperimentConfig& c, const std::vector<CaseManifest>& cases,
                              const fs::path& predictions_dir, const fs::path& out_dir) {
    const std::string hash = config_hash(c);
    ModelEvaluations m;
    m.model = c.name;
    fs::create_directories(out_dir);
    for (auto mc : cases) {
        const fs::path pred_path = predictions_dir / (mc.case_id + "_mask.nii.gz");
        if (!fs::exists(pred_path)) throw IoError("missing prediction " + pred_path.string());
        const auto gt = load_label_volume(mc.mask_path);
        const auto pred = load_probability_volume(pred_path);
        std::optional<LabelVolume> prostate;
        if (mc.prostate_mask_path) prostate = load_label_volume(*mc.prostate_mask_path);
        auto e = evaluate_case(mc.case_id, gt, pred, prostate ? &*prostate : nullptr, c.evaluation);
        write_case_evaluation_json(e, out_dir / (mc.case_id + ".json"), hash);
        attach_lesion_volumes(mc, gt);
        auto ls = lesion_outcomes(e, mc);
        m.lesions.insert(m.lesions.end(), ls.begin(), ls.end());
        m.cases.push_back(std::move(e));
    }
    write_lesion_csv(m.lesions, out_dir / "lesions.csv", hash);
    const auto report = build_report({m});
    write_detection_csv(report.models, out_dir / "summary.csv", hash);
    save_model_evaluations(m, out_dir / "evaluation.json", hash);
    return m;
}

ReportFiles cmd_report(const std::vector<fs::path>& evaluation_files, const fs::path& out_dir,
                       const std::string& config_hash) {
    std::vector<ModelEvaluations> models;
    std::set<std::string> names;
    for (const auto& f : evaluation_files) {
        auto m = load_model_evaluations(f);
        if (!names.insert(m.model).second) {
            // distinguish repeated model names by their evaluation directory
            m.model += "@" + f.parent_path().filename().string();
        }
        models.push_back(std::move(m));
    }
    return write_report(build_report(models), out_dir, config_hash);
}

PipelineResult run_pipeline(const ExperimentConfig& c, const TrainSelection& sel) {
    PipelineResult r;
    r.paths = run_paths(c);
    r.training = cmd_train(c, sel);
    const auto preds = predict_selection(c, sel);
    const auto all = load_dataset(c);
    const auto ids = by_id(all);
    std::vector<CaseManifest> scored;
    for (const auto& p : preds) scored.push_back(*ids.at(p.case_id));
    const fs::path eval_dir = r.paths.evaluation / sel.tag();
    r.evaluations = cmd_evaluate(c, scored, r.paths.predictions / sel.tag(), eval_dir);
    r.report = cmd_report({eval_dir / "evaluation.json"}, r.paths.report / sel.tag(), r.paths.hash);
    return r;
}

namespace {

std::string mu_label(double mu) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", mu);
    return buf;
}

}  // namespace

std::vector<std::pair<std::string, ExperimentConfig>> ablation_variants(const ExperimentConfig& base) {
    std::vector<std::pair<std::string, ExperimentConfig>> out;
    ExperimentConfig ds = base;
    if (!is_mrrn(ds.network.arch)) {
        ds.network = NetworkSpec::defaults(Architecture::MRRN_DS);
        ds.network.in_channels = base.network.in_channels;
        ds.network.base_width = base.network.base_width;
    }
    ds.network.arch = Architecture::MRRN_DS;
    for (int level : base.ablation_grid.supervision_levels) {
        ExperimentConfig v = ds;
        v.network.supervision_level = level;
        out.emplace_back("SUPERVISION:level_" + std::to_string(level), v);
    }
    for (double mu : base.ablation_grid.mus) {
        ExperimentConfig v = ds;
        v.train.mu = mu;
        out.emplace_back("MU:mu_" + mu_label(mu), v);
    }
    for (Ablation a : base.ablation_grid.stream_ablations) {
        ExperimentConfig v = ds;
        v.network = apply_ablation(v.network, a);
        out.emplace_back(std::string("STREAM:") + to_string(a), v);
    }
    for (auto& [label, v] : out) v.validate();
    return out;
}

std::vector<AblationRun> cmd_ablate(const ExperimentConfig& c, const TrainSelection& sel) {
    const auto base = run_paths(c);
    std::map<std::string, std::size_t> done;  // config hash -> run index
    std::vector<AblationRun> runs;
    for (auto& [label, v] : ablation_variants(c)) {
        AblationRun r;
        const auto colon = label.find(':');
        r.kind = label.substr(0, colon);
        r.label = label.substr(colon + 1);
        r.config = v;
        const std::string h = config_hash(v);
        if (auto it = done.find(h); it != done.end()) {
            r.result = runs[it->second].result;
        } else {
            r.result = run_pipeline(v, sel);
            done[h] = runs.size();
        }
        torch::manual_seed(0);
        r.parameters = count_parameters(*build_network(v.network));
        runs.push_back(std::move(r));
    }
    const fs::path table = base.root / "ablation" / "ablation_table.csv";
    fs::create_directories(table.parent_path());
    std::ofstream out(table, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError("cannot write " + table.string());
    out << "# " << kToolkitName << " " << kToolkitVersion << " config_hash=" << base.hash << "\n";
    out << "kind,label,arch,supervision_level,mu,ablation,config_hash,parameters,epochs_run,final_train_loss,"
           "final_train_dice_loss,median_dsc,q1_dsc,q3_dsc,precision,recall,f1\n";
    for (const auto& r : runs) {
        const auto& v = r.config;
        double loss = std::nan(""), dice = std::nan("");
        std::size_t epochs = 0;
        for (const auto& t : r.result.training.runs) {
            epochs += t.log.size();
            if (!t.log.empty()) {
                loss = t.log.back().train_loss;
                dice = t.log.back().train_dice_loss;
            }
        }
        const auto rep = build_report({r.result.evaluations});
        const auto& ms = rep.models.front();
        GroupSummary all;
        if (!ms.groups.empty()) all = ms.groups.front();
        out << r.kind << "," << r.label << "," << to_string(v.network.arch) << "," << v.network.supervision_level << ","
            << fmt_real(v.train.mu) << "," << to_string(v.network.ablation) << "," << config_hash(v) << ","
            << r.parameters << "," << epochs << "," << fmt_real(loss) << "," << fmt_real(dice) << ","
            << (all.n ? fmt_real(all.median) : "") << "," << (all.n ? fmt_real(all.q1) : "") << ","
            << (all.n ? fmt_real(all.q3) : "") << "," << fmt_real(ms.detection.precision) << ","
            << fmt_real(ms.detection.recall) << "," << fmt_real(ms.detection.f1) << "\n";
    }
    return runs;
}

}  // namespace dilseg
