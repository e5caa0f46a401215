#include "dilseg/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "dilseg/error.hpp"
#include "dilseg/hashing.hpp"

namespace dilseg {

namespace fs = std::filesystem;

const char* to_string(Architecture a) {
    switch (a) {
        case Architecture::UNET: return "UNET";
        case Architecture::UNETPP: return "UNETPP";
        case Architecture::RESUNET: return "RESUNET";
        case Architecture::MRRN: return "MRRN";
        case Architecture::MRRN_DS: return "MRRN_DS";
        case Architecture::FPSNET: return "FPSNET";
        case Architecture::FPSNET_SL: return "FPSNET_SL";
    }
    return "?";
}

const char* to_string(Ablation a) {
    switch (a) {
        case Ablation::NONE: return "NONE";
        case Ablation::DROP_FULLRES_STREAM: return "DROP_FULLRES_STREAM";
        case Ablation::KEEP_ONLY_FULLRES_STREAM: return "KEEP_ONLY_FULLRES_STREAM";
    }
    return "?";
}

const char* to_string(Backbone b) { return b == Backbone::PRETRAINED ? "PRETRAINED" : "RANDOM"; }
const char* to_string(UnetppInference u) { return u == UnetppInference::LAST ? "LAST" : "MEAN"; }

Architecture architecture_from_string(const std::string& s) {
    std::string u;
    for (char c : s) u += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (u == "UNET++") u = "UNETPP";
    for (auto a : {Architecture::UNET, Architecture::UNETPP, Architecture::RESUNET, Architecture::MRRN,
                   Architecture::MRRN_DS, Architecture::FPSNET, Architecture::FPSNET_SL}) {
        if (u == to_string(a)) return a;
    }
    throw ValidationError("unknown architecture '" + s + "'");
}

Ablation ablation_from_string(const std::string& s) {
    for (auto a : {Ablation::NONE, Ablation::DROP_FULLRES_STREAM, Ablation::KEEP_ONLY_FULLRES_STREAM}) {
        if (s == to_string(a)) return a;
    }
    throw ValidationError("unknown ablation '" + s + "'");
}

bool is_mrrn(Architecture a) { return a == Architecture::MRRN || a == Architecture::MRRN_DS; }
bool is_fpsnet(Architecture a) { return a == Architecture::FPSNET || a == Architecture::FPSNET_SL; }

int default_base_width(Architecture a) {
    switch (a) {
        case Architecture::UNET: return 42;      // 13.37M
        case Architecture::UNETPP: return 32;    // 9.05M
        case Architecture::RESUNET: return 64;   // 32.44M
        case Architecture::MRRN:
        case Architecture::MRRN_DS: return 56;   // 38.17M
        case Architecture::FPSNET:
        case Architecture::FPSNET_SL: return 64;
    }
    return 32;
}

NetworkSpec NetworkSpec::defaults(Architecture a) {
    NetworkSpec s;
    s.arch = a;
    s.in_channels = is_fpsnet(a) ? 3 : 5;
    return s;
}

int NetworkSpec::width() const { return base_width > 0 ? base_width : default_base_width(arch); }

void NetworkSpec::validate() const {
    if (in_channels < 1 || in_channels % 2 == 0) throw ValidationError("in_channels must be odd and positive");
    if (num_levels < 1 || num_levels > 6) throw ValidationError("num_levels must lie in [1,6]");
    if (base_width < 0) throw ValidationError("base_width must be >= 0");
    if (supervision_level < 1 || supervision_level > num_levels) {
        throw ValidationError("supervision_level must lie in [1, num_levels]");
    }
    if (ablation != Ablation::NONE && !is_mrrn(arch)) {
        throw ValidationError(std::string("stream ablation is only defined for MRRN, not ") + to_string(arch));
    }
    if (is_fpsnet(arch) && (fpsnet_size < 32 || fpsnet_size % 32 != 0)) {
        throw ValidationError("fpsnet_size must be a positive multiple of 32");
    }
}

NetworkSpec apply_ablation(NetworkSpec spec, Ablation ablation) {
    if (!is_mrrn(spec.arch)) {
        throw ValidationError(std::string("stream ablation requires MRRN or MRRN_DS, got ") + to_string(spec.arch));
    }
    spec.ablation = ablation;
    return spec;
}

void TrainConfig::validate() const {
    if (!(lr > 0)) throw ValidationError("lr must be positive");
    if (warm_epochs < 0 || decay_epochs <= 0 || max_epochs <= 0) throw ValidationError("epoch counts must be positive");
    if (batch_size <= 0) throw ValidationError("batch_size must be positive");
    if (!(mu > 0 && mu <= 1)) throw ValidationError("mu must lie in (0,1]");
    if (folds < 2) throw ValidationError("folds must be >= 2");
    if (early_stop_patience <= 0) throw ValidationError("early_stop_patience must be positive");
    if (!(background_slice_ratio >= 0)) throw ValidationError("background_slice_ratio must be >= 0");
    if (!(dice_epsilon > 0)) throw ValidationError("dice_epsilon must be positive");
    if (!(input_scale > 0)) throw ValidationError("input_scale must be positive");
    if (threads <= 0) throw ValidationError("threads must be positive");
    if (device != "cpu" && device.rfind("cuda", 0) != 0) throw ValidationError("device must be cpu or cuda[:N]");
    augment.validate();
}

double learning_rate(const TrainConfig& c, int epoch) {
    const double past = std::max(0, epoch - c.warm_epochs);
    const double f = std::clamp(1.0 - past / static_cast<double>(c.decay_epochs), 0.0, 1.0);
    return c.lr * f;
}

void ExperimentConfig::sync_seed() {
    train.seed = seed;
    if (phantom) phantom->seed = seed;
}

void ExperimentConfig::validate() const {
    preprocess.validate();
    network.validate();
    train.validate();
    if (phantom) phantom->validate();
    if (phantom_cases <= 0) throw ValidationError("phantom_cases must be positive");
    if (network.in_channels != 2 * preprocess.slice_context + 1) {
        throw ValidationError("network in_channels must equal 2 * slice_context + 1");
    }
}

namespace {

/// Reads optional keys into defaults and rejects unknown ones.
class Reader {
public:
    Reader(const Json& j, std::string context) : j_(j), ctx_(std::move(context)) {
        if (!j_.is_object()) throw ValidationError(ctx_ + ": expected an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const Json::exception& e) {
            throw ValidationError(ctx_ + "." + key + ": " + e.what());
        }
    }

    const Json* sub(const char* key) {
        seen_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null() ? &j_.at(key) : nullptr;
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.count(k)) throw ValidationError(ctx_ + ": unknown key '" + k + "'");
        }
    }

private:
    const Json& j_;
    std::string ctx_;
    std::set<std::string> seen_;
};

Connectivity connectivity_from_int(int n) {
    switch (n) {
        case 6: return Connectivity::Face;
        case 18: return Connectivity::Edge;
        case 26: return Connectivity::Corner;
    }
    throw ValidationError("connectivity must be 6, 18 or 26");
}

}  // namespace

Json to_json(const PreprocessConfig& c) {
    return {{"target_spacing", c.target_spacing},
            {"crop_size", c.crop_size},
            {"min_component_voxels", c.min_component_voxels},
            {"slice_context", c.slice_context},
            {"upsample_size", c.upsample_size},
            {"zscore", c.zscore},
            {"connectivity", static_cast<int>(c.connectivity)},
            {"max_crop", c.max_crop}};
}

PreprocessConfig preprocess_config_from_json(const Json& j) {
    PreprocessConfig c;
    Reader r(j, "preprocess");
    r.get("target_spacing", c.target_spacing);
    r.get("crop_size", c.crop_size);
    r.get("min_component_voxels", c.min_component_voxels);
    r.get("slice_context", c.slice_context);
    r.get("upsample_size", c.upsample_size);
    r.get("zscore", c.zscore);
    int conn = static_cast<int>(c.connectivity);
    r.get("connectivity", conn);
    c.connectivity = connectivity_from_int(conn);
    r.get("max_crop", c.max_crop);
    r.finish();
    c.validate();
    return c;
}

Json to_json(const NetworkSpec& s) {
    return {{"arch", to_string(s.arch)},
            {"in_channels", s.in_channels},
            {"num_levels", s.num_levels},
            {"base_width", s.width()},
            {"supervision_level", s.supervision_level},
            {"ablation", to_string(s.ablation)},
            {"backbone", to_string(s.backbone)},
            {"backbone_weights", s.backbone_weights ? Json(s.backbone_weights->string()) : Json(nullptr)},
            {"freeze_backbone", s.freeze_backbone},
            {"unetpp_inference", to_string(s.unetpp_inference)},
            {"fpsnet_size", s.fpsnet_size},
            {"fpsnet_score_threshold", s.fpsnet_score_threshold}};
}

NetworkSpec network_spec_from_json(const Json& j) {
    Reader r(j, "network");
    std::string arch = "MRRN_DS";
    r.get("arch", arch);
    NetworkSpec s = NetworkSpec::defaults(architecture_from_string(arch));
    r.get("in_channels", s.in_channels);
    r.get("num_levels", s.num_levels);
    r.get("base_width", s.base_width);
    r.get("supervision_level", s.supervision_level);
    std::string abl = "NONE", bb = to_string(s.backbone), inf = "LAST";
    r.get("ablation", abl);
    r.get("backbone", bb);
    r.get("unetpp_inference", inf);
    s.ablation = ablation_from_string(abl);
    if (bb != "PRETRAINED" && bb != "RANDOM") throw ValidationError("backbone must be PRETRAINED or RANDOM");
    s.backbone = bb == "PRETRAINED" ? Backbone::PRETRAINED : Backbone::RANDOM;
    if (inf != "LAST" && inf != "MEAN") throw ValidationError("unetpp_inference must be LAST or MEAN");
    s.unetpp_inference = inf == "LAST" ? UnetppInference::LAST : UnetppInference::MEAN;
    if (const Json* w = r.sub("backbone_weights")) s.backbone_weights = w->get<std::string>();
    r.get("freeze_backbone", s.freeze_backbone);
    r.get("fpsnet_size", s.fpsnet_size);
    r.get("fpsnet_score_threshold", s.fpsnet_score_threshold);
    r.finish();
    s.validate();
    return s;
}

Json to_json(const AugmentConfig& c) {
    return {{"flip", c.flip},
            {"scale", c.scale},
            {"rotate", c.rotate},
            {"elastic", c.elastic},
            {"flip_probability", c.flip_probability},
            {"scale_min", c.scale_min},
            {"scale_max", c.scale_max},
            {"rotate_max_deg", c.rotate_max_deg},
            {"elastic_probability", c.elastic_probability},
            {"elastic_alpha", c.elastic_alpha},
            {"elastic_sigma", c.elastic_sigma}};
}

AugmentConfig augment_config_from_json(const Json& j) {
    AugmentConfig c;
    Reader r(j, "augment");
    r.get("flip", c.flip);
    r.get("scale", c.scale);
    r.get("rotate", c.rotate);
    r.get("elastic", c.elastic);
    r.get("flip_probability", c.flip_probability);
    r.get("scale_min", c.scale_min);
    r.get("scale_max", c.scale_max);
    r.get("rotate_max_deg", c.rotate_max_deg);
    r.get("elastic_probability", c.elastic_probability);
    r.get("elastic_alpha", c.elastic_alpha);
    r.get("elastic_sigma", c.elastic_sigma);
    r.finish();
    c.validate();
    return c;
}

Json to_json(const TrainConfig& c) {
    return {{"lr", c.lr},
            {"warm_epochs", c.warm_epochs},
            {"decay_epochs", c.decay_epochs},
            {"max_epochs", c.max_epochs},
            {"batch_size", c.batch_size},
            {"mu", c.mu},
            {"folds", c.folds},
            {"stratify_folds", c.stratify_folds},
            {"early_stop_patience", c.early_stop_patience},
            {"augment", to_json(c.augment)},
            {"augment_enabled", c.augment_enabled},
            {"background_slice_ratio", c.background_slice_ratio},
            {"dice_epsilon", c.dice_epsilon},
            {"input_scale", c.input_scale},
            {"stop_train_loss", c.stop_train_loss ? Json(*c.stop_train_loss) : Json(nullptr)},
            {"detection_loss_weight", c.detection_loss_weight},
            {"threads", c.threads}};
}

TrainConfig train_config_from_json(const Json& j) {
    TrainConfig c;
    Reader r(j, "train");
    r.get("lr", c.lr);
    r.get("warm_epochs", c.warm_epochs);
    r.get("decay_epochs", c.decay_epochs);
    r.get("max_epochs", c.max_epochs);
    r.get("batch_size", c.batch_size);
    r.get("mu", c.mu);
    r.get("folds", c.folds);
    r.get("stratify_folds", c.stratify_folds);
    r.get("early_stop_patience", c.early_stop_patience);
    if (const Json* a = r.sub("augment")) c.augment = augment_config_from_json(*a);
    r.get("augment_enabled", c.augment_enabled);
    r.get("background_slice_ratio", c.background_slice_ratio);
    r.get("dice_epsilon", c.dice_epsilon);
    r.get("input_scale", c.input_scale);
    if (const Json* s = r.sub("stop_train_loss")) c.stop_train_loss = s->get<double>();
    r.get("detection_loss_weight", c.detection_loss_weight);
    r.get("threads", c.threads);
    r.get("device", c.device);
    r.finish();
    c.validate();
    return c;
}

Json to_json(const EvaluationOptions& o) {
    Json ids = nullptr;
    if (o.gt_ids) ids = Json(std::vector<int>(o.gt_ids->begin(), o.gt_ids->end()));
    return {{"dsc_threshold", o.dsc_threshold},
            {"min_volume_cc", o.min_volume_cc},
            {"ignore_at_min_volume", o.ignore_at_min_volume},
            {"matching", o.rule == MatchingRule::ManyToOne ? "MANY_TO_ONE" : "ONE_TO_ONE"},
            {"connectivity", static_cast<int>(o.connectivity)},
            {"binarize_threshold", o.binarize_threshold},
            {"gt_ids", ids}};
}

EvaluationOptions evaluation_options_from_json(const Json& j) {
    EvaluationOptions o;
    Reader r(j, "evaluation");
    r.get("dsc_threshold", o.dsc_threshold);
    r.get("min_volume_cc", o.min_volume_cc);
    r.get("ignore_at_min_volume", o.ignore_at_min_volume);
    std::string rule = "MANY_TO_ONE";
    r.get("matching", rule);
    if (rule == "MANY_TO_ONE") {
        o.rule = MatchingRule::ManyToOne;
    } else if (rule == "ONE_TO_ONE") {
        o.rule = MatchingRule::OneToOne;
    } else {
        throw ValidationError("evaluation.matching must be MANY_TO_ONE or ONE_TO_ONE");
    }
    int conn = static_cast<int>(o.connectivity);
    r.get("connectivity", conn);
    o.connectivity = connectivity_from_int(conn);
    r.get("binarize_threshold", o.binarize_threshold);
    if (const Json* ids = r.sub("gt_ids")) {
        auto v = ids->get<std::vector<int>>();
        o.gt_ids = std::set<int>(v.begin(), v.end());
    }
    r.finish();
    return o;
}

Json to_json(const PhantomConfig& c) {
    return {{"shape", c.shape},
            {"spacing", c.spacing},
            {"gland_semi_axes_mm", c.gland_semi_axes_mm},
            {"gland_center_jitter_mm", c.gland_center_jitter_mm},
            {"min_lesions", c.min_lesions},
            {"max_lesions", c.max_lesions},
            {"median_lesion_cc", c.median_lesion_cc},
            {"lesion_size_log_sd", c.lesion_size_log_sd},
            {"min_lesion_cc", c.min_lesion_cc},
            {"max_lesion_cc", c.max_lesion_cc},
            {"lesion_aspect_jitter", c.lesion_aspect_jitter},
            {"background_adc", c.background_adc},
            {"gland_adc", c.gland_adc},
            {"lesion_adc", c.lesion_adc},
            {"noise_sigma", c.noise_sigma},
            {"pz_shell_cutoff", c.pz_shell_cutoff},
            {"gleason_weights", c.gleason_weights},
            {"max_placement_retries", c.max_placement_retries}};
}

PhantomConfig phantom_config_from_json(const Json& j) {
    PhantomConfig c;
    Reader r(j, "phantom");
    r.get("shape", c.shape);
    r.get("spacing", c.spacing);
    r.get("gland_semi_axes_mm", c.gland_semi_axes_mm);
    r.get("gland_center_jitter_mm", c.gland_center_jitter_mm);
    r.get("min_lesions", c.min_lesions);
    r.get("max_lesions", c.max_lesions);
    r.get("median_lesion_cc", c.median_lesion_cc);
    r.get("lesion_size_log_sd", c.lesion_size_log_sd);
    r.get("min_lesion_cc", c.min_lesion_cc);
    r.get("max_lesion_cc", c.max_lesion_cc);
    r.get("lesion_aspect_jitter", c.lesion_aspect_jitter);
    r.get("background_adc", c.background_adc);
    r.get("gland_adc", c.gland_adc);
    r.get("lesion_adc", c.lesion_adc);
    r.get("noise_sigma", c.noise_sigma);
    r.get("pz_shell_cutoff", c.pz_shell_cutoff);
    r.get("gleason_weights", c.gleason_weights);
    r.get("max_placement_retries", c.max_placement_retries);
    r.finish();
    c.validate();
    return c;
}

Json to_json(const AblationGrid& g) {
    std::vector<std::string> abl;
    for (auto a : g.stream_ablations) abl.push_back(to_string(a));
    return {{"supervision_levels", g.supervision_levels}, {"mus", g.mus}, {"stream_ablations", abl}};
}

AblationGrid ablation_grid_from_json(const Json& j) {
    AblationGrid g;
    Reader r(j, "ablation_grid");
    r.get("supervision_levels", g.supervision_levels);
    r.get("mus", g.mus);
    std::vector<std::string> abl;
    for (auto a : g.stream_ablations) abl.push_back(to_string(a));
    r.get("stream_ablations", abl);
    g.stream_ablations.clear();
    for (const auto& a : abl) g.stream_ablations.push_back(ablation_from_string(a));
    r.finish();
    return g;
}

Json to_json(const ExperimentConfig& c) {
    return {{"name", c.name},
            {"preprocess", to_json(c.preprocess)},
            {"network", to_json(c.network)},
            {"train", to_json(c.train)},
            {"evaluation", to_json(c.evaluation)},
            {"phantom", c.phantom ? to_json(*c.phantom) : Json(nullptr)},
            {"phantom_cases", c.phantom_cases},
            {"manifest", c.manifest ? Json(c.manifest->string()) : Json(nullptr)},
            {"output_dir", c.output_dir.string()},
            {"ablation_grid", to_json(c.ablation_grid)},
            {"seed", c.seed}};
}

ExperimentConfig experiment_config_from_json(const Json& j) {
    ExperimentConfig c;
    Reader r(j, "config");
    r.get("name", c.name);
    if (const Json* p = r.sub("preprocess")) c.preprocess = preprocess_config_from_json(*p);
    if (const Json* n = r.sub("network")) c.network = network_spec_from_json(*n);
    if (const Json* t = r.sub("train")) c.train = train_config_from_json(*t);
    if (const Json* e = r.sub("evaluation")) c.evaluation = evaluation_options_from_json(*e);
    if (const Json* p = r.sub("phantom")) c.phantom = phantom_config_from_json(*p);
    r.get("phantom_cases", c.phantom_cases);
    if (const Json* m = r.sub("manifest")) c.manifest = m->get<std::string>();
    std::string out = c.output_dir.string();
    r.get("output_dir", out);
    c.output_dir = out;
    if (const Json* g = r.sub("ablation_grid")) c.ablation_grid = ablation_grid_from_json(*g);
    r.get("seed", c.seed);
    r.finish();
    c.sync_seed();
    c.validate();
    return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::exception& e) {
        throw FormatError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    auto c = experiment_config_from_json(j);
    if (c.manifest && c.manifest->is_relative()) c.manifest = path.parent_path() / *c.manifest;
    return c;
}

void save_experiment_config(const ExperimentConfig& c, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_json(c).dump(2) << "\n";
}

std::string config_hash(const ExperimentConfig& c) {
    Json j = to_json(c);
    j.erase("output_dir");
    j.erase("ablation_grid");  // selects runs; each run hashes its own variant
    j["train"].erase("threads");  // execution detail, not part of the experiment
    return hex64(fnv1a64(j.dump()));
}

std::string network_spec_hash(const NetworkSpec& s) {
    Json j = to_json(s);
    j.erase("backbone_weights");
    return hex64(fnv1a64(j.dump()));
}

}  // namespace dilseg
