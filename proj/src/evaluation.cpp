#include "dilseg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <tuple>

#include "dilseg/version.hpp"
#include "json.hpp"

namespace dilseg {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(MatchStatus s) {
    switch (s) {
        case MatchStatus::TRUE_POSITIVE: return "TRUE_POSITIVE";
        case MatchStatus::FALSE_NEGATIVE: return "FALSE_NEGATIVE";
        case MatchStatus::FALSE_POSITIVE: return "FALSE_POSITIVE";
        case MatchStatus::IGNORED_SMALL: return "IGNORED_SMALL";
    }
    return "?";
}

namespace {

MatchStatus status_from_string(const std::string& s) {
    if (s == "TRUE_POSITIVE") return MatchStatus::TRUE_POSITIVE;
    if (s == "FALSE_NEGATIVE") return MatchStatus::FALSE_NEGATIVE;
    if (s == "FALSE_POSITIVE") return MatchStatus::FALSE_POSITIVE;
    if (s == "IGNORED_SMALL") return MatchStatus::IGNORED_SMALL;
    throw FormatError("unknown match status " + s);
}

}  // namespace

std::vector<std::pair<int, double>> CaseEvaluation::lesion_dsc() const {
    std::vector<std::pair<int, double>> out;
    for (const auto& m : matches) {
        if (m.gt_lesion_id) out.emplace_back(*m.gt_lesion_id, m.dsc);
    }
    std::sort(out.begin(), out.end());
    return out;
}

LabelVolume binarize(const LabelVolume& prob, float threshold) {
    LabelVolume out(prob.geometry());
    for (std::size_t i = 0; i < prob.size(); ++i) out[i] = prob[i] >= threshold ? 1.0f : 0.0f;
    return out;
}

std::vector<PredictedLesion> extract_lesions(const LabelVolume& binary_mask, const EvaluationOptions& opts) {
    const double vv = binary_mask.geometry().voxel_volume_mm3();
    std::vector<PredictedLesion> out;
    for (auto& c : foreground_components(binary_mask, 0.0f, opts.connectivity)) {
        PredictedLesion p;
        p.id = c.id;
        p.volume_cc = static_cast<double>(c.voxels.size()) * vv / 1000.0;
        p.ignored = opts.ignore_at_min_volume ? p.volume_cc <= opts.min_volume_cc : p.volume_cc < opts.min_volume_cc;
        p.voxels = std::move(c.voxels);
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<GtLesion> gt_lesions(const LabelVolume& gt_mask, const std::optional<std::set<int>>& ids) {
    std::map<int, std::vector<std::size_t>> regions;
    for (std::size_t i = 0; i < gt_mask.size(); ++i) {
        const float v = gt_mask[i];
        if (v == 0.0f) continue;
        const int id = static_cast<int>(v);
        if (ids && !ids->count(id)) continue;
        regions[id].push_back(i);
    }
    std::vector<GtLesion> out;
    for (auto& [id, voxels] : regions) out.push_back({id, std::move(voxels)});
    return out;
}

double lesion_dsc(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t inter = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia < *ib) {
            ++ia;
        } else if (*ib < *ia) {
            ++ib;
        } else {
            ++inter;
            ++ia;
            ++ib;
        }
    }
    return 2.0 * static_cast<double>(inter) / static_cast<double>(a.size() + b.size());
}

double lesion_dsc(const LabelVolume& a, const LabelVolume& b) {
    if (a.shape() != b.shape()) throw ShapeError("lesion_dsc: regions are on different grids");
    std::size_t inter = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool ia = a[i] != 0.0f, ib = b[i] != 0.0f;
        na += ia;
        nb += ib;
        inter += ia && ib;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

std::vector<LesionMatch> match_lesions(const std::vector<GtLesion>& gt, const std::vector<PredictedLesion>& preds,
                                       std::size_t grid_size, const EvaluationOptions& opts) {
    // Component id per voxel for retained components.
    std::vector<int> owner(grid_size, 0);
    std::map<int, std::size_t> pred_size;
    for (const auto& p : preds) {
        if (p.ignored) continue;
        pred_size[p.id] = p.voxels.size();
        for (std::size_t v : p.voxels) owner[v] = p.id;
    }
    // DSC of every overlapping (gt, component) pair.
    struct Pair {
        int gt;
        int pred;
        double dsc;
    };
    std::vector<Pair> pairs;
    for (const auto& g : gt) {
        std::map<int, std::size_t> overlap;
        for (std::size_t v : g.voxels) {
            if (owner[v] != 0) ++overlap[owner[v]];
        }
        for (const auto& [pid, inter] : overlap) {
            pairs.push_back({g.id, pid,
                             2.0 * static_cast<double>(inter) / static_cast<double>(g.voxels.size() + pred_size[pid])});
        }
    }
    std::map<int, double> best_for_gt;
    std::map<int, double> best_for_pred;
    for (const auto& p : pairs) {
        best_for_gt[p.gt] = std::max(best_for_gt[p.gt], p.dsc);
        best_for_pred[p.pred] = std::max(best_for_pred[p.pred], p.dsc);
    }

    std::map<int, std::pair<int, double>> assigned;  // gt -> (pred, dsc)
    std::set<int> used_preds;
    if (opts.rule == MatchingRule::ManyToOne) {
        std::map<int, Pair> best;
        for (const auto& p : pairs) {
            auto it = best.find(p.gt);
            if (it == best.end() || p.dsc > it->second.dsc || (p.dsc == it->second.dsc && p.pred < it->second.pred)) {
                best[p.gt] = p;
            }
        }
        for (const auto& [gid, p] : best) {
            if (p.dsc > opts.dsc_threshold) {
                assigned[gid] = {p.pred, p.dsc};
                used_preds.insert(p.pred);
            }
        }
    } else {
        auto sorted = pairs;
        std::sort(sorted.begin(), sorted.end(), [](const Pair& a, const Pair& b) {
            return std::tie(b.dsc, a.gt, a.pred) < std::tie(a.dsc, b.gt, b.pred);
        });
        for (const auto& p : sorted) {
            if (!(p.dsc > opts.dsc_threshold)) break;
            if (assigned.count(p.gt) || used_preds.count(p.pred)) continue;
            assigned[p.gt] = {p.pred, p.dsc};
            used_preds.insert(p.pred);
        }
    }

    std::vector<LesionMatch> out;
    for (const auto& g : gt) {
        LesionMatch m;
        m.gt_lesion_id = g.id;
        auto it = assigned.find(g.id);
        if (it != assigned.end()) {
            m.pred_component_id = it->second.first;
            m.dsc = it->second.second;
            m.status = MatchStatus::TRUE_POSITIVE;
        } else {
            auto b = best_for_gt.find(g.id);
            m.dsc = b == best_for_gt.end() ? 0.0 : b->second;
            m.status = MatchStatus::FALSE_NEGATIVE;
        }
        out.push_back(m);
    }
    for (const auto& p : preds) {
        LesionMatch m;
        m.pred_component_id = p.id;
        if (p.ignored) {
            m.status = MatchStatus::IGNORED_SMALL;
        } else if (!used_preds.count(p.id)) {
            auto b = best_for_pred.find(p.id);
            m.dsc = b == best_for_pred.end() ? 0.0 : b->second;
            m.status = MatchStatus::FALSE_POSITIVE;
        } else {
            continue;
        }
        out.push_back(m);
    }
    return out;
}

double f1_score(double precision, double recall) {
    const double denom = precision + recall;
    return denom > 0 ? 2.0 * precision * recall / denom : 0.0;
}

DetectionMetrics detection_metrics(int tp, int fp, int positives) {
    DetectionMetrics m;
    m.tp = tp;
    m.fp = fp;
    m.positives = positives;
    m.recall_defined = positives > 0;
    m.recall = positives > 0 ? static_cast<double>(tp) / positives : 0.0;
    m.precision_defined = tp + fp > 0;
    m.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    m.f1_defined = m.recall_defined && m.precision_defined && (m.precision + m.recall) > 0;
    m.f1 = f1_score(m.precision, m.recall);
    return m;
}

DetectionMetrics detection_metrics(const std::vector<CaseEvaluation>& cases) {
    int tp = 0, fp = 0, p = 0;
    for (const auto& c : cases) {
        tp += c.tp;
        fp += c.fp;
        p += c.n_gt;
    }
    return detection_metrics(tp, fp, p);
}

double false_positives_per_lesion(int fp, int n_lesions) {
    if (n_lesions <= 0) throw ValidationError("false positives per lesion needs at least one GT lesion");
    return static_cast<double>(fp) / n_lesions;
}

double false_positives_per_lesion(const std::vector<CaseEvaluation>& cases) {
    int fp = 0, n = 0;
    for (const auto& c : cases) {
        fp += c.fp;
        n += c.n_gt;
    }
    return false_positives_per_lesion(fp, n);
}

int out_of_gland_detections(const std::vector<PredictedLesion>& preds, const std::vector<LesionMatch>& matches,
                            const LabelVolume& prostate) {
    std::set<int> fp_ids;
    for (const auto& m : matches) {
        if (m.status == MatchStatus::FALSE_POSITIVE && m.pred_component_id) fp_ids.insert(*m.pred_component_id);
    }
    const auto nx = static_cast<std::size_t>(prostate.nx());
    const auto ny = static_cast<std::size_t>(prostate.ny());
    int count = 0;
    for (const auto& p : preds) {
        if (!fp_ids.count(p.id) || p.voxels.empty()) continue;
        double c[3] = {0, 0, 0};
        for (std::size_t v : p.voxels) {
            c[0] += static_cast<double>(v % nx);
            c[1] += static_cast<double>((v / nx) % ny);
            c[2] += static_cast<double>(v / (nx * ny));
        }
        std::int64_t idx[3];
        for (int k = 0; k < 3; ++k) idx[k] = std::llround(c[k] / static_cast<double>(p.voxels.size()));
        const bool inside = prostate.contains(idx[0], idx[1], idx[2]) && prostate.at(idx[0], idx[1], idx[2]) != 0.0f;
        count += !inside;
    }
    return count;
}

CaseEvaluation evaluate_case(const std::string& case_id, const LabelVolume& gt_mask, const LabelVolume& prediction,
                             const LabelVolume* prostate, const EvaluationOptions& opts) {
    if (gt_mask.shape() != prediction.shape()) throw ShapeError(case_id + ": prediction grid differs from ground truth");
    if (prostate && prostate->shape() != gt_mask.shape()) throw ShapeError(case_id + ": prostate grid differs");
    LabelVolume binary = binarize(prediction, opts.binarize_threshold);
    binary.set_geometry_keep_data(gt_mask.geometry());
    const auto preds = extract_lesions(binary, opts);
    const auto gts = gt_lesions(gt_mask, opts.gt_ids);
    CaseEvaluation e;
    e.case_id = case_id;
    e.matches = match_lesions(gts, preds, gt_mask.size(), opts);
    e.n_gt = static_cast<int>(gts.size());
    for (const auto& m : e.matches) {
        switch (m.status) {
            case MatchStatus::TRUE_POSITIVE: ++e.tp; break;
            case MatchStatus::FALSE_NEGATIVE: ++e.fn; break;
            case MatchStatus::FALSE_POSITIVE: ++e.fp; break;
            case MatchStatus::IGNORED_SMALL: ++e.ignored; break;
        }
    }
    if (prostate) e.out_of_gland_fp_count = out_of_gland_detections(preds, e.matches, *prostate);
    return e;
}

void write_case_evaluation_json(const CaseEvaluation& e, const fs::path& path, const std::string& config_hash) {
    json j;
    j["toolkit"] = std::string(kToolkitName) + " " + kToolkitVersion;
    j["config_hash"] = config_hash;
    j["case_id"] = e.case_id;
    j["n_gt"] = e.n_gt;
    j["tp"] = e.tp;
    j["fn"] = e.fn;
    j["fp"] = e.fp;
    j["ignored"] = e.ignored;
    j["out_of_gland_fp_count"] = e.out_of_gland_fp_count ? json(*e.out_of_gland_fp_count) : json(nullptr);
    json matches = json::array();
    for (const auto& m : e.matches) {
        matches.push_back({{"gt_lesion_id", m.gt_lesion_id ? json(*m.gt_lesion_id) : json(nullptr)},
                           {"pred_component_id", m.pred_component_id ? json(*m.pred_component_id) : json(nullptr)},
                           {"dsc", m.dsc},
                           {"status", to_string(m.status)}});
    }
    j["matches"] = matches;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

CaseEvaluation read_case_evaluation_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        const json j = json::parse(in);
        CaseEvaluation e;
        e.case_id = j.at("case_id").get<std::string>();
        e.n_gt = j.at("n_gt").get<int>();
        e.tp = j.at("tp").get<int>();
        e.fn = j.at("fn").get<int>();
        e.fp = j.at("fp").get<int>();
        e.ignored = j.at("ignored").get<int>();
        if (!j.at("out_of_gland_fp_count").is_null()) e.out_of_gland_fp_count = j["out_of_gland_fp_count"].get<int>();
        for (const auto& mj : j.at("matches")) {
            LesionMatch m;
            if (!mj.at("gt_lesion_id").is_null()) m.gt_lesion_id = mj["gt_lesion_id"].get<int>();
            if (!mj.at("pred_component_id").is_null()) m.pred_component_id = mj["pred_component_id"].get<int>();
            m.dsc = mj.at("dsc").get<double>();
            m.status = status_from_string(mj.at("status").get<std::string>());
            e.matches.push_back(m);
        }
        return e;
    } catch (const json::exception& ex) {
        throw FormatError("malformed evaluation file " + path.string() + ": " + ex.what());
    }
}

}  // namespace dilseg
