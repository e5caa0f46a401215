#include "dilseg/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "dilseg/version.hpp"
#include "json.hpp"

namespace dilseg {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt_real(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    std::string s = buf;
    if (s == "-0.000000") s = "0.000000";
    return s;
}

std::vector<LesionOutcome> lesion_outcomes(const CaseEvaluation& e, const CaseManifest& c) {
    std::vector<LesionOutcome> out;
    for (const auto& m : e.matches) {
        if (!m.gt_lesion_id) continue;
        const LesionRecord* rec = c.find_lesion(*m.gt_lesion_id);
        if (!rec) {
            throw ValidationError(c.case_id + ": evaluated lesion " + std::to_string(*m.gt_lesion_id) +
                                  " missing from manifest");
        }
        if (!rec->volume_cc) {
            throw ValidationError(c.case_id + ": lesion " + std::to_string(rec->lesion_id) + " has no volume_cc");
        }
        LesionOutcome o;
        o.case_id = c.case_id;
        o.lesion_id = rec->lesion_id;
        o.dsc = m.dsc;
        o.detected = m.status == MatchStatus::TRUE_POSITIVE;
        o.gleason = rec->gleason;
        o.zone = rec->zone;
        o.volume_cc = *rec->volume_cc;
        out.push_back(o);
    }
    return out;
}

namespace {

using LesionKey = std::pair<std::string, int>;

GroupSummary summarize(const std::string& axis, const std::string& group, const std::vector<LesionOutcome>& ls) {
    GroupSummary g;
    g.axis = axis;
    g.group = group;
    g.n = static_cast<int>(ls.size());
    if (ls.empty()) {
        g.median = g.q1 = g.q3 = std::nan("");
        return g;
    }
    std::vector<double> d;
    for (const auto& l : ls) d.push_back(l.dsc);
    g.median = quantile(d, 0.5);
    g.q1 = quantile(d, 0.25);
    g.q3 = quantile(d, 0.75);
    return g;
}

/// (axis, group) -> lesions, in a fixed order, including the pooled cell.
std::vector<std::tuple<std::string, std::string, std::vector<LesionOutcome>>> cells(
    const std::vector<LesionOutcome>& lesions) {
    std::vector<std::tuple<std::string, std::string, std::vector<LesionOutcome>>> out;
    out.emplace_back("ALL", "ALL", lesions);
    const auto g = group_lesions(lesions);
    for (const auto& [k, v] : g.by_gs) out.emplace_back("GLEASON", to_string(k), v);
    for (const auto& [k, v] : g.by_size) out.emplace_back("SIZE", to_string(k), v);
    for (const auto& [k, v] : g.by_zone) out.emplace_back("ZONE", to_string(k), v);
    return out;
}

std::map<LesionKey, double> dsc_by_lesion(const std::vector<LesionOutcome>& ls) {
    std::map<LesionKey, double> m;
    for (const auto& l : ls) m[{l.case_id, l.lesion_id}] = l.dsc;
    return m;
}

}  // namespace

EvaluationReport build_report(const std::vector<ModelEvaluations>& models) {
    if (models.empty()) throw ValidationError("report needs at least one model");
    EvaluationReport r;
    for (const auto& m : models) {
        ModelSummary s;
        s.model = m.model;
        s.detection = detection_metrics(m.cases);
        if (s.detection.positives > 0) s.fp_per_lesion = false_positives_per_lesion(m.cases);
        bool have_gland = !m.cases.empty();
        int oog = 0;
        for (const auto& c : m.cases) {
            if (c.out_of_gland_fp_count) {
                oog += *c.out_of_gland_fp_count;
            } else {
                have_gland = false;
            }
        }
        if (have_gland) s.out_of_gland_fp = oog;
        for (const auto& [axis, group, ls] : cells(m.lesions)) s.groups.push_back(summarize(axis, group, ls));
        if (m.lesions.size() >= 3) {
            std::vector<double> d, v;
            for (const auto& l : m.lesions) {
                d.push_back(l.dsc);
                v.push_back(l.volume_cc);
            }
            try {
                s.dsc_vs_volume = spearman(v, d);
            } catch (const ValidationError&) {
                // constant DSC or volume: correlation undefined
            }
        }
        r.models.push_back(std::move(s));

        // Between-group rank-sum tests within each axis.
        const auto all_cells = cells(m.lesions);
        for (std::size_t i = 1; i < all_cells.size(); ++i) {
            for (std::size_t j = i + 1; j < all_cells.size(); ++j) {
                const auto& [axis_i, gi, li] = all_cells[i];
                const auto& [axis_j, gj, lj] = all_cells[j];
                if (axis_i != axis_j || li.empty() || lj.empty()) continue;
                std::vector<double> a, b;
                for (const auto& l : li) a.push_back(l.dsc);
                for (const auto& l : lj) b.push_back(l.dsc);
                BetweenGroupComparison c;
                c.model = m.model;
                c.axis = axis_i;
                c.group_a = gi;
                c.group_b = gj;
                c.result = wilcoxon_rank_sum(a, b);
                c.significant = c.result.p_value < kSignificanceLevel;
                r.between_groups.push_back(c);
            }
        }
    }

    for (std::size_t i = 0; i < models.size(); ++i) {
        for (std::size_t j = i + 1; j < models.size(); ++j) {
            const auto da = dsc_by_lesion(models[i].lesions);
            const auto db = dsc_by_lesion(models[j].lesions);
            if (da.size() != db.size() ||
                !std::equal(da.begin(), da.end(), db.begin(), [](const auto& x, const auto& y) {
                    return x.first == y.first;
                })) {
                throw ValidationError("models " + models[i].model + " and " + models[j].model +
                                      " were scored on different lesion sets");
            }
            for (const auto& [axis, group, ls] : cells(models[i].lesions)) {
                if (ls.empty()) continue;
                std::vector<double> diffs;
                for (const auto& l : ls) {
                    const LesionKey k{l.case_id, l.lesion_id};
                    diffs.push_back(da.at(k) - db.at(k));
                }
                PairwiseComparison c;
                c.model_a = models[i].model;
                c.model_b = models[j].model;
                c.axis = axis;
                c.group = group;
                c.all_zero = std::all_of(diffs.begin(), diffs.end(), [](double d) { return d == 0.0; });
                if (c.all_zero) {
                    c.result.p_value = 1.0;
                    c.result.effect_size = 0.0;
                    c.result.n = 0;
                    c.result.test = TestKind::SIGNED_RANK;
                    c.result.exact = true;
                } else {
                    c.result = wilcoxon_signed_rank(diffs);
                }
                c.significant = c.result.p_value < kSignificanceLevel;
                r.pairwise.push_back(c);
            }
        }
    }
    return r;
}

namespace {

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

std::string stamp(const std::string& config_hash) {
    return std::string("# ") + kToolkitName + " " + kToolkitVersion + " config_hash=" + config_hash + "\n";
}

std::string opt_real(const std::optional<double>& v) { return v ? fmt_real(*v) : ""; }

json real_or_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

std::string svg_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

/// Grouped bar chart: one cluster per group, one bar per model, IQR whiskers.
std::string bar_chart_svg(const EvaluationReport& r, const std::string& axis) {
    std::vector<std::string> groups;
    for (const auto& g : r.models.front().groups) {
        if (g.axis == axis) groups.push_back(g.group);
    }
    const std::size_t nm = r.models.size();
    const double bar_w = 18.0, gap = 24.0, left = 60.0, top = 30.0, plot_h = 240.0;
    const double cluster_w = static_cast<double>(nm) * bar_w + gap;
    const double width = left + static_cast<double>(groups.size()) * cluster_w + 160.0;
    const double height = top + plot_h + 60.0;
    static const char* palette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3"};
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt_real(width) << "\" height=\""
      << fmt_real(height) << "\">\n";
    s << "<text x=\"" << left << "\" y=\"18\" font-size=\"13\">Median lesion DSC by " << axis << " (IQR bars)</text>\n";
    const double y0 = top + plot_h;
    s << "<line x1=\"" << left << "\" y1=\"" << y0 << "\" x2=\"" << fmt_real(width - 150) << "\" y2=\"" << y0
      << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << y0
      << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 5; ++t) {
        const double v = t / 5.0;
        const double y = y0 - v * plot_h;
        s << "<text x=\"" << left - 8 << "\" y=\"" << fmt_real(y + 4) << "\" font-size=\"10\" text-anchor=\"end\">"
          << fmt_real(v).substr(0, 3) << "</text>\n";
    }
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const double cx = left + gap / 2 + static_cast<double>(gi) * cluster_w;
        for (std::size_t mi = 0; mi < nm; ++mi) {
            const GroupSummary* g = nullptr;
            for (const auto& x : r.models[mi].groups) {
                if (x.axis == axis && x.group == groups[gi]) g = &x;
            }
            if (!g || g->n == 0) continue;
            const double x = cx + static_cast<double>(mi) * bar_w;
            const double h = g->median * plot_h;
            s << "<rect x=\"" << fmt_real(x) << "\" y=\"" << fmt_real(y0 - h) << "\" width=\"" << fmt_real(bar_w - 2)
              << "\" height=\"" << fmt_real(h) << "\" fill=\"" << palette[mi % 7] << "\"/>\n";
            const double xm = x + (bar_w - 2) / 2;
            s << "<line x1=\"" << fmt_real(xm) << "\" y1=\"" << fmt_real(y0 - g->q1 * plot_h) << "\" x2=\""
              << fmt_real(xm) << "\" y2=\"" << fmt_real(y0 - g->q3 * plot_h) << "\" stroke=\"black\"/>\n";
        }
        s << "<text x=\"" << fmt_real(cx + static_cast<double>(nm) * bar_w / 2) << "\" y=\"" << y0 + 16
          << "\" font-size=\"10\" text-anchor=\"middle\">" << svg_escape(groups[gi]) << "</text>\n";
    }
    for (std::size_t mi = 0; mi < nm; ++mi) {
        const double ly = top + 14.0 * static_cast<double>(mi);
        const double lx = width - 140;
        s << "<rect x=\"" << fmt_real(lx) << "\" y=\"" << fmt_real(ly) << "\" width=\"10\" height=\"10\" fill=\""
          << palette[mi % 7] << "\"/>\n";
        s << "<text x=\"" << fmt_real(lx + 14) << "\" y=\"" << fmt_real(ly + 9) << "\" font-size=\"10\">"
          << svg_escape(r.models[mi].model) << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

}  // namespace

void write_detection_csv(const std::vector<ModelSummary>& models, const fs::path& path, const std::string& config_hash) {
    auto out = open_out(path);
    out << stamp(config_hash);
    out << "model,n_lesions,median_dsc,q1_dsc,q3_dsc,precision,recall,f1,tp,fp,fp_per_lesion,out_of_gland_fp\n";
    for (const auto& m : models) {
        const GroupSummary* all = nullptr;
        for (const auto& g : m.groups) {
            if (g.axis == "ALL") all = &g;
        }
        out << m.model << "," << (all ? all->n : 0) << "," << (all ? fmt_real(all->median) : "") << ","
            << (all ? fmt_real(all->q1) : "") << "," << (all ? fmt_real(all->q3) : "") << ","
            << fmt_real(m.detection.precision) << "," << fmt_real(m.detection.recall) << ","
            << fmt_real(m.detection.f1) << "," << m.detection.tp << "," << m.detection.fp << ","
            << opt_real(m.fp_per_lesion) << "," << (m.out_of_gland_fp ? std::to_string(*m.out_of_gland_fp) : "")
            << "\n";
    }
}

void write_lesion_csv(const std::vector<LesionOutcome>& lesions, const fs::path& path, const std::string& config_hash) {
    auto out = open_out(path);
    out << stamp(config_hash);
    out << "case_id,lesion_id,dsc,detected,gleason,gs_group,zone,volume_cc,size_group\n";
    for (const auto& l : lesions) {
        const auto k = l.key();
        out << l.case_id << "," << l.lesion_id << "," << fmt_real(l.dsc) << "," << (l.detected ? 1 : 0) << ","
            << (l.gleason ? l.gleason->to_string() : "") << "," << to_string(k.gs) << "," << to_string(l.zone) << ","
            << fmt_real(l.volume_cc) << "," << to_string(k.size) << "\n";
    }
}

ReportFiles write_report(const EvaluationReport& r, const fs::path& dir, const std::string& config_hash) {
    fs::create_directories(dir);
    ReportFiles files;
    files.summary_csv = dir / "summary.csv";
    write_detection_csv(r.models, files.summary_csv, config_hash);

    files.groups_csv = dir / "groups.csv";
    {
        auto out = open_out(files.groups_csv);
        out << stamp(config_hash) << "model,axis,group,n,median_dsc,q1_dsc,q3_dsc\n";
        for (const auto& m : r.models) {
            for (const auto& g : m.groups) {
                out << m.model << "," << g.axis << "," << g.group << "," << g.n << ","
                    << (g.n ? fmt_real(g.median) : "") << "," << (g.n ? fmt_real(g.q1) : "") << ","
                    << (g.n ? fmt_real(g.q3) : "") << "\n";
            }
        }
    }
    if (!r.pairwise.empty()) {
        files.pairwise_csv = dir / "pairwise.csv";
        auto out = open_out(files.pairwise_csv);
        out << stamp(config_hash)
            << "model_a,model_b,axis,group,n_nonzero,p_value,rank_biserial,exact,all_zero,significant\n";
        for (const auto& c : r.pairwise) {
            out << c.model_a << "," << c.model_b << "," << c.axis << "," << c.group << "," << c.result.n << ","
                << fmt_real(c.result.p_value) << "," << fmt_real(c.result.effect_size) << "," << c.result.exact
                << "," << c.all_zero << "," << c.significant << "\n";
        }
    }
    files.between_groups_csv = dir / "between_groups.csv";
    {
        auto out = open_out(files.between_groups_csv);
        out << stamp(config_hash) << "model,axis,group_a,group_b,n,p_value,effect_size,exact,significant\n";
        for (const auto& c : r.between_groups) {
            out << c.model << "," << c.axis << "," << c.group_a << "," << c.group_b << "," << c.result.n << ","
                << fmt_real(c.result.p_value) << "," << fmt_real(c.result.effect_size) << "," << c.result.exact
                << "," << c.significant << "\n";
        }
    }

    json j;
    j["toolkit"] = std::string(kToolkitName) + " " + kToolkitVersion;
    j["config_hash"] = config_hash;
    j["fp_counted_over_all_cases"] = r.fp_counted_over_all_cases;
    j["significance_level"] = kSignificanceLevel;
    json models = json::array();
    for (const auto& m : r.models) {
        json mj;
        mj["model"] = m.model;
        mj["tp"] = m.detection.tp;
        mj["fp"] = m.detection.fp;
        mj["positives"] = m.detection.positives;
        mj["precision"] = m.detection.precision;
        mj["recall"] = m.detection.recall;
        mj["f1"] = m.detection.f1;
        mj["precision_defined"] = m.detection.precision_defined;
        mj["recall_defined"] = m.detection.recall_defined;
        mj["fp_per_lesion"] = m.fp_per_lesion ? json(*m.fp_per_lesion) : json(nullptr);
        mj["out_of_gland_fp"] = m.out_of_gland_fp ? json(*m.out_of_gland_fp) : json(nullptr);
        if (m.dsc_vs_volume) {
            mj["spearman_dsc_vs_volume"] = {{"rho", m.dsc_vs_volume->rho},
                                            {"p_value", m.dsc_vs_volume->p_value},
                                            {"n", m.dsc_vs_volume->n}};
        }
        json groups = json::array();
        for (const auto& g : m.groups) {
            groups.push_back({{"axis", g.axis},
                              {"group", g.group},
                              {"n", g.n},
                              {"median", real_or_null(g.median)},
                              {"q1", real_or_null(g.q1)},
                              {"q3", real_or_null(g.q3)}});
        }
        mj["groups"] = groups;
        models.push_back(mj);
    }
    j["models"] = models;
    if (!r.pairwise.empty()) {
        json pw = json::array();
        for (const auto& c : r.pairwise) {
            pw.push_back({{"model_a", c.model_a},
                          {"model_b", c.model_b},
                          {"axis", c.axis},
                          {"group", c.group},
                          {"n", c.result.n},
                          {"p_value", c.result.p_value},
                          {"rank_biserial", c.result.effect_size},
                          {"exact", c.result.exact},
                          {"all_zero", c.all_zero},
                          {"significant", c.significant}});
        }
        j["pairwise"] = pw;
    }
    json bg = json::array();
    for (const auto& c : r.between_groups) {
        bg.push_back({{"model", c.model},
                      {"axis", c.axis},
                      {"group_a", c.group_a},
                      {"group_b", c.group_b},
                      {"n", c.result.n},
                      {"p_value", c.result.p_value},
                      {"effect_size", c.result.effect_size},
                      {"significant", c.significant}});
    }
    j["between_groups"] = bg;
    files.json = dir / "report.json";
    {
        auto out = open_out(files.json);
        out << j.dump(2) << "\n";
    }

    for (const char* axis : {"GLEASON", "SIZE", "ZONE"}) {
        const fs::path p = dir / (std::string("dsc_by_") + axis + ".svg");
        auto out = open_out(p);
        out << "<!-- " << kToolkitName << " " << kToolkitVersion << " config_hash=" << config_hash << " -->\n";
        out << bar_chart_svg(r, axis);
        files.figures.push_back(p);
    }
    return files;
}

}  // namespace dilseg
