#include "dilseg/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "dilseg/volume_io.hpp"
#include "json.hpp"

namespace dilseg {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(Zone zone) {
    switch (zone) {
        case Zone::PZ: return "PZ";
        case Zone::TZ: return "TZ";
        case Zone::AS: return "AS";
        case Zone::OTHER: return "OTHER";
        case Zone::UNLABELED: return "UNLABELED";
    }
    return "UNLABELED";
}

const char* to_string(Split split) {
    switch (split) {
        case Split::TRAIN: return "TRAIN";
        case Split::VAL: return "VAL";
        case Split::TEST: return "TEST";
    }
    return "TRAIN";
}

Zone zone_from_string(const std::string& s) {
    if (s == "PZ") return Zone::PZ;
    if (s == "TZ") return Zone::TZ;
    if (s == "AS") return Zone::AS;
    if (s == "OTHER") return Zone::OTHER;
    if (s == "UNLABELED") return Zone::UNLABELED;
    throw ValidationError("unknown zone '" + s + "'");
}

Split split_from_string(const std::string& s) {
    if (s == "TRAIN") return Split::TRAIN;
    if (s == "VAL") return Split::VAL;
    if (s == "TEST") return Split::TEST;
    throw ValidationError("unknown split '" + s + "'");
}

std::string Gleason::to_string() const {
    return std::to_string(primary) + "+" + std::to_string(secondary);
}

Gleason Gleason::parse(const std::string& text) {
    static const std::regex re(R"(\s*([0-9])\s*\+\s*([0-9])\s*)");
    std::smatch m;
    if (!std::regex_match(text, m, re)) throw ValidationError("malformed Gleason score '" + text + "'");
    Gleason g{std::stoi(m[1]), std::stoi(m[2])};
    if (g.primary < 3 || g.primary > 5 || g.secondary < 3 || g.secondary > 5) {
        throw ValidationError("Gleason patterns must lie in {3,4,5}: '" + text + "'");
    }
    return g;
}

const LesionRecord* CaseManifest::find_lesion(int id) const {
    for (const auto& l : lesions) {
        if (l.lesion_id == id) return &l;
    }
    return nullptr;
}

double lesion_volume_cc(const LabelVolume& mask, int lesion_id) {
    std::int64_t count = 0;
    const auto target = static_cast<float>(lesion_id);
    for (float v : mask.data()) count += (v == target);
    if (count == 0 || lesion_id == 0) {
        throw ValidationError("lesion id " + std::to_string(lesion_id) + " is absent from the mask");
    }
    return static_cast<double>(count) * mask.geometry().voxel_volume_mm3() / 1000.0;
}

void attach_lesion_volumes(CaseManifest& c, const LabelVolume& mask) {
    std::map<int, std::int64_t> counts;
    for (float v : mask.data()) {
        if (v != 0.0f) ++counts[static_cast<int>(v)];
    }
    const double vv = mask.geometry().voxel_volume_mm3();
    for (auto& l : c.lesions) {
        auto it = counts.find(l.lesion_id);
        if (it != counts.end()) l.volume_cc = static_cast<double>(it->second) * vv / 1000.0;
    }
}

namespace {

std::vector<std::string> record_issues(const CaseManifest& c) {
    std::vector<std::string> out;
    if (c.case_id.empty()) out.push_back("empty case_id");
    if (c.fold && (*c.fold < 0 || *c.fold > 4)) out.push_back("fold must lie in [0, 4]");
    std::set<int> seen;
    for (const auto& l : c.lesions) {
        if (l.lesion_id <= 0) out.push_back("lesion id must be a positive integer");
        if (!seen.insert(l.lesion_id).second) out.push_back("duplicate lesion id " + std::to_string(l.lesion_id));
        if (l.gleason) {
            const auto& g = *l.gleason;
            if (g.primary < 3 || g.primary > 5 || g.secondary < 3 || g.secondary > 5) {
                out.push_back("lesion " + std::to_string(l.lesion_id) + ": Gleason patterns outside {3,4,5}");
            }
        }
    }
    return out;
}

std::vector<std::string> mask_issues(const CaseManifest& c) {
    std::vector<std::string> out;
    LabelVolume mask;
    try {
        mask = load_label_volume(c.mask_path);
    } catch (const Error& e) {
        out.emplace_back(e.what());
        return out;
    }
    const auto ids = label_ids(mask);
    const std::set<int> in_mask(ids.begin(), ids.end());
    std::set<int> in_records;
    for (const auto& l : c.lesions) {
        in_records.insert(l.lesion_id);
        if (!in_mask.count(l.lesion_id)) {
            out.push_back("lesion_id " + std::to_string(l.lesion_id) + " absent from mask");
        }
    }
    for (int id : in_mask) {
        if (!in_records.count(id)) out.push_back("mask label " + std::to_string(id) + " has no lesion record");
    }
    return out;
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::string relativize(const fs::path& base, const fs::path& p) {
    if (base.empty()) return p.string();
    const fs::path rel = p.lexically_relative(base);
    if (!rel.empty() && rel.native().rfind("..", 0) != 0) return rel.generic_string();
    return p.generic_string();
}

CaseManifest parse_case(const json& j, const fs::path& base) {
    CaseManifest c;
    c.case_id = j.at("case_id").get<std::string>();
    c.patient_id = j.contains("patient_id") && !j["patient_id"].is_null() ? j["patient_id"].get<std::string>()
                                                                           : c.case_id;
    c.image_path = resolve(base, j.at("image").get<std::string>());
    c.mask_path = resolve(base, j.at("mask").get<std::string>());
    if (j.contains("prostate_mask") && !j["prostate_mask"].is_null()) {
        c.prostate_mask_path = resolve(base, j["prostate_mask"].get<std::string>());
    }
    if (j.contains("fold") && !j["fold"].is_null()) c.fold = j["fold"].get<int>();
    if (j.contains("split") && !j["split"].is_null()) c.split = split_from_string(j["split"].get<std::string>());
    if (j.contains("lesions")) {
        for (const auto& lj : j.at("lesions")) {
            LesionRecord l;
            l.lesion_id = lj.at("id").get<int>();
            if (lj.contains("gleason") && !lj["gleason"].is_null()) {
                l.gleason = Gleason::parse(lj["gleason"].get<std::string>());
            }
            if (lj.contains("zone") && !lj["zone"].is_null()) {
                l.zone = zone_from_string(lj["zone"].get<std::string>());
            }
            if (lj.contains("volume_cc") && !lj["volume_cc"].is_null()) l.volume_cc = lj["volume_cc"].get<double>();
            c.lesions.push_back(l);
        }
    }
    return c;
}

}  // namespace

std::vector<ManifestIssue> validate_manifest(const std::vector<CaseManifest>& cases, bool check_masks) {
    std::vector<ManifestIssue> issues;
    std::set<std::string> ids;
    for (const auto& c : cases) {
        if (!ids.insert(c.case_id).second) issues.push_back({c.case_id, "duplicate case_id"});
        for (auto& m : record_issues(c)) issues.push_back({c.case_id, std::move(m)});
        if (check_masks) {
            for (auto& m : mask_issues(c)) issues.push_back({c.case_id, std::move(m)});
        }
    }
    std::stable_sort(issues.begin(), issues.end(),
                     [](const ManifestIssue& a, const ManifestIssue& b) { return a.case_id < b.case_id; });
    return issues;
}

std::vector<CaseManifest> load_manifest(const fs::path& path, bool check_masks) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError("manifest " + path.string() + " is not valid JSON: " + e.what());
    }
    if (!j.is_array()) throw ValidationError("manifest must be a JSON array of case objects");
    const fs::path base = path.parent_path();
    std::vector<CaseManifest> cases;
    std::vector<ManifestIssue> issues;
    for (std::size_t i = 0; i < j.size(); ++i) {
        try {
            cases.push_back(parse_case(j[i], base));
        } catch (const json::exception& e) {
            issues.push_back({"#" + std::to_string(i), std::string("schema violation: ") + e.what()});
        } catch (const ValidationError& e) {
            issues.push_back({j[i].value("case_id", "#" + std::to_string(i)), e.what()});
        }
    }
    auto more = validate_manifest(cases, check_masks);
    issues.insert(issues.end(), more.begin(), more.end());
    if (!issues.empty()) {
        std::ostringstream msg;
        msg << "manifest " << path.string() << " failed validation:";
        for (const auto& issue : issues) msg << "\n  [" << issue.case_id << "] " << issue.message;
        throw ValidationError(msg.str());
    }
    return cases;
}

void save_manifest(const std::vector<CaseManifest>& cases, const fs::path& path) {
    const fs::path base = path.parent_path();
    json arr = json::array();
    for (const auto& c : cases) {
        json j;
        j["case_id"] = c.case_id;
        if (c.patient_id != c.case_id) j["patient_id"] = c.patient_id;
        j["image"] = relativize(base, c.image_path);
        j["mask"] = relativize(base, c.mask_path);
        j["prostate_mask"] = c.prostate_mask_path ? json(relativize(base, *c.prostate_mask_path)) : json(nullptr);
        j["fold"] = c.fold ? json(*c.fold) : json(nullptr);
        j["split"] = to_string(c.split);
        json lesions = json::array();
        for (const auto& l : c.lesions) {
            json lj;
            lj["id"] = l.lesion_id;
            lj["gleason"] = l.gleason ? json(l.gleason->to_string()) : json(nullptr);
            lj["zone"] = (l.zone == Zone::UNLABELED) ? json(nullptr) : json(to_string(l.zone));
            if (l.volume_cc) lj["volume_cc"] = *l.volume_cc;
            lesions.push_back(lj);
        }
        j["lesions"] = lesions;
        arr.push_back(j);
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest " + path.string());
    out << arr.dump(2) << "\n";
}

namespace {

// ProstateX-2 Gleason grade group -> representative pattern pair.
std::optional<Gleason> gleason_from_grade_group(int ggg) {
    switch (ggg) {
        case 1: return Gleason{3, 3};
        case 2: return Gleason{3, 4};
        case 3: return Gleason{4, 3};
        case 4: return Gleason{4, 4};
        case 5: return Gleason{4, 5};
        default: return std::nullopt;
    }
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        cell.erase(0, cell.find_first_not_of(" \t\r"));
        cell.erase(cell.find_last_not_of(" \t\r") + 1);
        out.push_back(cell);
    }
    return out;
}

}  // namespace

std::vector<CaseManifest> import_prostatex(const fs::path& root, const fs::path& out_dir) {
    const fs::path images = root / "Images" / "ADC";
    const fs::path masks = root / "Masks" / "ADC";
    const fs::path glands = root / "Masks" / "Prostate";
    if (!fs::is_directory(images) || !fs::is_directory(masks)) {
        throw IoError("ProstateX layout not found under " + root.string() + " (expected Images/ADC and Masks/ADC)");
    }
    // (patient, finding) -> zone / grade group
    std::map<std::pair<std::string, int>, std::pair<std::string, int>> findings;
    if (fs::exists(root / "findings.csv")) {
        std::ifstream in(root / "findings.csv");
        std::string line;
        std::getline(in, line);
        const auto header = split_csv_line(line);
        auto col = [&](const std::string& name) -> int {
            auto it = std::find(header.begin(), header.end(), name);
            return it == header.end() ? -1 : static_cast<int>(it - header.begin());
        };
        const int c_pid = col("ProxID"), c_fid = col("fid"), c_zone = col("zone"), c_ggg = col("ggg");
        if (c_pid < 0 || c_fid < 0) throw FormatError("findings.csv needs ProxID and fid columns");
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto cells = split_csv_line(line);
            auto cell = [&](int c) { return (c >= 0 && c < static_cast<int>(cells.size())) ? cells[c] : std::string{}; };
            const std::string ggg = cell(c_ggg);
            findings[{cell(c_pid), std::stoi(cell(c_fid))}] = {cell(c_zone), ggg.empty() ? 0 : std::stoi(ggg)};
        }
    }

    static const std::regex image_re(R"((ProstateX-[0-9]+)_ADC\.nii(\.gz)?)");
    static const std::regex finding_re(R"((ProstateX-[0-9]+)-Finding([0-9]+)-.*\.nii(\.gz)?)");
    std::map<std::string, fs::path> image_by_pid;
    for (const auto& e : fs::directory_iterator(images)) {
        std::smatch m;
        const std::string name = e.path().filename().string();
        if (std::regex_match(name, m, image_re)) image_by_pid[m[1]] = e.path();
    }
    std::map<std::string, std::vector<std::pair<int, fs::path>>> findings_by_pid;
    for (const auto& e : fs::directory_iterator(masks)) {
        std::smatch m;
        const std::string name = e.path().filename().string();
        if (std::regex_match(name, m, finding_re)) findings_by_pid[m[1]].push_back({std::stoi(m[2]), e.path()});
    }

    std::vector<CaseManifest> cases;
    for (const auto& [pid, image_path] : image_by_pid) {
        CaseManifest c;
        c.case_id = pid;
        c.patient_id = pid;
        c.image_path = image_path;
        c.split = Split::TEST;
        const ScalarVolume image = load_scalar_volume(image_path);
        LabelVolume merged(image.geometry());
        auto& list = findings_by_pid[pid];
        std::sort(list.begin(), list.end());
        for (const auto& [fid, mpath] : list) {
            const LabelVolume fm = load_label_volume(mpath);
            if (!(fm.geometry().shape == merged.geometry().shape)) {
                throw ValidationError(mpath.string() + ": finding mask grid differs from the ADC image");
            }
            std::int64_t count = 0;
            for (std::size_t i = 0; i < fm.size(); ++i) {
                if (fm[i] != 0.0f && merged[i] == 0.0f) {
                    merged[i] = static_cast<float>(fid);
                    ++count;
                }
            }
            if (count == 0) continue;
            LesionRecord l;
            l.lesion_id = fid;
            auto it = findings.find({pid, fid});
            if (it != findings.end()) {
                const std::string& z = it->second.first;
                l.zone = (z == "PZ" || z == "TZ" || z == "AS") ? zone_from_string(z)
                         : z.empty()                            ? Zone::UNLABELED
                                                                : Zone::OTHER;
                l.gleason = gleason_from_grade_group(it->second.second);
            }
            c.lesions.push_back(l);
        }
        c.mask_path = out_dir / "masks" / (pid + "_lesions.nii.gz");
        save_volume(merged, c.mask_path);
        attach_lesion_volumes(c, merged);
        if (fs::is_directory(glands)) {
            for (const auto& e : fs::directory_iterator(glands)) {
                if (e.path().filename().string().rfind(pid, 0) == 0) {
                    c.prostate_mask_path = e.path();
                    break;
                }
            }
        }
        cases.push_back(std::move(c));
    }
    save_manifest(cases, out_dir / "manifest.json");
    return cases;
}

}  // namespace dilseg
