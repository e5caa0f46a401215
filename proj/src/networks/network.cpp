#include <fstream>

#include "architectures.hpp"
#include "dilseg/error.hpp"
#include "dilseg/version.hpp"

namespace dilseg {

SegNetPtr build_network(const NetworkSpec& spec) {
    spec.validate();
    switch (spec.arch) {
        case Architecture::UNET: return nn::make_unet(spec);
        case Architecture::UNETPP: return nn::make_unetpp(spec);
        case Architecture::RESUNET: return nn::make_resunet(spec);
        case Architecture::MRRN:
        case Architecture::MRRN_DS: return nn::make_mrrn(spec);
        case Architecture::FPSNET:
        case Architecture::FPSNET_SL: return nn::make_fpsnet(spec);
    }
    throw ValidationError("unknown architecture");
}

std::int64_t count_parameters(const torch::nn::Module& module) {
    std::int64_t n = 0;
    for (const auto& p : module.parameters(true)) {
        if (p.requires_grad()) n += p.numel();
    }
    return n;
}

torch::Device parse_device(const std::string& device) {
    if (device == "cpu") return torch::kCPU;
    if (device.rfind("cuda", 0) == 0) {
        if (!torch::cuda::is_available()) throw ValidationError("device " + device + " requested but CUDA is unavailable");
        return torch::Device(device);
    }
    throw ValidationError("unknown device '" + device + "'");
}

namespace {
constexpr const char* kHeaderKey = "dilseg_header";
}

void save_checkpoint(const SegNetPtr& net, const std::filesystem::path& path, const Json& meta) {
    Json header;
    header["toolkit"] = kToolkitName;
    header["version"] = kToolkitVersion;
    header["format"] = 1;
    header["spec"] = to_json(net->spec());
    header["spec_hash"] = network_spec_hash(net->spec());
    header["meta"] = meta;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    torch::serialize::OutputArchive archive;
    net->save(archive);
    archive.write(kHeaderKey, c10::IValue(header.dump()));
    archive.save_to(path.string());
    std::ofstream side(path.string() + ".json", std::ios::trunc);
    side << header.dump(2) << "\n";
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const std::string& device) {
    if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path.string());
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path.string(), parse_device(device));
    } catch (const c10::Error& e) {
        throw FormatError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
    c10::IValue raw;
    if (!archive.try_read(kHeaderKey, raw)) throw FormatError(path.string() + " is not a dilseg checkpoint");
    LoadedCheckpoint out;
    out.header = Json::parse(raw.toStringRef());
    NetworkSpec spec = network_spec_from_json(out.header.at("spec"));
    if (out.header.at("spec_hash").get<std::string>() != network_spec_hash(spec)) {
        throw FormatError(path.string() + ": spec hash does not match its spec");
    }
    spec.backbone = Backbone::RANDOM;  // weights come from the checkpoint
    out.net = build_network(spec);
    out.net->load(archive);
    out.net->to(parse_device(device));
    out.net->eval();
    return out;
}

}  // namespace dilseg
