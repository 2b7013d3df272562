#include "udean/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "udean/error.hpp"

namespace udean {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 8> kMagic{'U', 'D', 'E', 'A', 'N', 'C', 'K', 'P'};

const std::array<const char*, 8> kNetworkKeys{"feat_channels", "n_groups",    "n_blocks",           "reduction",
                                              "scale",         "disc_stages", "disc_base_channels", "leaky_slope"};

template <typename T>
void write_pod(std::ostream& os, const T& value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::filesystem::path& path) {
    T value{};
    if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) throw IoError("truncated checkpoint " + path.string());
    return value;
}

struct RawCheckpoint {
    CheckpointInfo info;
    nlohmann::json tensors;
    std::streamoff payload_start = 0;
};

RawCheckpoint read_header(std::ifstream& in, const std::filesystem::path& path) {
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic)
        throw IoError(path.string() + " is not a checkpoint (bad magic)");
    RawCheckpoint raw;
    raw.info.major = read_pod<uint32_t>(in, path);
    raw.info.minor = read_pod<uint32_t>(in, path);
    if (raw.info.major != kCheckpointMajor)
        throw IoError("checkpoint " + path.string() + " has major version " + std::to_string(raw.info.major) +
                      ", this build reads " + std::to_string(kCheckpointMajor));
    const auto header_len = read_pod<uint64_t>(in, path);
    std::string header(header_len, '\0');
    if (!in.read(header.data(), static_cast<std::streamsize>(header_len)))
        throw IoError("truncated checkpoint header in " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("corrupt checkpoint header in " + path.string() + ": " + e.what());
    }
    // Newer minors may add keys to the network block; ignore what we do not know.
    nlohmann::json net = nlohmann::json::object();
    for (const char* key : kNetworkKeys)
        if (j.at("network").contains(key)) net[key] = j.at("network").at(key);
    raw.info.network = network_config_from_json(net);
    raw.info.metadata = j.value("metadata", nlohmann::json::object());
    raw.tensors = j.at("tensors");
    raw.payload_start = in.tellg();
    return raw;
}

}  // namespace

nlohmann::json to_json(const NetworkConfig& cfg) {
    return {{"feat_channels", cfg.feat_channels},
            {"n_groups", cfg.n_groups},
            {"n_blocks", cfg.n_blocks},
            {"reduction", cfg.reduction},
            {"scale", cfg.scale.to_string()},
            {"disc_base_channels", cfg.disc_base_channels},
            {"disc_stages", cfg.disc_stages},
            {"leaky_slope", cfg.leaky_slope}};
}

NetworkConfig network_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("network config must be an object");
    NetworkConfig cfg;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "feat_channels") cfg.feat_channels = value.get<int64_t>();
            else if (key == "n_groups") cfg.n_groups = value.get<int64_t>();
            else if (key == "n_blocks") cfg.n_blocks = value.get<int64_t>();
            else if (key == "reduction") cfg.reduction = value.get<int64_t>();
            else if (key == "scale") cfg.scale = ScaleFactor::parse(value.get<std::string>());
            else if (key == "disc_base_channels") cfg.disc_base_channels = value.get<int64_t>();
            else if (key == "disc_stages") cfg.disc_stages = value.get<int64_t>();
            else if (key == "leaky_slope") cfg.leaky_slope = value.get<double>();
            else throw ConfigError("unknown network key '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("network." + key + ": " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

void save_checkpoint(const std::filesystem::path& path, const ComponentSet& c, const nlohmann::json& metadata) {
    nlohmann::json index = nlohmann::json::array();
    std::vector<torch::Tensor> payloads;
    uint64_t offset = 0;
    for (const auto& [name, param] : c.named_parameters()) {
        auto t = param.detach().cpu().contiguous();
        const bool f64 = t.scalar_type() == torch::kFloat64;
        if (!f64) t = t.to(torch::kFloat32);
        const uint64_t bytes = static_cast<uint64_t>(t.numel()) * (f64 ? 8 : 4);
        index.push_back({{"name", name}, {"shape", t.sizes().vec()}, {"dtype", f64 ? "f64" : "f32"},
                         {"offset", offset}, {"bytes", bytes}});
        offset += bytes;
        payloads.push_back(t);
    }
    const nlohmann::json header{{"network", to_json(c.config)}, {"metadata", metadata}, {"tensors", index}};
    const std::string text = header.dump();

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    // Write to a sibling and rename so readers never see a half-written file.
    const auto tmp = std::filesystem::path(path.string() + ".partial");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write checkpoint " + tmp.string());
        out.write(kMagic.data(), kMagic.size());
        write_pod(out, kCheckpointMajor);
        write_pod(out, kCheckpointMinor);
        write_pod(out, static_cast<uint64_t>(text.size()));
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& t : payloads)
            out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
        if (!out) throw IoError("failed writing checkpoint " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    return read_header(in, path).info;
}

void require_compatible(const NetworkConfig& stored, const NetworkConfig& expected) {
    if (stored.scale != expected.scale)
        throw ConfigError("checkpoint scale " + stored.scale.to_string() + " does not match configured scale " +
                          expected.scale.to_string());
    if (stored.feat_channels != expected.feat_channels || stored.n_groups != expected.n_groups ||
        stored.n_blocks != expected.n_blocks || stored.reduction != expected.reduction)
        throw ConfigError("checkpoint network widths (feat_channels " + std::to_string(stored.feat_channels) +
                          ", groups " + std::to_string(stored.n_groups) + ", blocks " +
                          std::to_string(stored.n_blocks) + ") do not match the configuration (feat_channels " +
                          std::to_string(expected.feat_channels) + ", groups " + std::to_string(expected.n_groups) +
                          ", blocks " + std::to_string(expected.n_blocks) + ")");
}

void load_checkpoint_into(const std::filesystem::path& path, ComponentSet& c) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    const RawCheckpoint raw = read_header(in, path);
    if (!(raw.info.network == c.config)) throw IoError("checkpoint " + path.string() + " network config differs");

    std::map<std::string, nlohmann::json> by_name;
    for (const auto& entry : raw.tensors) by_name[entry.at("name").get<std::string>()] = entry;

    torch::NoGradGuard guard;
    for (auto& [name, param] : c.named_parameters()) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw IoError("checkpoint " + path.string() + " lacks tensor " + name);
        const auto& entry = it->second;
        const auto shape = entry.at("shape").get<std::vector<int64_t>>();
        if (shape != param.sizes().vec())
            throw IoError("tensor " + name + " shape mismatch in " + path.string());
        const bool f64 = entry.at("dtype").get<std::string>() == "f64";
        auto buf = torch::empty(shape, f64 ? torch::kFloat64 : torch::kFloat32);
        const auto bytes = entry.at("bytes").get<uint64_t>();
        if (bytes != buf.nbytes()) throw IoError("tensor " + name + " byte count mismatch in " + path.string());
        in.seekg(raw.payload_start + static_cast<std::streamoff>(entry.at("offset").get<uint64_t>()));
        if (!in.read(static_cast<char*>(buf.data_ptr()), static_cast<std::streamsize>(bytes)))
            throw IoError("truncated tensor " + name + " in " + path.string());
        param.copy_(buf.to(param.scalar_type()));
    }
}

ComponentSet load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info) {
    const CheckpointInfo header = read_checkpoint_info(path);
    ComponentSet c(header.network, 0);
    load_checkpoint_into(path, c);
    if (info) *info = header;
    return c;
}

}  // namespace udean
