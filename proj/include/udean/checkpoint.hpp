#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "udean/network.hpp"

namespace udean {

/// Binary container: 8-byte magic "UDEANCKP", u32 major, u32 minor, u64 JSON
/// header length, JSON header, then little-endian float32 payloads in header
/// order. The header holds the network config, free-form metadata and a
/// tensor index (name, shape, byte offset). Readers accept any minor version
/// of their major version and ignore unknown header keys and tensors.
struct CheckpointInfo {
    uint32_t major = 0;
    uint32_t minor = 0;
    NetworkConfig network;
    nlohmann::json metadata = nlohmann::json::object();
};

inline constexpr uint32_t kCheckpointMajor = 1;
inline constexpr uint32_t kCheckpointMinor = 0;

nlohmann::json to_json(const NetworkConfig& cfg);
/// Strict: unknown keys throw ConfigError. Missing keys keep defaults.
NetworkConfig network_config_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const ComponentSet& c,
                     const nlohmann::json& metadata = nlohmann::json::object());

/// Header only; cheap compatibility checks before building anything.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Builds a ComponentSet from the stored config and fills every parameter.
/// Throws IoError on a missing tensor or a shape mismatch.
ComponentSet load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

/// Fills an existing set; its config must match the stored one.
void load_checkpoint_into(const std::filesystem::path& path, ComponentSet& c);

/// Throws ConfigError when `stored` cannot serve `expected` (scale or widths).
void require_compatible(const NetworkConfig& stored, const NetworkConfig& expected);

}  // namespace udean
