#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace udean {

enum class Group { Source, Target, Validation, Test };
enum class Role { HR, LR };
/// unpaired: source participants disjoint from all other groups.
/// misaligned: source and target share participants; source HR is deformed.
enum class PairingMode { Unpaired, Misaligned };

std::string_view to_string(Group g);
std::string_view to_string(Role r);
std::string_view to_string(PairingMode m);
Group parse_group(std::string_view text);
Role parse_role(std::string_view text);
PairingMode parse_pairing_mode(std::string_view text);

struct ManifestEntry {
    std::string participant_id;
    Group group = Group::Source;
    std::filesystem::path volume_path;
    Role role = Role::HR;

    bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
    static constexpr int kVersion = 1;

    std::vector<ManifestEntry> entries;
    uint64_t seed = 0;
    PairingMode mode = PairingMode::Unpaired;

    [[nodiscard]] std::vector<const ManifestEntry*> select(Group g, std::optional<Role> r = std::nullopt) const;
    [[nodiscard]] std::vector<std::string> participants(Group g) const;
    [[nodiscard]] const ManifestEntry* find(std::string_view participant, Group g, Role r) const;

    /// Throws ConfigError when the pairing-mode invariants do not hold.
    void validate() const;

    bool operator==(const DatasetManifest&) const = default;
};

struct GroupCounts {
    int64_t source = 120;
    int64_t target = 120;
    int64_t validation = 30;
    int64_t test = 30;

    bool operator==(const GroupCounts&) const = default;
};

/// Deterministic split of participants into the four groups. Source entries
/// carry role HR, target entries role LR, validation and test entries both.
/// Volume paths are left empty for the caller to fill in.
DatasetManifest split_groups(const std::vector<std::string>& ids, const GroupCounts& counts, uint64_t seed,
                             PairingMode mode);

/// Line-oriented text format; relative volume paths resolve against the
/// manifest's directory.
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

}  // namespace udean
