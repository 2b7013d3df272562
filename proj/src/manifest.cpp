#include "udean/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "udean/error.hpp"
#include "udean/random.hpp"

namespace udean {

std::string_view to_string(Group g) {
    switch (g) {
        case Group::Source: return "source";
        case Group::Target: return "target";
        case Group::Validation: return "validation";
        case Group::Test: return "test";
    }
    return "?";
}

std::string_view to_string(Role r) { return r == Role::HR ? "HR" : "LR"; }

std::string_view to_string(PairingMode m) { return m == PairingMode::Unpaired ? "unpaired" : "misaligned"; }

Group parse_group(std::string_view text) {
    for (Group g : {Group::Source, Group::Target, Group::Validation, Group::Test})
        if (to_string(g) == text) return g;
    throw ConfigError("unknown group '" + std::string(text) + "'");
}

Role parse_role(std::string_view text) {
    if (text == "HR") return Role::HR;
    if (text == "LR") return Role::LR;
    throw ConfigError("unknown role '" + std::string(text) + "'");
}

PairingMode parse_pairing_mode(std::string_view text) {
    if (text == "unpaired") return PairingMode::Unpaired;
    if (text == "misaligned") return PairingMode::Misaligned;
    throw ConfigError("unknown pairing mode '" + std::string(text) + "' (expected unpaired or misaligned)");
}

std::vector<const ManifestEntry*> DatasetManifest::select(Group g, std::optional<Role> r) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
        if (e.group == g && (!r || e.role == *r)) out.push_back(&e);
    return out;
}

std::vector<std::string> DatasetManifest::participants(Group g) const {
    std::vector<std::string> out;
    for (const auto& e : entries)
        if (e.group == g && std::find(out.begin(), out.end(), e.participant_id) == out.end())
            out.push_back(e.participant_id);
    return out;
}

const ManifestEntry* DatasetManifest::find(std::string_view participant, Group g, Role r) const {
    for (const auto& e : entries)
        if (e.participant_id == participant && e.group == g && e.role == r) return &e;
    return nullptr;
}

void DatasetManifest::validate() const {
    auto as_set = [&](Group g) {
        auto ids = participants(g);
        return std::set<std::string>(ids.begin(), ids.end());
    };
    const auto source = as_set(Group::Source);
    const auto target = as_set(Group::Target);
    const auto validation = as_set(Group::Validation);
    const auto test = as_set(Group::Test);

    auto disjoint = [](const std::set<std::string>& a, const std::set<std::string>& b) {
        return std::none_of(a.begin(), a.end(), [&](const std::string& id) { return b.count(id) > 0; });
    };
    if (mode == PairingMode::Unpaired) {
        if (!disjoint(source, target) || !disjoint(source, validation) || !disjoint(source, test))
            throw ConfigError("unpaired manifest: source participants overlap other groups");
    } else {
        if (source != target) throw ConfigError("misaligned manifest: source and target participants differ");
    }
    if (!disjoint(target, validation) || !disjoint(target, test) || !disjoint(validation, test))
        throw ConfigError("manifest: target/validation/test participants overlap");
}

DatasetManifest split_groups(const std::vector<std::string>& ids, const GroupCounts& counts, uint64_t seed,
                             PairingMode mode) {
    if (counts.source < 0 || counts.target < 0 || counts.validation < 0 || counts.test < 0)
        throw ConfigError("group counts must be non-negative");
    if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size())
        throw ConfigError("participant ids must be unique");

    const int64_t available = static_cast<int64_t>(ids.size());
    int64_t needed = counts.target + counts.validation + counts.test;
    if (mode == PairingMode::Unpaired) {
        needed += counts.source;
    } else if (counts.source != counts.target) {
        throw ConfigError("misaligned mode shares participants: source count must equal target count");
    }
    if (needed > available)
        throw ConfigError("insufficient participant ids: need " + std::to_string(needed) + ", have " +
                          std::to_string(available));

    std::vector<std::string> order = ids;
    std::mt19937_64 rng(seed);
    for (size_t k = order.size(); k > 1; --k)
        std::swap(order[k - 1], order[static_cast<size_t>(uniform_int(rng, 0, static_cast<int64_t>(k) - 1))]);

    DatasetManifest m;
    m.seed = seed;
    m.mode = mode;
    size_t next = 0;
    auto take = [&](int64_t n) {
        std::vector<std::string> out(order.begin() + static_cast<std::ptrdiff_t>(next),
                                     order.begin() + static_cast<std::ptrdiff_t>(next + n));
        next += static_cast<size_t>(n);
        return out;
    };

    std::vector<std::string> source_ids;
    if (mode == PairingMode::Unpaired) source_ids = take(counts.source);
    const auto target_ids = take(counts.target);
    if (mode == PairingMode::Misaligned) source_ids = target_ids;
    const auto validation_ids = take(counts.validation);
    const auto test_ids = take(counts.test);

    for (const auto& id : source_ids) m.entries.push_back({id, Group::Source, {}, Role::HR});
    for (const auto& id : target_ids) m.entries.push_back({id, Group::Target, {}, Role::LR});
    for (const auto& id : validation_ids) {
        m.entries.push_back({id, Group::Validation, {}, Role::LR});
        m.entries.push_back({id, Group::Validation, {}, Role::HR});
    }
    for (const auto& id : test_ids) {
        m.entries.push_back({id, Group::Test, {}, Role::LR});
        m.entries.push_back({id, Group::Test, {}, Role::HR});
    }
    m.validate();
    return m;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest " + path.string());
    out << "# udean dataset manifest\n"
        << "version " << DatasetManifest::kVersion << '\n'
        << "seed " << m.seed << '\n'
        << "mode " << to_string(m.mode) << '\n';
    const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    for (const auto& e : m.entries) {
        std::string p = "-";
        if (!e.volume_path.empty()) {
            const auto rel = e.volume_path.lexically_relative(base);
            const bool inside = !rel.empty() && *rel.begin() != "..";
            p = (inside ? rel : e.volume_path).generic_string();
        }
        if (p.find_first_of(" \t") != std::string::npos)
            throw IoError("manifest paths may not contain whitespace: " + p);
        out << "entry " << e.participant_id << ' ' << to_string(e.group) << ' ' << to_string(e.role) << ' ' << p
            << '\n';
    }
    if (!out) throw IoError("failed writing manifest " + path.string());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");

    DatasetManifest m;
    bool have_version = false;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream fields(line);
        std::string key;
        fields >> key;
        auto fail = [&](const std::string& why) {
            return IoError(path.string() + ":" + std::to_string(line_no) + ": " + why);
        };
        if (key == "version") {
            int version = 0;
            if (!(fields >> version)) throw fail("malformed version");
            if (version != DatasetManifest::kVersion)
                throw fail("unsupported manifest version " + std::to_string(version));
            have_version = true;
        } else if (key == "seed") {
            if (!(fields >> m.seed)) throw fail("malformed seed");
        } else if (key == "mode") {
            std::string mode;
            fields >> mode;
            m.mode = parse_pairing_mode(mode);
        } else if (key == "entry") {
            std::string id, group, role, p;
            if (!(fields >> id >> group >> role >> p)) throw fail("entry needs id, group, role, path");
            ManifestEntry e{id, parse_group(group), {}, parse_role(role)};
            if (p != "-") {
                std::filesystem::path vp(p);
                e.volume_path = vp.is_absolute() ? vp : base / vp;
            }
            m.entries.push_back(std::move(e));
        } else {
            throw fail("unknown key '" + key + "'");
        }
    }
    if (!have_version) throw IoError(path.string() + ": missing version line");
    m.validate();
    return m;
}

}  // namespace udean
