#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "udean/degradation.hpp"
#include "udean/losses.hpp"
#include "udean/manifest.hpp"
#include "udean/network.hpp"
#include "udean/trainer.hpp"

namespace udean {

enum class NormalizationScope { PerVolume, PerDataset };
std::string_view to_string(NormalizationScope s);
NormalizationScope parse_normalization_scope(std::string_view text);

struct DataConfig {
    PairingMode mode = PairingMode::Misaligned;
    /// Synthetic participants to generate; 0 reads HR volumes from paths.input_dir.
    int64_t phantom_count = 0;
    Shape3 phantom_shape{64, 64, 12};
    GroupCounts counts{};
    NormalizationScope normalization = NormalizationScope::PerVolume;
    DeformationRanges deformation{};

    bool operator==(const DataConfig&) const = default;
};

struct PathConfig {
    std::filesystem::path input_dir;
    std::filesystem::path data_dir = "data";
    std::filesystem::path run_dir = "run";

    bool operator==(const PathConfig&) const = default;
};

struct EvalConfig {
    Shape3 stitch_stride{32, 32, 1};
    double error_map_scale = 0.2;
    /// Patches per domain drawn for feature dumps.
    int64_t feature_patches = 64;
    int64_t ssim_window = 11;
    double ssim_sigma = 1.5;

    bool operator==(const EvalConfig&) const = default;
};

/// Everything one experiment needs. Persisted as JSON; unknown keys are
/// rejected and absent keys keep their defaults.
struct ExperimentConfig {
    uint64_t seed = 0;
    ScaleFactor scale{};
    int64_t threads = 1;
    PathConfig paths;
    DataConfig data;
    NetworkConfig network;
    TrainConfig train;
    loss::LossWeights loss;
    Shape3 lr_patch{64, 64, 3};
    EvalConfig eval;

    /// Copies seed and scale into the sub-configs and validates everything.
    void resolve();
    [[nodiscard]] PatchSpec patch_spec() const;
    [[nodiscard]] SsimOptions ssim_options() const;
    [[nodiscard]] StitchPlan stitch_plan() const;
    /// Paths resolved against the output root (UDEAN_OUTPUT_ROOT, else cwd).
    [[nodiscard]] std::filesystem::path data_dir() const;
    [[nodiscard]] std::filesystem::path run_dir() const;
    [[nodiscard]] std::filesystem::path manifest_path() const;

    bool operator==(const ExperimentConfig&) const = default;
};

inline constexpr const char* kOutputRootEnv = "UDEAN_OUTPUT_ROOT";
std::filesystem::path output_root();

nlohmann::ordered_json to_json(const ExperimentConfig& cfg);
/// Throws ConfigError naming the offending key.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
void save_experiment_config(const ExperimentConfig& cfg, const std::filesystem::path& path);

}  // namespace udean
