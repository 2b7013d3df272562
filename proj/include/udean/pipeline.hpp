#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "udean/config.hpp"
#include "udean/inference.hpp"
#include "udean/manifest.hpp"
#include "udean/trainer.hpp"

namespace udean {

/// Seed stream indices; each consumer draws from its own derived stream.
enum SeedStream : uint64_t {
    kSeedSplit = 1,
    kSeedNetwork = 2,
    kSeedFeaturePatches = 3,
    kSeedClassifier = 4,
    kSeedPhantomBase = 1000,
    kSeedDeformationBase = 100000,
};

/// Builds the dataset: phantoms (or HR volumes from paths.input_dir),
/// normalization, LR by K-space truncation, deformed source HR copies in
/// misaligned mode, and the manifest at cfg.manifest_path().
DatasetManifest prepare_data(const ExperimentConfig& cfg);

/// Fresh components for the configuration, seeded from cfg.seed.
ComponentSet build_components(const ExperimentConfig& cfg);

/// Trains into cfg.run_dir(), echoing the resolved config as config.json.
TrainHistory run_training(const ExperimentConfig& cfg, const TrainOptions& extra = {});

/// Loads a checkpoint after checking it against the configuration; the
/// check happens before any tensor is read.
ComponentSet load_compatible(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint);

/// Reconstructs one LR volume and writes the SR volume.
VolumeImage run_infer(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                      const std::filesystem::path& input, const std::filesystem::path& output);

/// Test-group evaluation. Rows: tricubic, udean (the checkpoint), then any
/// extra (tag, checkpoint) pairs. Writes metrics/metrics.csv,
/// metrics/summary.csv and per-volume error maps of the udean output under
/// cfg.run_dir().
std::vector<EvalRecord> run_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                                     const std::vector<std::pair<std::string, std::filesystem::path>>& extra = {});

/// Test cases (LR, HR) of the manifest.
std::vector<EvalCase> load_test_cases(const DatasetManifest& m);

struct FeatureReport {
    FeatureDump dump;
    double separability = 0.0;
};

/// Source HR and target LR patches drawn deterministically from the manifest.
std::pair<torch::Tensor, torch::Tensor> feature_patches(const ExperimentConfig& cfg, const DatasetManifest& m);

/// Dumps f_s / f_t for the feature patches (untrained network when no
/// checkpoint is given) and reports held-out linear separability of their
/// pooled channel vectors.
FeatureReport run_dump_features(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& checkpoint,
                                const std::filesystem::path& out_dir);

}  // namespace udean
