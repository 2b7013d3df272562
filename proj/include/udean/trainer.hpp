#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "udean/degradation.hpp"
#include "udean/inference.hpp"
#include "udean/losses.hpp"
#include "udean/manifest.hpp"
#include "udean/network.hpp"

namespace udean {

enum class TrainMode { Unsupervised, SupervisedBaseline };
std::string_view to_string(TrainMode m);
TrainMode parse_train_mode(std::string_view text);

struct TrainConfig {
    int64_t epochs = 30;
    int64_t batch_size = 8;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.99;
    double adam_eps = 1e-8;
    double lr_max = 1e-4;
    double lr_min = 1e-8;
    uint64_t seed = 0;
    TrainMode mode = TrainMode::Unsupervised;
    bool da_image_enabled = true;
    bool da_feature_enabled = true;
    /// Adversarial terms of the image cycle and HR consistency losses, scored
    /// by the LR discriminator after K-space truncation of the HR-domain image.
    bool hr_adversarial = true;
    /// Batches per epoch; 0 means one per target (or source, supervised) volume.
    int64_t iterations_per_epoch = 0;
    /// Validation volumes scored per epoch; 0 means all.
    int64_t validation_volumes = 0;
    bool keep_epoch_checkpoints = true;
    /// Hash parameter blocks around every step to prove isolation.
    bool check_isolation = true;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

/// Cosine decay from lr_max at t = 0 to lr_min at t = T.
double cosine_lr(int64_t t, int64_t T, double lr_max, double lr_min);

/// Every intermediate product of one training step.
struct ForwardBundle {
    torch::Tensor y_s;      // HR source patch
    torch::Tensor x_t;      // LR target patch
    torch::Tensor f_s;      // extractor(y_s)
    torch::Tensor x_st;     // lr_decoder(f_s): source degraded into the target domain
    torch::Tensor f_sts;    // lr_encoder(x_st)
    torch::Tensor y_sts;    // sr_decoder(f_sts): round-trip SR
    torch::Tensor f_t;      // lr_encoder(x_t)
    torch::Tensor x_hat_t;  // lr_decoder(f_t)
    torch::Tensor y_hat_s;  // sr_decoder(f_s)
};

ForwardBundle forward_step(const torch::Tensor& y_s, const torch::Tensor& x_t, ComponentSet& c);

/// ADAM state per component family, all driven by one scheduled rate.
struct Optimizers {
    std::unique_ptr<torch::optim::Adam> generators;
    std::unique_ptr<torch::optim::Adam> lr_discriminator;
    std::unique_ptr<torch::optim::Adam> feature_discriminator;

    Optimizers(ComponentSet& c, const TrainConfig& cfg);
    void set_lr(double lr);
};

/// Counts updates so the one-discriminator-pass, one-generator-pass
/// alternation can be asserted per batch.
struct UpdateCounters {
    int64_t discriminator_passes = 0;
    int64_t generator_passes = 0;
};

struct DiscriminatorLosses {
    std::optional<double> lrd;
    std::optional<double> fd;
};

/// One update of each enabled discriminator on detached fakes.
DiscriminatorLosses discriminator_step(const ForwardBundle& b, ComponentSet& c, Optimizers& opt,
                                       const TrainConfig& cfg, UpdateCounters* counters = nullptr);

/// Differentiable generator objective for a bundle (no update). Disabled
/// adaptation paths report zero and are excluded.
struct GeneratorObjective {
    loss::GeneratorTerms<torch::Tensor> terms;
    torch::Tensor total;
};
GeneratorObjective generator_objective(const ForwardBundle& b, ComponentSet& c, const loss::LossWeights& w,
                                       const TrainConfig& cfg, const SsimOptions& ssim = {});

/// One update over the four generator components with the discriminators
/// frozen. Throws NumericAbort naming the first non-finite component.
loss::LossReport generator_step(const ForwardBundle& b, ComponentSet& c, const loss::LossWeights& w,
                                Optimizers& opt, const TrainConfig& cfg, UpdateCounters* counters = nullptr);

/// Supervised baseline: lr_encoder + sr_decoder against the paired HR patch
/// with l1 + alpha * ssim.
loss::LossReport supervised_step(const torch::Tensor& x_lr, const torch::Tensor& y_hr, ComponentSet& c,
                                 const loss::LossWeights& w, Optimizers& opt, UpdateCounters* counters = nullptr);

/// FNV-1a over the raw bytes of the given parameters.
uint64_t parameter_hash(const std::vector<torch::Tensor>& params);

/// Volumes a training run draws from, already normalized.
struct TrainData {
    std::vector<std::string> source_ids;
    std::vector<VolumeImage> source_hr;
    std::vector<std::string> target_ids;
    std::vector<VolumeImage> target_lr;
    std::vector<EvalCase> validation;
};

/// Loads source HR, target LR and validation pairs named by the manifest.
TrainData load_train_data(const DatasetManifest& m);

struct IterationLog {
    int64_t iteration = 0;
    int64_t epoch = 0;
    double lr = 0.0;
    loss::LossReport report;
};

struct ValidationRow {
    int64_t epoch = 0;
    double ssim_mean = 0.0, ssim_std = 0.0;
    double psnr_mean = 0.0, psnr_std = 0.0;
};

struct TrainHistory {
    std::vector<IterationLog> iterations;
    std::vector<ValidationRow> validation;
    std::vector<std::filesystem::path> checkpoints;
    int64_t best_epoch = -1;
    bool complete = false;
};

struct TrainOptions {
    /// Run directory for logs and checkpoints; empty keeps everything in memory.
    std::filesystem::path run_dir;
    /// Called after every iteration; handy for progress output.
    std::function<void(const IterationLog&)> on_iteration;
};

/// Full alternating training loop. Writes, under run_dir:
///   loss_log.jsonl, validation.csv, checkpoints/epoch_NNN.ckpt,
///   checkpoints/best.ckpt, best.json and COMPLETE when the last epoch ends.
TrainHistory train(const TrainData& data, ComponentSet& c, const TrainConfig& cfg, const loss::LossWeights& w,
                   const PatchSpec& spec, const TrainOptions& options = {});

/// One structured log line for an iteration.
std::string format_log_line(const IterationLog& log);

inline constexpr const char* kLossLogFile = "loss_log.jsonl";
inline constexpr const char* kValidationFile = "validation.csv";
inline constexpr const char* kCompleteMarker = "COMPLETE";
inline constexpr const char* kBestCheckpoint = "checkpoints/best.ckpt";

}  // namespace udean
