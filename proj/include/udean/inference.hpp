#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "udean/degradation.hpp"
#include "udean/network.hpp"
#include "udean/ssim.hpp"

namespace udean {

/// Sliding-window layout over the LR grid.
struct StitchPlan {
    Shape3 patch_shape{64, 64, 3};
    Shape3 stride{32, 32, 1};

    /// Half-patch in-plane stride, single-slice through-slice stride.
    static StitchPlan overlapping(const Shape3& patch);
    /// Stride equal to the patch extent.
    static StitchPlan tiled(const Shape3& patch);

    /// Throws ConfigError unless 1 <= stride <= patch on every axis.
    void validate() const;
};

/// Patch origins along one axis: multiples of the stride, plus a final
/// origin flush with the far edge so every voxel is covered.
std::vector<int64_t> window_origins(int64_t extent, int64_t patch, int64_t stride);

/// Maps a batch of LR patches (N, 1, px, py, pz) to HR patches
/// (N, 1, px*sx, py*sy, pz*sz).
using PatchFunction = std::function<torch::Tensor(const torch::Tensor&)>;

/// Runs `fn` over every window of `lr`, averages overlapping HR outputs with
/// per-voxel weights and clamps to [0, 1]. Output spacing is lr spacing / s.
VolumeImage stitch(const VolumeImage& lr, const ScaleFactor& s, const StitchPlan& plan, const PatchFunction& fn,
                   int64_t batch_size = 16);

/// SR reconstruction through lr_encoder and sr_decoder only.
VolumeImage reconstruct(const VolumeImage& lr, const ComponentSet& c, const StitchPlan& plan,
                        int64_t batch_size = 16);

struct Psnr {
    double db = 0.0;
    bool infinite = false;
};

/// 10 log10(range^2 / MSE). Identical inputs report infinite = true.
Psnr psnr(const VolumeImage& x, const VolumeImage& y, double data_range = 1.0);

/// |sr - hr| voxel-wise.
VolumeImage error_map(const VolumeImage& sr, const VolumeImage& hr);

/// One 8-bit PGM per axial slice, grey level = min(err / scale_max, 1) * 255.
/// File names carry the colour-scale range: <stem>_z003_range0-0.2.pgm.
std::vector<std::filesystem::path> export_error_slices(const VolumeImage& err, const std::filesystem::path& dir,
                                                       const std::string& stem, double scale_max);

struct EvalRecord {
    std::string volume_id;
    std::string method;
    double ssim = 0.0;
    double psnr = 0.0;
    bool psnr_infinite = false;
};

struct MethodSummary {
    std::string method;
    int64_t count = 0;
    double ssim_mean = 0.0, ssim_std = 0.0;
    double psnr_mean = 0.0, psnr_std = 0.0;
};

struct EvalCase {
    std::string volume_id;
    VolumeImage lr;
    VolumeImage hr;
};

struct EvalMethod {
    std::string tag;
    std::function<VolumeImage(const VolumeImage& lr)> run;
};

inline constexpr const char* kTricubicTag = "tricubic";

/// Evaluates every method on every case. A tricubic row is prepended when the
/// list does not already name one. Records are ordered by method, then case.
std::vector<EvalRecord> evaluate(const std::vector<EvalCase>& cases, std::vector<EvalMethod> methods,
                                 const ScaleFactor& s, const SsimOptions& opt = {});

/// Mean and population standard deviation per method, in first-seen order.
/// Infinite PSNR rows are excluded from the PSNR statistics.
std::vector<MethodSummary> summarize(const std::vector<EvalRecord>& records);

/// method,volume_id,ssim,psnr with fixed 10-digit precision.
void write_metrics_csv(const std::vector<EvalRecord>& records, const std::filesystem::path& path);
std::vector<EvalRecord> read_metrics_csv(const std::filesystem::path& path);
/// method,count,ssim_mean,ssim_std,psnr_mean,psnr_std
void write_summary_csv(const std::vector<MethodSummary>& rows, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Feature dumps

struct FeatureDump {
    torch::Tensor f_s;  // (N, C, x, y, z) from the downsampling extractor on HR patches
    torch::Tensor f_t;  // same shape, from the LR encoder on LR patches
};

/// Encodes patch batches with no gradient tracking.
FeatureDump compute_features(const ComponentSet& c, const torch::Tensor& hr_patches, const torch::Tensor& lr_patches);

/// Writes every map as raw float32 (C, x, y, z order, x fastest within a
/// channel) plus features.tsv listing name, domain, shape and file.
void dump_features(const FeatureDump& dump, const std::filesystem::path& dir);

/// Global-average-pooled channel vectors, (N, C).
torch::Tensor pooled_features(const torch::Tensor& maps);

/// Held-out accuracy of a logistic-regression classifier separating two
/// sets of row vectors. Rows are split 50/50 per class with a seeded shuffle;
/// features are standardized with training statistics.
double linear_separability(const torch::Tensor& a, const torch::Tensor& b, uint64_t seed);

}  // namespace udean
