#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "udean/volume.hpp"

namespace udean {

/// Per-axis integer downsampling factor between the HR and LR grids.
struct ScaleFactor {
    int64_t sx = 2, sy = 2, sz = 2;

    [[nodiscard]] int64_t product() const { return sx * sy * sz; }
    [[nodiscard]] Shape3 as_shape() const { return {sx, sy, sz}; }
    /// Only 2x2x1 and 2x2x2 are supported by the networks.
    [[nodiscard]] bool supported() const { return sx == 2 && sy == 2 && (sz == 1 || sz == 2); }
    [[nodiscard]] std::string to_string() const;
    /// Parses "2x2x2" style strings.
    static ScaleFactor parse(const std::string& text);

    bool operator==(const ScaleFactor&) const = default;
};

Shape3 operator*(const Shape3& shape, const ScaleFactor& s);
/// Throws ShapeError if any axis is not divisible.
Shape3 divide_exact(const Shape3& shape, const ScaleFactor& s);

// ---------------------------------------------------------------------------
// K-space truncation

/// Bins kept per axis when reducing n samples to m = n / s: the centred block
/// [-floor(m/2), ceil(m/2) - 1]. For even m this is the asymmetric
/// [-m/2, m/2 - 1] convention.
struct RetainedBins {
    int64_t lowest;
    int64_t highest;
};
RetainedBins retained_bins(int64_t lr_extent);

/// Tensor form over the last three dimensions of `hr` (real or complex; any
/// leading batch/channel dimensions). Differentiable through torch::fft.
///
/// Forward DFT (unnormalized), keep the centred low-frequency block, project
/// it onto the Hermitian-symmetric subspace (which only touches the unpaired
/// Nyquist planes of even-length axes), inverse DFT with 1/N_lr, then scale
/// by 1/(sx*sy*sz) so the DC coefficient and hence the mean is preserved.
/// Real inputs yield real outputs. Complex inputs yield complex outputs and
/// skip the symmetry projection.
torch::Tensor kspace_truncate(const torch::Tensor& hr, const ScaleFactor& s);

/// Volume form. Throws ShapeError on non-divisible dims and Error when the
/// imaginary residue after the inverse transform exceeds 1e-9 * max|real|.
VolumeImage kspace_truncate(const VolumeImage& hr, const ScaleFactor& s);

// ---------------------------------------------------------------------------
// Simulated inter-scan misalignment

struct DeformationParams {
    double rot_hf_deg = 0.0;
    double rot_lr_deg = 0.0;
    double trans_hf_vox = 0.0;
    double trans_lr_vox = 0.0;
    double shrink_ap_vox = 0.0;
    double shrink_lr_vox = 0.0;
    uint64_t seed = 0;

    /// Throws ConfigError unless every parameter lies in [0, 2].
    void validate() const;
};

/// Upper bounds for random draws; each parameter is uniform in [0, max].
struct DeformationRanges {
    double rot_max_deg = 2.0;
    double trans_max_vox = 2.0;
    double shrink_max_vox = 2.0;

    bool operator==(const DeformationRanges&) const = default;
};

DeformationParams sample_deformation(const DeformationRanges& ranges, uint64_t seed);

/// Linear scale applied to an extent of `extent` voxels shrunk by `shrink` voxels.
inline double shrink_scale(int64_t extent, double shrink) {
    return (static_cast<double>(extent) - shrink) / static_cast<double>(extent);
}

/// Rotation about H-F then about L-R (both about the volume centre),
/// translation along H-F and L-R, then shrink along A-P and L-R about the
/// centre. Resampled with Keys cubic convolution; samples outside the field
/// of view are zero.
VolumeImage apply_misalignment(const VolumeImage& v, const DeformationParams& d);

/// The same transform without the range check; negative values reverse the
/// direction of a rotation or translation.
VolumeImage resample_deformed(const VolumeImage& v, const DeformationParams& d);

// ---------------------------------------------------------------------------
// Synthetic phantoms

/// Deterministic phantom of 5-15 smooth-edged ellipsoids with distinct
/// intensities modulated by fine sinusoidal texture, normalized to [0, 1].
VolumeImage make_phantom(const Shape3& shape, uint64_t seed);

// ---------------------------------------------------------------------------
// Patch sampling

struct PatchSpec {
    Shape3 lr_shape{64, 64, 3};
    ScaleFactor scale{};
    int64_t batch_size = 8;

    [[nodiscard]] Shape3 hr_shape() const { return lr_shape * scale; }
};

struct PatchPair {
    VolumeImage lr;
    std::optional<VolumeImage> hr;
    Shape3 lr_origin{0, 0, 0};

    [[nodiscard]] Shape3 hr_origin(const ScaleFactor& s) const { return lr_origin * s; }
};

/// `batch_size` patches at uniformly random valid LR origins. When `hr` is
/// given its shape must be lr.shape * scale and each pair carries the HR
/// block covering the same region.
std::vector<PatchPair> sample_patches(const VolumeImage& lr, const VolumeImage* hr, const PatchSpec& spec,
                                      std::mt19937_64& rng);

/// HR-only draw for unpaired training: origins lie on the scale lattice of
/// the HR grid, extent spec.hr_shape().
std::vector<VolumeImage> sample_hr_patches(const VolumeImage& hr, const PatchSpec& spec, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Interpolation

/// Keys cubic-convolution kernel (a = -0.5).
double cubic_kernel(double t);

/// Per-axis cubic interpolation onto the HR grid. HR voxel i samples LR
/// coordinate i / s, which is where the K-space truncated grid sits relative
/// to the HR grid; edges replicate. Output clamped to [0, 1].
VolumeImage tricubic_upsample(const VolumeImage& lr, const ScaleFactor& s);

/// Cubic-convolution sample of `v` at fractional voxel coordinates; taps
/// outside the volume read as zero.
double sample_cubic_zero(const VolumeImage& v, double x, double y, double z);

}  // namespace udean
