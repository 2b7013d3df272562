#pragma once

#include <torch/torch.h>

#include "udean/volume.hpp"

namespace udean {

/// Slice-wise SSIM with a Gaussian window, 'valid' extent (no padding).
struct SsimOptions {
    int64_t window = 11;
    double sigma = 1.5;
    double data_range = 1.0;
    double k1 = 0.01;
    double k2 = 0.03;
};

/// Normalized 2D Gaussian window of the given size, shape (window, window).
torch::Tensor gaussian_window(int64_t window, double sigma, torch::Dtype dtype);

/// Per-sample mean SSIM over all axial slices. Accepts (X, Y, Z) or
/// (N, C, X, Y, Z) with C = 1 and returns shape () or (N) respectively.
/// Differentiable. Throws ShapeError when a slice is smaller than the window.
torch::Tensor ssim_per_sample(const torch::Tensor& x, const torch::Tensor& y, const SsimOptions& opt = {});

/// Double-precision metric between two volumes of equal shape.
double ssim_metric(const VolumeImage& x, const VolumeImage& y, const SsimOptions& opt = {});

}  // namespace udean
