#include "udean/inference.hpp"

#include <algorithm>
#include <cmath>

#include "udean/error.hpp"

namespace udean {

StitchPlan StitchPlan::overlapping(const Shape3& patch) {
    return {patch, {std::max<int64_t>(1, patch[0] / 2), std::max<int64_t>(1, patch[1] / 2), 1}};
}

StitchPlan StitchPlan::tiled(const Shape3& patch) { return {patch, patch}; }

void StitchPlan::validate() const {
    for (int a = 0; a < 3; ++a)
        if (patch_shape[a] < 1 || stride[a] < 1 || stride[a] > patch_shape[a])
            throw ConfigError("stitch plan: stride " + to_string(stride) + " must lie in [1, patch " +
                              to_string(patch_shape) + "]");
}

std::vector<int64_t> window_origins(int64_t extent, int64_t patch, int64_t stride) {
    if (patch > extent)
        throw ShapeError("volume extent " + std::to_string(extent) + " smaller than patch " + std::to_string(patch));
    std::vector<int64_t> out;
    for (int64_t o = 0; o + patch <= extent; o += stride) out.push_back(o);
    if (out.back() + patch < extent) out.push_back(extent - patch);
    return out;
}

VolumeImage stitch(const VolumeImage& lr, const ScaleFactor& s, const StitchPlan& plan, const PatchFunction& fn,
                   int64_t batch_size) {
    plan.validate();
    const Shape3& p = plan.patch_shape;
    const Shape3 hp = p * s;
    const Shape3 hr_shape = lr.shape * s;
    std::array<std::vector<int64_t>, 3> origins;
    for (int a = 0; a < 3; ++a) origins[a] = window_origins(lr.shape[a], p[a], plan.stride[a]);

    std::vector<Shape3> windows;
    for (auto oz : origins[2])
        for (auto oy : origins[1])
            for (auto ox : origins[0]) windows.push_back({ox, oy, oz});

    const auto volume = to_tensor(lr, torch::kFloat32);
    auto sum = torch::zeros({hr_shape[0], hr_shape[1], hr_shape[2]}, torch::kFloat64);
    auto weight = torch::zeros_like(sum);
    using torch::indexing::Slice;

    // Windows are processed and accumulated in a fixed order, so the per-voxel
    // sums are reproducible.
    for (size_t start = 0; start < windows.size(); start += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(windows.size(), start + static_cast<size_t>(batch_size));
        std::vector<torch::Tensor> patches;
        for (size_t i = start; i < end; ++i) {
            const auto& o = windows[i];
            patches.push_back(volume.index({Slice(o[0], o[0] + p[0]), Slice(o[1], o[1] + p[1]),
                                            Slice(o[2], o[2] + p[2])}));
        }
        const auto out = fn(torch::stack(patches).unsqueeze(1)).to(torch::kFloat64);
        const std::vector<int64_t> expected{static_cast<int64_t>(end - start), 1, hp[0], hp[1], hp[2]};
        if (out.sizes().vec() != expected)
            throw ShapeError("patch function returned " + c10::str(out.sizes()) + ", expected " +
                             c10::str(torch::IntArrayRef(expected)));
        for (size_t i = start; i < end; ++i) {
            const Shape3 o = windows[i] * s;
            const auto region = std::vector<torch::indexing::TensorIndex>{
                Slice(o[0], o[0] + hp[0]), Slice(o[1], o[1] + hp[1]), Slice(o[2], o[2] + hp[2])};
            sum.index(region).add_(out[static_cast<int64_t>(i - start)][0]);
            weight.index(region).add_(1.0);
        }
    }

    VolumeImage result = volume_like(lr, hr_shape);
    for (int a = 0; a < 3; ++a) result.spacing[a] = lr.spacing[a] / static_cast<double>(s.as_shape()[a]);
    result.intensity_range = lr.intensity_range;
    return from_tensor((sum / weight).clamp(0.0, 1.0), result);
}

VolumeImage reconstruct(const VolumeImage& lr, const ComponentSet& c, const StitchPlan& plan, int64_t batch_size) {
    torch::NoGradGuard guard;
    const auto dtype = c.lr_encoder->parameters().front().scalar_type();
    auto encoder = c.lr_encoder;
    auto decoder = c.sr_decoder;
    return stitch(
        lr, c.config.scale, plan,
        [&](const torch::Tensor& x) { return decoder->forward(encoder->forward(x.to(dtype))); }, batch_size);
}

Psnr psnr(const VolumeImage& x, const VolumeImage& y, double data_range) {
    if (x.shape != y.shape) throw ShapeError("psnr: shapes " + to_string(x.shape) + " and " + to_string(y.shape) + " differ");
    double sq = 0.0;
    for (size_t i = 0; i < x.data.size(); ++i) {
        const double d = x.data[i] - y.data[i];
        sq += d * d;
    }
    const double mse = sq / static_cast<double>(x.data.size());
    if (mse == 0.0) return {std::numeric_limits<double>::infinity(), true};
    return {10.0 * std::log10(data_range * data_range / mse), false};
}

VolumeImage error_map(const VolumeImage& sr, const VolumeImage& hr) {
    if (sr.shape != hr.shape) throw ShapeError("error_map: shapes " + to_string(sr.shape) + " and " + to_string(hr.shape) + " differ");
    VolumeImage out = volume_like(hr, hr.shape);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::abs(sr.data[i] - hr.data[i]);
    return out;
}

}  // namespace udean
