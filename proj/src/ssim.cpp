#include "udean/ssim.hpp"

#include <cmath>

#include "udean/error.hpp"

namespace udean {

torch::Tensor gaussian_window(int64_t window, double sigma, torch::Dtype dtype) {
    auto coords = torch::arange(window, torch::TensorOptions().dtype(torch::kFloat64)) -
                  static_cast<double>(window - 1) / 2.0;
    auto g = torch::exp(-(coords * coords) / (2.0 * sigma * sigma));
    g = g / g.sum();
    return torch::outer(g, g).to(dtype);
}

namespace {

/// (N, 1, X, Y, Z) -> (N * Z, 1, X, Y)
torch::Tensor slices_as_batch(const torch::Tensor& t) {
    const auto n = t.size(0), X = t.size(2), Y = t.size(3), Z = t.size(4);
    return t.permute({0, 4, 1, 2, 3}).reshape({n * Z, 1, X, Y});
}

}  // namespace

torch::Tensor ssim_per_sample(const torch::Tensor& x, const torch::Tensor& y, const SsimOptions& opt) {
    if (!x.sizes().equals(y.sizes())) throw ShapeError("ssim: input shapes differ");
    const bool single = x.dim() == 3;
    if (!single && (x.dim() != 5 || x.size(1) != 1)) throw ShapeError("ssim: expected (X,Y,Z) or (N,1,X,Y,Z)");
    auto a = single ? x.unsqueeze(0).unsqueeze(0) : x;
    auto b = single ? y.unsqueeze(0).unsqueeze(0) : y;
    if (a.size(2) < opt.window || a.size(3) < opt.window)
        throw ShapeError("ssim: slice " + std::to_string(a.size(2)) + "x" + std::to_string(a.size(3)) +
                         " smaller than the " + std::to_string(opt.window) + "-voxel window");
    const auto n = a.size(0), Z = a.size(4);
    a = slices_as_batch(a);
    b = slices_as_batch(b);

    const auto w = gaussian_window(opt.window, opt.sigma, a.scalar_type()).to(a.device()).view({1, 1, opt.window, opt.window});
    auto filt = [&](const torch::Tensor& t) { return torch::conv2d(t, w); };
    const double c1 = std::pow(opt.k1 * opt.data_range, 2);
    const double c2 = std::pow(opt.k2 * opt.data_range, 2);

    const auto mu_a = filt(a), mu_b = filt(b);
    const auto mu_aa = mu_a * mu_a, mu_bb = mu_b * mu_b, mu_ab = mu_a * mu_b;
    const auto var_a = filt(a * a) - mu_aa;
    const auto var_b = filt(b * b) - mu_bb;
    const auto cov = filt(a * b) - mu_ab;
    const auto map = ((2 * mu_ab + c1) * (2 * cov + c2)) / ((mu_aa + mu_bb + c1) * (var_a + var_b + c2));

    auto per_sample = map.reshape({n, Z, -1}).mean({1, 2});
    return single ? per_sample.squeeze(0) : per_sample;
}

double ssim_metric(const VolumeImage& x, const VolumeImage& y, const SsimOptions& opt) {
    if (x.shape != y.shape) throw ShapeError("ssim_metric: shapes " + to_string(x.shape) + " and " + to_string(y.shape) + " differ");
    return ssim_per_sample(to_tensor(x, torch::kFloat64), to_tensor(y, torch::kFloat64), opt).item<double>();
}

}  // namespace udean
