#include <cmath>

#include "udean/degradation.hpp"
#include "udean/error.hpp"

namespace udean {

std::string ScaleFactor::to_string() const {
    return std::to_string(sx) + "x" + std::to_string(sy) + "x" + std::to_string(sz);
}

ScaleFactor ScaleFactor::parse(const std::string& text) {
    ScaleFactor s;
    char x1 = 0, x2 = 0;
    long long a = 0, b = 0, c = 0;
    if (std::sscanf(text.c_str(), "%lld%c%lld%c%lld", &a, &x1, &b, &x2, &c) != 5 || x1 != 'x' || x2 != 'x' ||
        a < 1 || b < 1 || c < 1)
        throw ShapeError("malformed scale factor '" + text + "' (expected e.g. 2x2x2)");
    s.sx = a;
    s.sy = b;
    s.sz = c;
    return s;
}

Shape3 operator*(const Shape3& shape, const ScaleFactor& s) {
    return {shape[0] * s.sx, shape[1] * s.sy, shape[2] * s.sz};
}

Shape3 divide_exact(const Shape3& shape, const ScaleFactor& s) {
    if (shape[0] % s.sx || shape[1] % s.sy || shape[2] % s.sz)
        throw ShapeError("shape " + to_string(shape) + " is not divisible by scale " + s.to_string());
    return {shape[0] / s.sx, shape[1] / s.sy, shape[2] / s.sz};
}

RetainedBins retained_bins(int64_t lr_extent) {
    return {-(lr_extent / 2), (lr_extent + 1) / 2 - 1};
}

namespace {

/// HR spectrum indices feeding small-grid positions 0..m-1 (FFT ordering).
torch::Tensor gather_index(int64_t n, int64_t m) {
    const auto bins = retained_bins(m);
    std::vector<int64_t> idx(static_cast<size_t>(m));
    for (int64_t j = 0; j < m; ++j) {
        const int64_t k = j <= bins.highest ? j : j - m;
        idx[static_cast<size_t>(j)] = ((k % n) + n) % n;
    }
    return torch::tensor(idx, torch::kInt64);
}

/// Small-grid positions of the negated frequency, -j mod m.
torch::Tensor mirror_index(int64_t m) {
    std::vector<int64_t> idx(static_cast<size_t>(m));
    for (int64_t j = 0; j < m; ++j) idx[static_cast<size_t>(j)] = (m - j) % m;
    return torch::tensor(idx, torch::kInt64);
}

torch::Tensor truncate_complex(const torch::Tensor& hr, const ScaleFactor& s, bool hermitian) {
    if (hr.dim() < 3) throw ShapeError("kspace_truncate needs at least 3 dimensions");
    const std::array<int64_t, 3> factors{s.sx, s.sy, s.sz};
    std::array<int64_t, 3> m{};
    for (int a = 0; a < 3; ++a) {
        const int64_t n = hr.size(hr.dim() - 3 + a);
        if (n % factors[a] != 0)
            throw ShapeError("kspace_truncate: extent " + std::to_string(n) + " not divisible by " +
                             std::to_string(factors[a]));
        m[a] = n / factors[a];
        if (factors[a] > 1 && m[a] < 2)
            throw ShapeError("kspace_truncate: downsampled axis must keep at least 2 frequency bins");
    }

    const std::vector<int64_t> dims{-3, -2, -1};
    auto spectrum = torch::fft::fftn(hr, c10::nullopt, dims);
    for (int a = 0; a < 3; ++a) {
        const int64_t dim = a - 3;
        const int64_t n = hr.size(hr.dim() - 3 + a);
        spectrum = spectrum.index_select(dim, gather_index(n, m[a]).to(hr.device()));
    }
    if (hermitian) {
        auto mirrored = spectrum;
        for (int a = 0; a < 3; ++a) mirrored = mirrored.index_select(a - 3, mirror_index(m[a]).to(hr.device()));
        spectrum = 0.5 * (spectrum + torch::conj(mirrored));
    }
    auto lr = torch::fft::ifftn(spectrum, c10::nullopt, dims);
    return lr / static_cast<double>(s.product());
}

}  // namespace

torch::Tensor kspace_truncate(const torch::Tensor& hr, const ScaleFactor& s) {
    if (hr.is_complex()) return truncate_complex(hr, s, false);
    return torch::real(truncate_complex(hr, s, true));
}

VolumeImage kspace_truncate(const VolumeImage& hr, const ScaleFactor& s) {
    divide_exact(hr.shape, s);
    const auto input = to_tensor(hr, torch::kFloat64);
    auto out = truncate_complex(input, s, true);
    auto real = torch::real(out);
    // An all-zero output (e.g. pure Nyquist input) has no real scale of its
    // own; fall back on the input magnitude.
    const double scale = std::max(real.abs().max().item<double>(), input.abs().max().item<double>());
    const double max_imag = torch::imag(out).abs().max().item<double>();
    if (max_imag > 1e-9 * scale && max_imag > 0.0)
        throw Error("kspace_truncate: imaginary residue " + std::to_string(max_imag) +
                    " exceeds tolerance; DFT convention error");

    VolumeImage lr = from_tensor(real, hr);
    for (int a = 0; a < 3; ++a) lr.spacing[a] = hr.spacing[a] * static_cast<double>(s.as_shape()[a]);
    return lr;
}

}  // namespace udean
