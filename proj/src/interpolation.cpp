#include <algorithm>
#include <cmath>

#include "udean/degradation.hpp"

namespace udean {

double cubic_kernel(double t) {
    constexpr double a = -0.5;
    t = std::fabs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

namespace {

struct Taps {
    int64_t first;
    double w[4];
};

Taps taps_at(double u) {
    const double base = std::floor(u);
    const double t = u - base;
    return {static_cast<int64_t>(base) - 1, {cubic_kernel(t + 1.0), cubic_kernel(t), cubic_kernel(1.0 - t),
                                             cubic_kernel(2.0 - t)}};
}

/// Upsamples along one array axis by an integer factor, replicating edges.
VolumeImage upsample_axis(const VolumeImage& in, int axis, int64_t factor) {
    if (factor == 1) return in;
    Shape3 out_shape = in.shape;
    out_shape[axis] *= factor;
    VolumeImage out = volume_like(in, out_shape);
    const int64_t n = in.shape[axis];

    std::vector<Taps> taps(static_cast<size_t>(out_shape[axis]));
    for (int64_t i = 0; i < out_shape[axis]; ++i)
        taps[static_cast<size_t>(i)] = taps_at(static_cast<double>(i) / static_cast<double>(factor));

    for (int64_t z = 0; z < out_shape[2]; ++z)
        for (int64_t y = 0; y < out_shape[1]; ++y)
            for (int64_t x = 0; x < out_shape[0]; ++x) {
                int64_t pos[3] = {x, y, z};
                const Taps& tp = taps[static_cast<size_t>(pos[axis])];
                double acc = 0.0;
                for (int k = 0; k < 4; ++k) {
                    int64_t src[3] = {x, y, z};
                    src[axis] = std::clamp<int64_t>(tp.first + k, 0, n - 1);
                    acc += tp.w[k] * in.at(src[0], src[1], src[2]);
                }
                out.at(x, y, z) = acc;
            }
    return out;
}

}  // namespace

VolumeImage tricubic_upsample(const VolumeImage& lr, const ScaleFactor& s) {
    VolumeImage out = upsample_axis(lr, 0, s.sx);
    out = upsample_axis(out, 1, s.sy);
    out = upsample_axis(out, 2, s.sz);
    for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
    for (int a = 0; a < 3; ++a) out.spacing[a] = lr.spacing[a] / static_cast<double>(s.as_shape()[a]);
    return out;
}

double sample_cubic_zero(const VolumeImage& v, double x, double y, double z) {
    const Taps tx = taps_at(x), ty = taps_at(y), tz = taps_at(z);
    // Entirely outside the support: every tap reads zero.
    if (tx.first + 3 < 0 || ty.first + 3 < 0 || tz.first + 3 < 0 || tx.first >= v.shape[0] ||
        ty.first >= v.shape[1] || tz.first >= v.shape[2])
        return 0.0;
    double acc = 0.0;
    for (int k = 0; k < 4; ++k) {
        const int64_t zi = tz.first + k;
        if (zi < 0 || zi >= v.shape[2] || tz.w[k] == 0.0) continue;
        for (int j = 0; j < 4; ++j) {
            const int64_t yi = ty.first + j;
            if (yi < 0 || yi >= v.shape[1] || ty.w[j] == 0.0) continue;
            double row = 0.0;
            for (int i = 0; i < 4; ++i) {
                const int64_t xi = tx.first + i;
                if (xi < 0 || xi >= v.shape[0]) continue;
                row += tx.w[i] * v.at(xi, yi, zi);
            }
            acc += tz.w[k] * ty.w[j] * row;
        }
    }
    return acc;
}

}  // namespace udean
