#include <array>
#include <cmath>
#include <numbers>

#include "udean/degradation.hpp"
#include "udean/error.hpp"
#include "udean/random.hpp"

namespace udean {

void DeformationParams::validate() const {
    const std::array<std::pair<const char*, double>, 6> fields{{{"rot_hf_deg", rot_hf_deg},
                                                                {"rot_lr_deg", rot_lr_deg},
                                                                {"trans_hf_vox", trans_hf_vox},
                                                                {"trans_lr_vox", trans_lr_vox},
                                                                {"shrink_ap_vox", shrink_ap_vox},
                                                                {"shrink_lr_vox", shrink_lr_vox}}};
    for (const auto& [name, value] : fields)
        if (!(value >= 0.0 && value <= 2.0))
            throw ConfigError(std::string("deformation parameter ") + name + " = " + std::to_string(value) +
                              " outside [0, 2]");
}

DeformationParams sample_deformation(const DeformationRanges& ranges, uint64_t seed) {
    std::mt19937_64 rng(seed);
    DeformationParams d;
    d.seed = seed;
    d.rot_hf_deg = uniform_real(rng, 0.0, ranges.rot_max_deg);
    d.rot_lr_deg = uniform_real(rng, 0.0, ranges.rot_max_deg);
    d.trans_hf_vox = uniform_real(rng, 0.0, ranges.trans_max_vox);
    d.trans_lr_vox = uniform_real(rng, 0.0, ranges.trans_max_vox);
    d.shrink_ap_vox = uniform_real(rng, 0.0, ranges.shrink_max_vox);
    d.shrink_lr_vox = uniform_real(rng, 0.0, ranges.shrink_max_vox);
    d.validate();
    return d;
}

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;
using Vec3 = std::array<double, 3>;

Mat3 identity() { return {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}; }

/// Rotation by `deg` in the plane spanned by anatomical axes (a, b).
Mat3 plane_rotation(int a, int b, double deg) {
    Mat3 r = identity();
    const double rad = deg * std::numbers::pi / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    r[a][a] = c;
    r[a][b] = -s;
    r[b][a] = s;
    r[b][b] = c;
    return r;
}

Vec3 transpose_times(const Mat3& m, const Vec3& v) {
    Vec3 out{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out[i] += m[j][i] * v[j];
    return out;
}

}  // namespace

VolumeImage apply_misalignment(const VolumeImage& v, const DeformationParams& d) {
    d.validate();
    return resample_deformed(v, d);
}

VolumeImage resample_deformed(const VolumeImage& v, const DeformationParams& d) {
    // Anatomical frame index: 0 = L-R, 1 = A-P, 2 = H-F.
    const std::array<int, 3> array_axis{v.axis_of(Axis::LR), v.axis_of(Axis::AP), v.axis_of(Axis::HF)};

    const Mat3 rot_hf = plane_rotation(0, 1, d.rot_hf_deg);
    const Mat3 rot_lr = plane_rotation(1, 2, d.rot_lr_deg);

    Vec3 spacing{}, centre{}, shrink{1.0, 1.0, 1.0}, translate_mm{};
    for (int k = 0; k < 3; ++k) {
        const int a = array_axis[k];
        spacing[k] = v.spacing[a];
        centre[k] = 0.5 * static_cast<double>(v.shape[a] - 1);
    }
    shrink[0] = shrink_scale(v.shape[array_axis[0]], d.shrink_lr_vox);
    shrink[1] = shrink_scale(v.shape[array_axis[1]], d.shrink_ap_vox);
    translate_mm[0] = d.trans_lr_vox * spacing[0];
    translate_mm[2] = d.trans_hf_vox * spacing[2];

    VolumeImage out = volume_like(v, v.shape);
    for (int64_t z = 0; z < v.shape[2]; ++z)
        for (int64_t y = 0; y < v.shape[1]; ++y)
            for (int64_t x = 0; x < v.shape[0]; ++x) {
                const int64_t p[3] = {x, y, z};
                // Output position in mm about the centre, anatomical frame.
                Vec3 q{};
                for (int k = 0; k < 3; ++k)
                    q[k] = (static_cast<double>(p[array_axis[k]]) - centre[k]) * spacing[k];
                // Invert: shrink, translation, then the two rotations in reverse order.
                for (int k = 0; k < 3; ++k) q[k] = q[k] / shrink[k] - translate_mm[k];
                q = transpose_times(rot_hf, transpose_times(rot_lr, q));

                double src[3];
                for (int k = 0; k < 3; ++k) src[array_axis[k]] = q[k] / spacing[k] + centre[k];
                out.at(x, y, z) = sample_cubic_zero(v, src[0], src[1], src[2]);
            }
    return out;
}

}  // namespace udean
