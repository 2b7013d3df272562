#include <algorithm>
#include <cmath>
#include <numbers>

#include "udean/degradation.hpp"
#include "udean/random.hpp"

namespace udean {

namespace {

struct Ellipsoid {
    std::array<double, 3> centre;
    std::array<double, 3> semi_axes;
    double angle;  // in-plane rotation, radians
    double intensity;
    std::array<double, 3> wave;  // texture wave vector, radians per voxel
    double phase;
    double texture_depth;
};

}  // namespace

VolumeImage make_phantom(const Shape3& shape, uint64_t seed) {
    std::mt19937_64 rng(seed);
    const int64_t count = uniform_int(rng, 5, 15);
    const std::array<double, 3> extent{static_cast<double>(shape[0]), static_cast<double>(shape[1]),
                                       static_cast<double>(shape[2])};

    // Distinct intensity levels, shuffled so draw order does not imply brightness.
    std::vector<double> levels(static_cast<size_t>(count));
    for (int64_t k = 0; k < count; ++k)
        levels[static_cast<size_t>(k)] = 0.25 + 0.75 * (static_cast<double>(k) + 0.5) / static_cast<double>(count);
    for (size_t k = levels.size(); k > 1; --k)
        std::swap(levels[k - 1], levels[static_cast<size_t>(uniform_int(rng, 0, static_cast<int64_t>(k) - 1))]);

    std::vector<Ellipsoid> shapes;
    for (int64_t k = 0; k < count; ++k) {
        Ellipsoid e{};
        // The first ellipsoid is a large "head" envelope; the rest sit inside it.
        const bool envelope = k == 0;
        for (int a = 0; a < 3; ++a) {
            e.centre[a] = envelope ? 0.5 * (extent[a] - 1) + uniform_real(rng, -0.03, 0.03) * extent[a]
                                   : uniform_real(rng, 0.25, 0.75) * (extent[a] - 1);
            e.semi_axes[a] = envelope ? uniform_real(rng, 0.40, 0.46) * extent[a]
                                      : uniform_real(rng, 0.08, 0.25) * extent[a];
        }
        if (!envelope) e.semi_axes[2] = std::max(e.semi_axes[2], uniform_real(rng, 0.3, 0.6) * extent[2]);
        else e.semi_axes[2] = std::max(e.semi_axes[2], 0.7 * extent[2]);
        e.angle = uniform_real(rng, 0.0, std::numbers::pi);
        e.intensity = envelope ? 0.3 * levels[0] : levels[static_cast<size_t>(k)];

        // Texture period between 3 and 7 voxels in-plane, in a random direction.
        const double period = uniform_real(rng, 3.0, 7.0);
        const double dir = uniform_real(rng, 0.0, 2.0 * std::numbers::pi);
        const double k_mag = 2.0 * std::numbers::pi / period;
        e.wave = {k_mag * std::cos(dir), k_mag * std::sin(dir), uniform_real(rng, -0.3, 0.3)};
        e.phase = uniform_real(rng, 0.0, 2.0 * std::numbers::pi);
        e.texture_depth = uniform_real(rng, 0.15, 0.35);
        shapes.push_back(e);
    }

    VolumeImage v(shape);
    constexpr double kEdgeWidthVox = 0.6;
    for (int64_t z = 0; z < shape[2]; ++z)
        for (int64_t y = 0; y < shape[1]; ++y)
            for (int64_t x = 0; x < shape[0]; ++x) {
                double value = 0.0;
                for (const auto& e : shapes) {
                    const double dx = static_cast<double>(x) - e.centre[0];
                    const double dy = static_cast<double>(y) - e.centre[1];
                    const double dz = static_cast<double>(z) - e.centre[2];
                    const double c = std::cos(e.angle), s = std::sin(e.angle);
                    const double u = (c * dx + s * dy) / e.semi_axes[0];
                    const double w = (-s * dx + c * dy) / e.semi_axes[1];
                    const double h = dz / e.semi_axes[2];
                    const double r = std::sqrt(u * u + w * w + h * h);
                    // Signed distance to the surface in voxels (approximate), smoothed.
                    const double min_axis = std::min({e.semi_axes[0], e.semi_axes[1]});
                    const double dist = (1.0 - r) * min_axis;
                    const double mask = 1.0 / (1.0 + std::exp(-dist / kEdgeWidthVox));
                    if (mask < 1e-6) continue;
                    const double phase = e.wave[0] * static_cast<double>(x) + e.wave[1] * static_cast<double>(y) +
                                         e.wave[2] * static_cast<double>(z) + e.phase;
                    const double textured = e.intensity * (1.0 + e.texture_depth * std::sin(phase));
                    value = value * (1.0 - mask) + textured * mask;
                }
                v.at(x, y, z) = value;
            }
    return normalize_unit_range(std::move(v));
}

}  // namespace udean
