#include "udean/degradation.hpp"
#include "udean/error.hpp"
#include "udean/random.hpp"

namespace udean {

namespace {

Shape3 random_origin(const Shape3& volume, const Shape3& patch, std::mt19937_64& rng) {
    Shape3 origin{};
    for (int a = 0; a < 3; ++a) {
        if (patch[a] > volume[a])
            throw ShapeError("patch " + to_string(patch) + " larger than volume " + to_string(volume));
        origin[a] = uniform_int(rng, 0, volume[a] - patch[a]);
    }
    return origin;
}

}  // namespace

std::vector<PatchPair> sample_patches(const VolumeImage& lr, const VolumeImage* hr, const PatchSpec& spec,
                                      std::mt19937_64& rng) {
    if (hr && hr->shape != lr.shape * spec.scale)
        throw ShapeError("HR shape " + to_string(hr->shape) + " is not LR shape " + to_string(lr.shape) +
                         " times scale " + spec.scale.to_string());
    std::vector<PatchPair> out;
    out.reserve(static_cast<size_t>(spec.batch_size));
    for (int64_t b = 0; b < spec.batch_size; ++b) {
        PatchPair pair;
        pair.lr_origin = random_origin(lr.shape, spec.lr_shape, rng);
        pair.lr = crop(lr, pair.lr_origin, spec.lr_shape);
        if (hr) pair.hr = crop(*hr, pair.hr_origin(spec.scale), spec.hr_shape());
        out.push_back(std::move(pair));
    }
    return out;
}

std::vector<VolumeImage> sample_hr_patches(const VolumeImage& hr, const PatchSpec& spec, std::mt19937_64& rng) {
    const Shape3 lattice = divide_exact(hr.shape, spec.scale);
    std::vector<VolumeImage> out;
    out.reserve(static_cast<size_t>(spec.batch_size));
    for (int64_t b = 0; b < spec.batch_size; ++b) {
        const Shape3 origin = random_origin(lattice, spec.lr_shape, rng);
        out.push_back(crop(hr, origin * spec.scale, spec.hr_shape()));
    }
    return out;
}

}  // namespace udean
