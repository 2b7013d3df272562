#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace udean {

/// Anatomical axis labels. Orientation sign is not tracked; only which array
/// axis runs along which anatomical direction.
enum class Axis { LR, AP, HF };

std::string_view to_string(Axis axis);
Axis parse_axis(std::string_view text);

using Shape3 = std::array<int64_t, 3>;

std::string to_string(const Shape3& shape);

/// A 3D scalar intensity grid. Storage is x-fastest (NIfTI order):
/// index = x + nx * (y + ny * z).
struct VolumeImage {
    Shape3 shape{0, 0, 0};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::array<Axis, 3> axes{Axis::LR, Axis::AP, Axis::HF};
    /// (min, max) of the intensities before unit-range normalization.
    std::pair<double, double> intensity_range{0.0, 0.0};
    std::vector<double> data;

    VolumeImage() = default;
    explicit VolumeImage(Shape3 shape, double fill = 0.0);

    [[nodiscard]] int64_t voxel_count() const { return shape[0] * shape[1] * shape[2]; }

    [[nodiscard]] size_t index(int64_t x, int64_t y, int64_t z) const {
        return static_cast<size_t>(x + shape[0] * (y + shape[1] * z));
    }
    double& at(int64_t x, int64_t y, int64_t z) { return data[index(x, y, z)]; }
    [[nodiscard]] double at(int64_t x, int64_t y, int64_t z) const { return data[index(x, y, z)]; }

    /// Array axis (0..2) carrying the given anatomical label; throws ShapeError
    /// when the label is absent.
    [[nodiscard]] int axis_of(Axis label) const;

    [[nodiscard]] std::pair<double, double> min_max() const;
    [[nodiscard]] double mean() const;
};

/// Copies only the geometry (axes, spacing) of `like`, with a new shape.
VolumeImage volume_like(const VolumeImage& like, Shape3 shape, double fill = 0.0);

/// Sub-block starting at `origin` with extent `extent`. Throws ShapeError when
/// the block leaves the volume.
VolumeImage crop(const VolumeImage& v, const Shape3& origin, const Shape3& extent);

/// Throws IoError naming the first non-finite voxel.
void require_finite(const VolumeImage& v, std::string_view what);

/// (v - min) / (max - min); constant volumes map to zeros. The pre-normalization
/// (min, max) is recorded in intensity_range.
VolumeImage normalize_unit_range(VolumeImage v);

/// Maps several volumes with one shared (min, max), the per-dataset variant.
std::vector<VolumeImage> normalize_unit_range_shared(std::vector<VolumeImage> volumes);

enum class VolumeFormat { Nifti1, RawF32 };

VolumeFormat format_from_path(const std::filesystem::path& path);

/// Reads a volume. For raw-f32 the sidecar `<path>.meta` supplies the
/// geometry. Intensities are returned unmodified.
VolumeImage load_volume(const std::filesystem::path& path, VolumeFormat format);
VolumeImage load_volume(const std::filesystem::path& path);

/// Writes float32 payloads; values not representable in float32 are rounded.
void save_volume(const VolumeImage& v, const std::filesystem::path& path, VolumeFormat format);
void save_volume(const VolumeImage& v, const std::filesystem::path& path);

std::filesystem::path raw_sidecar_path(const std::filesystem::path& raw_path);

/// View a volume as an (nx, ny, nz) tensor, copying the data.
torch::Tensor to_tensor(const VolumeImage& v, torch::Dtype dtype = torch::kFloat32);

/// Inverse of to_tensor; `t` must be 3D. Geometry is taken from `like`.
VolumeImage from_tensor(const torch::Tensor& t, const VolumeImage& like);

}  // namespace udean
