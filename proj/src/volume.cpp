#include "udean/volume.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "udean/error.hpp"
#include "nifti_internal.hpp"

namespace udean {

std::string_view to_string(Axis axis) {
    switch (axis) {
        case Axis::LR: return "L-R";
        case Axis::AP: return "A-P";
        case Axis::HF: return "H-F";
    }
    return "?";
}

Axis parse_axis(std::string_view text) {
    if (text == "L-R") return Axis::LR;
    if (text == "A-P") return Axis::AP;
    if (text == "H-F") return Axis::HF;
    throw IoError("unknown axis label '" + std::string(text) + "' (expected L-R, A-P or H-F)");
}

std::string to_string(const Shape3& shape) {
    return std::to_string(shape[0]) + "x" + std::to_string(shape[1]) + "x" + std::to_string(shape[2]);
}

VolumeImage::VolumeImage(Shape3 s, double fill) : shape(s) {
    if (s[0] < 0 || s[1] < 0 || s[2] < 0) throw ShapeError("negative volume shape " + to_string(s));
    data.assign(static_cast<size_t>(voxel_count()), fill);
}

int VolumeImage::axis_of(Axis label) const {
    for (int i = 0; i < 3; ++i)
        if (axes[i] == label) return i;
    throw ShapeError("volume has no " + std::string(to_string(label)) + " axis");
}

std::pair<double, double> VolumeImage::min_max() const {
    if (data.empty()) return {0.0, 0.0};
    auto [lo, hi] = std::minmax_element(data.begin(), data.end());
    return {*lo, *hi};
}

double VolumeImage::mean() const {
    if (data.empty()) return 0.0;
    double sum = 0.0;
    for (double v : data) sum += v;
    return sum / static_cast<double>(data.size());
}

VolumeImage volume_like(const VolumeImage& like, Shape3 shape, double fill) {
    VolumeImage out(shape, fill);
    out.spacing = like.spacing;
    out.axes = like.axes;
    out.intensity_range = like.intensity_range;
    return out;
}

VolumeImage crop(const VolumeImage& v, const Shape3& origin, const Shape3& extent) {
    for (int a = 0; a < 3; ++a) {
        if (origin[a] < 0 || extent[a] < 0 || origin[a] + extent[a] > v.shape[a])
            throw ShapeError("crop " + to_string(extent) + " at " + to_string(origin) + " leaves volume " +
                             to_string(v.shape));
    }
    VolumeImage out = volume_like(v, extent);
    for (int64_t z = 0; z < extent[2]; ++z)
        for (int64_t y = 0; y < extent[1]; ++y) {
            const double* src = &v.data[v.index(origin[0], origin[1] + y, origin[2] + z)];
            std::copy(src, src + extent[0], &out.data[out.index(0, y, z)]);
        }
    return out;
}

void require_finite(const VolumeImage& v, std::string_view what) {
    for (int64_t z = 0; z < v.shape[2]; ++z)
        for (int64_t y = 0; y < v.shape[1]; ++y)
            for (int64_t x = 0; x < v.shape[0]; ++x)
                if (!std::isfinite(v.at(x, y, z))) {
                    std::ostringstream msg;
                    msg << what << ": non-finite value at voxel (" << x << ", " << y << ", " << z << ")";
                    throw IoError(msg.str());
                }
}

namespace {

void apply_unit_map(VolumeImage& v, double lo, double hi) {
    v.intensity_range = {lo, hi};
    if (hi > lo) {
        // Division (not multiplication by the reciprocal) keeps max -> 1 exact
        // and makes the map idempotent on volumes already spanning [0, 1].
        const double range = hi - lo;
        for (double& x : v.data) x = (x - lo) / range;
    } else {
        std::fill(v.data.begin(), v.data.end(), 0.0);
    }
}

}  // namespace

VolumeImage normalize_unit_range(VolumeImage v) {
    auto [lo, hi] = v.min_max();
    apply_unit_map(v, lo, hi);
    return v;
}

std::vector<VolumeImage> normalize_unit_range_shared(std::vector<VolumeImage> volumes) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& v : volumes) {
        if (v.data.empty()) continue;
        auto [a, b] = v.min_max();
        lo = std::min(lo, a);
        hi = std::max(hi, b);
    }
    for (auto& v : volumes) apply_unit_map(v, lo, hi);
    return volumes;
}

VolumeFormat format_from_path(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".nii") return VolumeFormat::Nifti1;
    if (ext == ".raw" || ext == ".f32") return VolumeFormat::RawF32;
    throw IoError("cannot infer volume format from '" + path.string() + "' (use .nii or .raw)");
}

std::filesystem::path raw_sidecar_path(const std::filesystem::path& raw_path) {
    return std::filesystem::path(raw_path.string() + ".meta");
}

namespace {

VolumeImage load_raw_f32(const std::filesystem::path& path) {
    const auto meta_path = raw_sidecar_path(path);
    std::ifstream meta(meta_path);
    if (!meta) throw IoError("missing raw-f32 sidecar " + meta_path.string());

    VolumeImage header;
    bool have_shape = false, have_range = false;
    std::string line;
    while (std::getline(meta, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream in(line);
        std::string key;
        in >> key;
        if (key == "format") {
            std::string fmt;
            in >> fmt;
            if (fmt != "raw-f32") throw IoError(meta_path.string() + ": unsupported format '" + fmt + "'");
        } else if (key == "shape") {
            in >> header.shape[0] >> header.shape[1] >> header.shape[2];
            have_shape = static_cast<bool>(in);
        } else if (key == "spacing") {
            in >> header.spacing[0] >> header.spacing[1] >> header.spacing[2];
        } else if (key == "axes") {
            for (auto& a : header.axes) {
                std::string label;
                in >> label;
                a = parse_axis(label);
            }
        } else if (key == "intensity_range") {
            in >> header.intensity_range.first >> header.intensity_range.second;
            have_range = static_cast<bool>(in);
        } else {
            throw IoError(meta_path.string() + ": unknown key '" + key + "'");
        }
        if (!in && key != "format") throw IoError(meta_path.string() + ": malformed line '" + line + "'");
    }
    if (!have_shape) throw IoError(meta_path.string() + ": missing shape");

    std::ifstream raw(path, std::ios::binary | std::ios::ate);
    if (!raw) throw IoError("cannot open " + path.string());
    const auto bytes = static_cast<int64_t>(raw.tellg());
    const int64_t expected = header.shape[0] * header.shape[1] * header.shape[2];
    if (bytes != expected * 4) {
        throw IoError(path.string() + ": header shape " + to_string(header.shape) + " needs " +
                      std::to_string(expected) + " floats but payload holds " + std::to_string(bytes / 4) +
                      (bytes % 4 ? " (plus a partial value)" : ""));
    }
    raw.seekg(0);
    std::vector<float> payload(static_cast<size_t>(expected));
    raw.read(reinterpret_cast<char*>(payload.data()), bytes);
    if (!raw) throw IoError("short read from " + path.string());

    VolumeImage v(header.shape);
    v.spacing = header.spacing;
    v.axes = header.axes;
    for (size_t i = 0; i < payload.size(); ++i) v.data[i] = payload[i];
    require_finite(v, path.string());
    v.intensity_range = have_range ? header.intensity_range : v.min_max();
    return v;
}

void save_raw_f32(const VolumeImage& v, const std::filesystem::path& path) {
    std::ofstream raw(path, std::ios::binary);
    if (!raw) throw IoError("cannot write " + path.string());
    std::vector<float> payload(v.data.begin(), v.data.end());
    raw.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * 4));

    std::ofstream meta(raw_sidecar_path(path));
    meta.precision(17);
    meta << "format raw-f32\n"
         << "shape " << v.shape[0] << ' ' << v.shape[1] << ' ' << v.shape[2] << '\n'
         << "spacing " << v.spacing[0] << ' ' << v.spacing[1] << ' ' << v.spacing[2] << '\n'
         << "axes " << to_string(v.axes[0]) << ' ' << to_string(v.axes[1]) << ' ' << to_string(v.axes[2]) << '\n'
         << "intensity_range " << v.intensity_range.first << ' ' << v.intensity_range.second << '\n';
    if (!raw || !meta) throw IoError("failed writing " + path.string());
}

}  // namespace

VolumeImage load_volume(const std::filesystem::path& path, VolumeFormat format) {
    if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
    switch (format) {
        case VolumeFormat::Nifti1: return detail::load_nifti1(path);
        case VolumeFormat::RawF32: return load_raw_f32(path);
    }
    throw IoError("unknown format");
}

VolumeImage load_volume(const std::filesystem::path& path) { return load_volume(path, format_from_path(path)); }

void save_volume(const VolumeImage& v, const std::filesystem::path& path, VolumeFormat format) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    switch (format) {
        case VolumeFormat::Nifti1: detail::save_nifti1(v, path); return;
        case VolumeFormat::RawF32: save_raw_f32(v, path); return;
    }
}

void save_volume(const VolumeImage& v, const std::filesystem::path& path) {
    save_volume(v, path, format_from_path(path));
}

torch::Tensor to_tensor(const VolumeImage& v, torch::Dtype dtype) {
    auto flat = torch::from_blob(const_cast<double*>(v.data.data()), {v.shape[2], v.shape[1], v.shape[0]},
                                 torch::kFloat64);
    return flat.permute({2, 1, 0}).to(dtype).contiguous();
}

VolumeImage from_tensor(const torch::Tensor& t, const VolumeImage& like) {
    if (t.dim() != 3) throw ShapeError("from_tensor expects a 3D tensor");
    VolumeImage out = volume_like(like, {t.size(0), t.size(1), t.size(2)});
    auto zyx = t.detach().to(torch::kCPU, torch::kFloat64).permute({2, 1, 0}).contiguous();
    std::copy(zyx.data_ptr<double>(), zyx.data_ptr<double>() + zyx.numel(), out.data.begin());
    return out;
}

}  // namespace udean
