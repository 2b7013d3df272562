// Single-file NIfTI-1 (.nii) reader/writer for 3D scalar volumes.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "nifti_internal.hpp"
#include "udean/error.hpp"

namespace udean::detail {

namespace {

#pragma pack(push, 1)
struct Nifti1Header {
    int32_t sizeof_hdr;
    char data_type[10];
    char db_name[18];
    int32_t extents;
    int16_t session_error;
    char regular;
    char dim_info;
    int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    int16_t intent_code;
    int16_t datatype;
    int16_t bitpix;
    int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope, scl_inter;
    int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    int16_t qform_code, sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4], srow_y[4], srow_z[4];
    char intent_name[16];
    char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348);

constexpr int16_t kUint8 = 2, kInt16 = 4, kInt32 = 8, kFloat32 = 16, kFloat64 = 64, kInt8 = 256, kUint16 = 512;

constexpr std::string_view kRangeTag = "udean:range=";

template <class T>
T byteswap_value(T v) {
    auto* p = reinterpret_cast<unsigned char*>(&v);
    std::reverse(p, p + sizeof(T));
    return v;
}

template <class T>
void swap_field(T& v) {
    v = byteswap_value(v);
}

template <class T, size_t N>
void swap_field(T (&a)[N]) {
    for (auto& v : a) v = byteswap_value(v);
}

void swap_header(Nifti1Header& h) {
    swap_field(h.sizeof_hdr);
    swap_field(h.extents);
    swap_field(h.session_error);
    swap_field(h.dim);
    swap_field(h.intent_p1);
    swap_field(h.intent_p2);
    swap_field(h.intent_p3);
    swap_field(h.intent_code);
    swap_field(h.datatype);
    swap_field(h.bitpix);
    swap_field(h.slice_start);
    swap_field(h.pixdim);
    swap_field(h.vox_offset);
    swap_field(h.scl_slope);
    swap_field(h.scl_inter);
    swap_field(h.slice_end);
    swap_field(h.cal_max);
    swap_field(h.cal_min);
    swap_field(h.slice_duration);
    swap_field(h.toffset);
    swap_field(h.glmax);
    swap_field(h.glmin);
    swap_field(h.qform_code);
    swap_field(h.sform_code);
    swap_field(h.quatern_b);
    swap_field(h.quatern_c);
    swap_field(h.quatern_d);
    swap_field(h.qoffset_x);
    swap_field(h.qoffset_y);
    swap_field(h.qoffset_z);
    swap_field(h.srow_x);
    swap_field(h.srow_y);
    swap_field(h.srow_z);
}

int bytes_per_voxel(int16_t datatype) {
    switch (datatype) {
        case kUint8:
        case kInt8: return 1;
        case kInt16:
        case kUint16: return 2;
        case kInt32:
        case kFloat32: return 4;
        case kFloat64: return 8;
        default: return 0;
    }
}

template <class T>
double read_as(const unsigned char* p, bool swap) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    if (swap) v = byteswap_value(v);
    return static_cast<double>(v);
}

double decode_voxel(const unsigned char* p, int16_t datatype, bool swap) {
    switch (datatype) {
        case kUint8: return read_as<uint8_t>(p, swap);
        case kInt8: return read_as<int8_t>(p, swap);
        case kInt16: return read_as<int16_t>(p, swap);
        case kUint16: return read_as<uint16_t>(p, swap);
        case kInt32: return read_as<int32_t>(p, swap);
        case kFloat32: return read_as<float>(p, swap);
        case kFloat64: return read_as<double>(p, swap);
        default: return 0.0;
    }
}

/// Anatomical label of the world axis an array axis runs along; world axes of
/// the NIfTI RAS frame are x = L-R, y = A-P, z = H-F.
Axis dominant_world_axis(float wx, float wy, float wz) {
    const float ax = std::fabs(wx), ay = std::fabs(wy), az = std::fabs(wz);
    if (ax >= ay && ax >= az) return Axis::LR;
    if (ay >= az) return Axis::AP;
    return Axis::HF;
}

int world_row(Axis a) {
    switch (a) {
        case Axis::LR: return 0;
        case Axis::AP: return 1;
        case Axis::HF: return 2;
    }
    return 0;
}

/// Rotation matrix column i (array axis i direction) from the quaternion form.
std::array<std::array<float, 3>, 3> qform_columns(const Nifti1Header& h) {
    const double b = h.quatern_b, c = h.quatern_c, d = h.quatern_d;
    const double a = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + d * d)));
    const double qfac = h.pixdim[0] < 0 ? -1.0 : 1.0;
    const double r[3][3] = {{a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)},
                            {2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)},
                            {2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b}};
    std::array<std::array<float, 3>, 3> cols{};
    for (int i = 0; i < 3; ++i)
        for (int row = 0; row < 3; ++row)
            cols[i][row] = static_cast<float>(r[row][i] * (i == 2 ? qfac : 1.0));
    return cols;
}

}  // namespace

VolumeImage load_nifti1(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open " + path.string());
    const auto file_size = static_cast<int64_t>(in.tellg());
    in.seekg(0);

    Nifti1Header h{};
    if (file_size < static_cast<int64_t>(sizeof h) || !in.read(reinterpret_cast<char*>(&h), sizeof h))
        throw IoError(path.string() + ": truncated NIfTI header");

    bool swap = false;
    if (h.sizeof_hdr != 348) {
        if (byteswap_value(h.sizeof_hdr) != 348) throw IoError(path.string() + ": not a NIfTI-1 file");
        swap = true;
        swap_header(h);
    }
    if (std::memcmp(h.magic, "n+1", 4) != 0)
        throw IoError(path.string() + ": only single-file NIfTI-1 (magic n+1) is supported");

    const int ndim = h.dim[0];
    if (ndim < 1 || ndim > 7) throw IoError(path.string() + ": invalid dim[0]");
    Shape3 shape{1, 1, 1};
    for (int i = 1; i <= ndim; ++i) {
        if (h.dim[i] < 1) throw IoError(path.string() + ": invalid dimension size");
        if (i <= 3)
            shape[i - 1] = h.dim[i];
        else if (h.dim[i] != 1)
            throw IoError(path.string() + ": multi-frame volumes are not supported");
    }

    const int bpv = bytes_per_voxel(h.datatype);
    if (bpv == 0) throw IoError(path.string() + ": unsupported NIfTI datatype " + std::to_string(h.datatype));

    const int64_t count = shape[0] * shape[1] * shape[2];
    const auto offset = static_cast<int64_t>(h.vox_offset);
    if (offset < 348 || offset + count * bpv != file_size) {
        throw IoError(path.string() + ": header shape " + to_string(shape) + " does not match payload of " +
                      std::to_string(file_size - offset) + " bytes");
    }
    std::vector<unsigned char> payload(static_cast<size_t>(count * bpv));
    in.seekg(offset);
    if (!in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size())))
        throw IoError(path.string() + ": short read");

    VolumeImage v(shape);
    const bool scaled = h.scl_slope != 0.0f && std::isfinite(h.scl_slope) &&
                        (h.scl_slope != 1.0f || h.scl_inter != 0.0f);
    for (int64_t i = 0; i < count; ++i) {
        double value = decode_voxel(&payload[static_cast<size_t>(i * bpv)], h.datatype, swap);
        if (scaled) value = value * h.scl_slope + h.scl_inter;
        v.data[static_cast<size_t>(i)] = value;
    }
    require_finite(v, path.string());

    for (int i = 0; i < 3; ++i) v.spacing[i] = h.pixdim[i + 1] > 0 ? h.pixdim[i + 1] : 1.0;

    if (h.sform_code > 0) {
        for (int i = 0; i < 3; ++i) v.axes[i] = dominant_world_axis(h.srow_x[i], h.srow_y[i], h.srow_z[i]);
    } else if (h.qform_code > 0) {
        const auto cols = qform_columns(h);
        for (int i = 0; i < 3; ++i) v.axes[i] = dominant_world_axis(cols[i][0], cols[i][1], cols[i][2]);
    }
    if (v.axes[0] == v.axes[1] || v.axes[1] == v.axes[2] || v.axes[0] == v.axes[2])
        throw IoError(path.string() + ": orientation matrix does not map to distinct anatomical axes");

    std::string descrip(h.descrip, strnlen(h.descrip, sizeof h.descrip));
    v.intensity_range = v.min_max();
    if (auto pos = descrip.find(kRangeTag); pos != std::string::npos) {
        std::istringstream range(descrip.substr(pos + kRangeTag.size()));
        double lo = 0, hi = 0;
        char comma = 0;
        if (range >> lo >> comma >> hi && comma == ',') v.intensity_range = {lo, hi};
    }
    return v;
}

void save_nifti1(const VolumeImage& v, const std::filesystem::path& path) {
    static_assert(std::endian::native == std::endian::little, "writer assumes a little-endian host");

    Nifti1Header h{};
    h.sizeof_hdr = 348;
    h.regular = 'r';
    h.dim[0] = 3;
    for (int i = 0; i < 3; ++i) {
        if (v.shape[i] > 32767) throw IoError("dimension too large for NIfTI-1");
        h.dim[i + 1] = static_cast<int16_t>(v.shape[i]);
    }
    for (int i = 4; i < 8; ++i) h.dim[i] = 1;
    h.datatype = kFloat32;
    h.bitpix = 32;
    h.pixdim[0] = 1.0f;
    for (int i = 0; i < 3; ++i) h.pixdim[i + 1] = static_cast<float>(v.spacing[i]);
    for (int i = 4; i < 8; ++i) h.pixdim[i] = 1.0f;
    h.vox_offset = 352.0f;
    h.scl_slope = 1.0f;
    h.xyzt_units = 2;  // millimetres
    h.cal_min = static_cast<float>(v.intensity_range.first);
    h.cal_max = static_cast<float>(v.intensity_range.second);

    char descrip[80] = {};
    std::snprintf(descrip, sizeof descrip, "%s%.17g,%.17g", kRangeTag.data(), v.intensity_range.first,
                  v.intensity_range.second);
    std::memcpy(h.descrip, descrip, sizeof descrip);

    h.sform_code = 1;
    float* rows[3] = {h.srow_x, h.srow_y, h.srow_z};
    for (int i = 0; i < 3; ++i) rows[world_row(v.axes[i])][i] = static_cast<float>(v.spacing[i]);
    std::memcpy(h.magic, "n+1", 4);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(&h), sizeof h);
    const char extension[4] = {0, 0, 0, 0};
    out.write(extension, 4);
    std::vector<float> payload(v.data.begin(), v.data.end());
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * 4));
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace udean::detail
