#pragma once

#include <filesystem>

#include "udean/volume.hpp"

namespace udean::detail {

VolumeImage load_nifti1(const std::filesystem::path& path);
void save_nifti1(const VolumeImage& v, const std::filesystem::path& path);

}  // namespace udean::detail
