#pragma once

#include <filesystem>

#include "mvs/tensor.h"

namespace mvs {

/// Grayscale PFM: header "Pf", "W H", scale line; negative scale marks
/// little-endian. Rows are stored bottom-to-top as 32-bit floats.
void write_pfm(const std::filesystem::path& path, const Tensor& map);
Tensor read_pfm(const std::filesystem::path& path);

/// 8-bit RGB PNG. Values are clamped to [0,1] and quantized on write;
/// reading normalizes back to [0,1] fp64 (gray and alpha inputs are
/// converted to plain RGB).
void write_png_rgb(const std::filesystem::path& path, const Tensor& image);
Tensor read_png_rgb(const std::filesystem::path& path);

}  // namespace mvs
