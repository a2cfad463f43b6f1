#pragma once

#include <filesystem>

#include "sgsasr/tensor.hpp"

namespace sgsasr {

/// Reads an 8- or 16-bit grayscale/RGB(A) PNG into [0, 1]. Alpha is dropped;
/// grayscale stays single-channel.
[[nodiscard]] Image read_png(const std::filesystem::path& path);

/// Writes a 1- or 3-channel image as 8-bit PNG, clamping to [0, 1] and rounding.
void write_png(const std::filesystem::path& path, const Image& image);

/// Clamps every value to [0, 1].
[[nodiscard]] Image clamp01(Image image);

}  // namespace sgsasr
