#pragma once

#include "frontdoor/image.hpp"

#include <filesystem>

namespace frontdoor {

/// Binary PPM (P6, maxval 255) read/write; pixels map to [0, 1].
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& img);

/// Nearest 8-bit level: round(255 * clamp(v, 0, 1)).
std::uint8_t quantize_u8(double v);

}  // namespace frontdoor
