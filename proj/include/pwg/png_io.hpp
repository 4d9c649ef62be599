#pragma once

#include <pwg/image.hpp>

#include <cstdint>
#include <filesystem>

namespace pwg {

// round(clamp(v, 0, 1) * 255).
std::uint8_t quantize_unit(float v);

// 8-bit PNG of a 1- or 3-channel image with values in [0, 1].
void write_png(const Image<float> &img, const std::filesystem::path &path);

// Reads an 8-bit gray or RGB PNG back into [0, 1] values (k / 255).
Image<float> read_png(const std::filesystem::path &path);

// Maps a scalar in [0, 1] to a black-red-yellow-white ramp.
Image<float> heat_map(const Image<float> &values);

}  // namespace pwg
