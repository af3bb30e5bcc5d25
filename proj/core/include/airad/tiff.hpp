#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "airad/image.hpp"

namespace airad {

/// Multi-page little-endian baseline TIFF, one uncompressed strip per page,
/// 32-bit IEEE float single-sample pixels.
std::vector<std::uint8_t> encode_tiff_stack(std::span<const Image2> slices);
std::vector<Image2> decode_tiff_stack(std::span<const std::uint8_t> bytes);

void write_tiff_stack(std::span<const Image2> slices, const std::filesystem::path& path);
std::vector<Image2> read_tiff_stack(const std::filesystem::path& path);

}  // namespace airad
