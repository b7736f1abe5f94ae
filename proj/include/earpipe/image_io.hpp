#pragma once

#include <filesystem>

#include "earpipe/core_types.hpp"

namespace earpipe {

/// Reads an 8-bit PNG. Gray and gray+alpha become 1 channel, color stays 3 or 4 channels.
Image read_png(const std::filesystem::path& file);
void write_png(const Image& image, const std::filesystem::path& file);

/// Single-channel mask PNG: background 0, foreground 255. On read any non-zero value is foreground.
BinaryMask read_mask_png(const std::filesystem::path& file);
void write_mask_png(const BinaryMask& mask, const std::filesystem::path& file);

}  // namespace earpipe
