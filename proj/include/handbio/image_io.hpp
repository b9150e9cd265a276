#pragma once

#include <string>
#include <vector>

#include "handbio/image.hpp"

namespace handbio::io {

// Decodes an 8-bit PNG or JPEG (sniffed from the file header) to [0,1]
// values; grayscale files give 1 channel, everything else 3.
Image read_image(const std::string& path);

// 8-bit PNG, 1 or 3 channels; values are clamped to [0,1] and scaled by 255.
void write_png(const std::string& path, const Image& img);

// Plane container: "HBPF", u32 version, u32 count, then per plane
// u32 height, u32 width, u32 channels and float32 little-endian data.
void write_planes(const std::string& path, const std::vector<Image>& planes);
std::vector<Image> read_planes(const std::string& path);

}  // namespace handbio::io
