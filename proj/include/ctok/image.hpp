#pragma once

#include "ctok/types.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace ctok {

// PNG codec (8-bit RGB). Alpha and palette inputs are converted to RGB on read.
Image read_png(const std::filesystem::path& path);
Image decode_png(std::string_view bytes);
std::string encode_png(const Image& image);
void write_png(const std::filesystem::path& path, const Image& image);

// Content hash over dimensions and pixels.
std::string image_fingerprint(const Image& image);

}  // namespace ctok
