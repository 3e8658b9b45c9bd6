#pragma once

#include <filesystem>

#include "progfuse/decode.hpp"

namespace progfuse {

// 8-bit RGB PNG.
void write_png(const std::filesystem::path& path, const RgbImage& image);
// Reads any 8-bit PNG and converts it to RGB (alpha dropped, gray expanded).
RgbImage read_png(const std::filesystem::path& path);

}  // namespace progfuse
