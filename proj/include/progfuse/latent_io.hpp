#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "progfuse/latent.hpp"

namespace progfuse {

// "PFLT" | u32 version (1) | u32 c | u32 H | u32 W | c*H*W float32, all LE.
inline constexpr std::uint32_t kLatentFileVersion = 1;

std::vector<std::uint8_t> serialize_latent(const Latent& z);
// Throws FormatError on bad magic/version or a payload whose length does not
// match the declared dims.
Latent deserialize_latent(std::span<const std::uint8_t> bytes);

void write_latent(const std::filesystem::path& path, const Latent& z);
Latent read_latent(const std::filesystem::path& path);

}  // namespace progfuse
