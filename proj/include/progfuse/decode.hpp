#pragma once

#include <cstdint>
#include <vector>

#include "progfuse/latent.hpp"

namespace progfuse {

/// 8-bit RGB image stored as planar [3][height][width].
struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;

    RgbImage() = default;
    RgbImage(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(3) * h * w, 0) {}

    std::uint8_t& at(int ch, int y, int x) { return data[(static_cast<std::size_t>(ch) * height + y) * width + x]; }
    std::uint8_t at(int ch, int y, int x) const {
        return data[(static_cast<std::size_t>(ch) * height + y) * width + x];
    }
    bool operator==(const RgbImage&) const = default;
};

class Decoder {
public:
    virtual ~Decoder() = default;
    // Pixels per latent cell along each axis.
    virtual int scale_factor() const = 0;
    virtual RgbImage decode(const Latent& z) = 0;
};

class Encoder {
public:
    virtual ~Encoder() = default;
    virtual Latent encode(const RgbImage& image) = 0;
};

/// Per-cell linear decoder: rgb = round(A z + b) clamped to [0, 255], painted
/// over a factor x factor pixel block. Spatially local, so tiling with any
/// margin reproduces the whole-latent result exactly.
class LinearMockDecoder final : public Decoder {
public:
    LinearMockDecoder(int channels, int factor = 8);
    LinearMockDecoder(std::vector<double> matrix, std::vector<double> bias, int channels, int factor);

    int scale_factor() const override { return m_factor; }
    RgbImage decode(const Latent& z) override;

private:
    int m_channels;
    int m_factor;
    std::vector<double> m_matrix;  // 3 x channels, row-major
    std::vector<double> m_bias;    // 3
};

struct TileSpec {
    int tile_h = 128;
    int tile_w = 128;
    int margin = 8;  // latent cells of extra context on each side
};

// Decodes z tile by tile, each tile extended by `margin` cells (clamped at the
// borders), then crops the decoded margin away and stitches.
RgbImage tiled_decode(const Latent& z, Decoder& decoder, const TileSpec& tiles);

}  // namespace progfuse
