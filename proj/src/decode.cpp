#include "progfuse/decode.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "progfuse/errors.hpp"
#include "progfuse/patching.hpp"

namespace progfuse {

LinearMockDecoder::LinearMockDecoder(int channels, int factor) : m_channels(channels), m_factor(factor) {
    if (channels <= 0 || factor <= 0) {
        throw InvalidArgument("LinearMockDecoder: channels and factor must be positive");
    }
    m_matrix.resize(static_cast<std::size_t>(3) * channels);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < channels; ++c) {
            m_matrix[r * channels + c] = 24.0 * (((r + 1) * (c + 2)) % 7 - 3) / channels;
        }
    }
    m_bias = {128.0, 120.0, 136.0};
}

LinearMockDecoder::LinearMockDecoder(std::vector<double> matrix, std::vector<double> bias, int channels, int factor)
    : m_channels(channels), m_factor(factor), m_matrix(std::move(matrix)), m_bias(std::move(bias)) {
    if (m_matrix.size() != static_cast<std::size_t>(3) * channels || m_bias.size() != 3 || factor <= 0) {
        throw InvalidArgument("LinearMockDecoder: matrix must be 3 x channels and bias length 3");
    }
}

RgbImage LinearMockDecoder::decode(const Latent& z) {
    if (z.channels() != m_channels) {
        throw InvalidArgument("LinearMockDecoder: expected " + std::to_string(m_channels) + " channels, got " +
                              z.shape().str());
    }
    RgbImage img(z.height() * m_factor, z.width() * m_factor);
    for (int y = 0; y < z.height(); ++y) {
        for (int x = 0; x < z.width(); ++x) {
            for (int r = 0; r < 3; ++r) {
                double v = m_bias[r];
                for (int c = 0; c < m_channels; ++c) {
                    v += m_matrix[r * m_channels + c] * z.at(c, y, x);
                }
                const auto px = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
                for (int dy = 0; dy < m_factor; ++dy) {
                    std::fill_n(&img.at(r, y * m_factor + dy, x * m_factor), m_factor, px);
                }
            }
        }
    }
    return img;
}

RgbImage tiled_decode(const Latent& z, Decoder& decoder, const TileSpec& tiles) {
    if (tiles.tile_h <= 0 || tiles.tile_w <= 0) {
        throw InvalidArgument("tiled_decode: tile dimensions must be positive");
    }
    if (tiles.margin < 0 || tiles.margin >= std::min(tiles.tile_h, tiles.tile_w)) {
        throw InvalidArgument("tiled_decode: margin must be in [0, min(tile_h, tile_w))");
    }
    const int f = decoder.scale_factor();
    if (f <= 0) {
        throw InvalidArgument("tiled_decode: decoder scale factor must be positive");
    }
    RgbImage out(z.height() * f, z.width() * f);
    int tile_index = 0;
    for (int y0 = 0; y0 < z.height(); y0 += tiles.tile_h) {
        for (int x0 = 0; x0 < z.width(); x0 += tiles.tile_w, ++tile_index) {
            const int y1 = std::min(z.height(), y0 + tiles.tile_h);
            const int x1 = std::min(z.width(), x0 + tiles.tile_w);
            const int ey0 = std::max(0, y0 - tiles.margin);
            const int ex0 = std::max(0, x0 - tiles.margin);
            const int ey1 = std::min(z.height(), y1 + tiles.margin);
            const int ex1 = std::min(z.width(), x1 + tiles.margin);
            const Latent context = extract_crop(z, {ey0, ex0}, ey1 - ey0, ex1 - ex0);
            RgbImage decoded;
            try {
                decoded = decoder.decode(context);
            } catch (const std::exception& e) {
                throw Error("tiled_decode: tile " + std::to_string(tile_index) + " failed: " + e.what());
            }
            if (decoded.height != context.height() * f || decoded.width != context.width() * f) {
                throw Error("tiled_decode: tile " + std::to_string(tile_index) + " decoded to unexpected size");
            }
            const int oy = (y0 - ey0) * f;
            const int ox = (x0 - ex0) * f;
            const int rows = (y1 - y0) * f;
            const int cols = (x1 - x0) * f;
            for (int ch = 0; ch < 3; ++ch) {
                for (int r = 0; r < rows; ++r) {
                    std::copy_n(&decoded.at(ch, oy + r, ox), cols, &out.at(ch, y0 * f + r, x0 * f));
                }
            }
        }
    }
    return out;
}

}  // namespace progfuse
