#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "progfuse/backend.hpp"
#include "progfuse/decode.hpp"
#include "progfuse/latent.hpp"

namespace progfuse::wire {

// Frame layout: "PFD1" | u32 LE header length L | L bytes UTF-8 JSON header |
// payload (little-endian float32 or raw rgb8 bytes).
inline constexpr char kMagic[4] = {'P', 'F', 'D', '1'};
inline constexpr std::size_t kPreambleSize = 8;

using Bytes = std::vector<std::uint8_t>;

struct Frame {
    nlohmann::json header;
    Bytes payload;
};

Bytes encode_frame(const Frame& frame);
// Splits a frame; checks magic and header only.
Frame decode_frame(std::span<const std::uint8_t> bytes);

// Full structural check shared by the engine, the stubs and the bridge:
// magic, header JSON, known op/format, shape, and payload length. Throws
// ProtocolError naming the first violation.
void validate_frame(std::span<const std::uint8_t> bytes);

void append_floats(Bytes& out, std::span<const float> values);
std::vector<float> read_floats(std::span<const std::uint8_t> bytes);

// POST /v1/denoise
Bytes encode_denoise_request(const DenoiseRequest& req);
DenoiseRequest decode_denoise_request(std::span<const std::uint8_t> bytes);
Bytes encode_denoise_response(const std::vector<Latent>& eps, const std::string& request_id);
// Returns the b*k predictions. Throws ProtocolError on a request id mismatch
// when `expected_request_id` is non-empty.
std::vector<Latent> decode_denoise_response(std::span<const std::uint8_t> bytes,
                                            const std::string& expected_request_id = {});

// Latent payload frames: decode requests and encode responses.
Bytes encode_latent(const std::string& op, const Latent& z, const std::string& request_id = {});
Latent decode_latent(std::span<const std::uint8_t> bytes);

// rgb8 image frames: decode responses and encode requests.
Bytes encode_image(const std::string& op, const RgbImage& image, const std::string& request_id = {});
RgbImage decode_image(std::span<const std::uint8_t> bytes);

}  // namespace progfuse::wire
