#include "progfuse/wire.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "progfuse/errors.hpp"

namespace progfuse::wire {

namespace {

void put_u32(Bytes& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::vector<int> shape_of(const nlohmann::json& header, std::size_t rank) {
    if (!header.contains("shape") || !header["shape"].is_array()) {
        throw ProtocolError("header field 'shape' missing or not an array");
    }
    const auto& s = header["shape"];
    if (s.size() != rank) {
        throw ProtocolError("header 'shape' must have " + std::to_string(rank) + " entries, got " +
                            std::to_string(s.size()));
    }
    std::vector<int> dims;
    for (const auto& d : s) {
        if (!d.is_number_integer() || d.get<long long>() <= 0 || d.get<long long>() > (1LL << 30)) {
            throw ProtocolError("header 'shape' entries must be positive integers");
        }
        dims.push_back(d.get<int>());
    }
    return dims;
}

std::size_t product(const std::vector<int>& dims) {
    std::size_t n = 1;
    for (int d : dims) {
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

void require_payload(const Frame& f, std::size_t expected) {
    if (f.payload.size() != expected) {
        throw ProtocolError("payload length " + std::to_string(f.payload.size()) + " bytes, header implies " +
                            std::to_string(expected));
    }
}

void require_string(const nlohmann::json& header, const char* key) {
    if (!header.contains(key) || !header[key].is_string()) {
        throw ProtocolError(std::string("header field '") + key + "' missing or not a string");
    }
}

std::string op_of(const nlohmann::json& header) {
    if (!header.contains("op")) {
        return {};
    }
    if (!header["op"].is_string()) {
        throw ProtocolError("header field 'op' must be a string");
    }
    return header["op"].get<std::string>();
}

bool is_rgb8(const nlohmann::json& header) {
    if (!header.contains("format")) {
        return false;
    }
    if (header["format"] != "rgb8") {
        throw ProtocolError("unsupported payload format " + header["format"].dump());
    }
    return true;
}

}  // namespace

void append_floats(Bytes& out, std::span<const float> values) {
    const std::size_t start = out.size();
    out.resize(start + values.size() * 4);
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(out.data() + start, values.data(), values.size() * 4);
    } else {
        for (std::size_t i = 0; i < values.size(); ++i) {
            const auto bits = std::bit_cast<std::uint32_t>(values[i]);
            for (int b = 0; b < 4; ++b) {
                out[start + 4 * i + b] = static_cast<std::uint8_t>(bits >> (8 * b));
            }
        }
    }
}

std::vector<float> read_floats(std::span<const std::uint8_t> bytes) {
    if (bytes.size() % 4 != 0) {
        throw ProtocolError("float payload length is not a multiple of 4");
    }
    std::vector<float> out(bytes.size() / 4);
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(out.data(), bytes.data(), bytes.size());
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = std::bit_cast<float>(get_u32(bytes.data() + 4 * i));
        }
    }
    return out;
}

Bytes encode_frame(const Frame& frame) {
    const std::string header = frame.header.dump();
    Bytes out;
    out.reserve(kPreambleSize + header.size() + frame.payload.size());
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, static_cast<std::uint32_t>(header.size()));
    out.insert(out.end(), header.begin(), header.end());
    out.insert(out.end(), frame.payload.begin(), frame.payload.end());
    return out;
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kPreambleSize) {
        throw ProtocolError("frame shorter than the 8-byte preamble");
    }
    if (!std::equal(kMagic, kMagic + 4, bytes.begin())) {
        throw ProtocolError("bad magic: expected \"PFD1\"");
    }
    const std::uint32_t len = get_u32(bytes.data() + 4);
    if (len > bytes.size() - kPreambleSize) {
        throw ProtocolError("header length " + std::to_string(len) + " exceeds frame size");
    }
    Frame f;
    const auto* h = reinterpret_cast<const char*>(bytes.data() + kPreambleSize);
    try {
        f.header = nlohmann::json::parse(h, h + len);
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("header is not valid JSON: ") + e.what());
    }
    if (!f.header.is_object()) {
        throw ProtocolError("header must be a JSON object");
    }
    f.payload.assign(bytes.begin() + kPreambleSize + len, bytes.end());
    return f;
}

void validate_frame(std::span<const std::uint8_t> bytes) {
    const Frame f = decode_frame(bytes);
    const std::string op = op_of(f.header);
    if (f.header.contains("request_id") && !f.header["request_id"].is_string()) {
        throw ProtocolError("header field 'request_id' must be a string");
    }
    if (is_rgb8(f.header)) {
        if (!op.empty() && op != "decode" && op != "encode") {
            throw ProtocolError("rgb8 payload with unexpected op '" + op + "'");
        }
        const auto dims = shape_of(f.header, 3);
        if (dims[0] != 3) {
            throw ProtocolError("rgb8 shape must start with 3 channels");
        }
        require_payload(f, product(dims));
        return;
    }
    if (op == "denoise") {
        const auto dims = shape_of(f.header, 4);
        require_string(f.header, "request_id");
        if (f.header.contains("t")) {
            if (!f.header["t"].is_number_integer()) {
                throw ProtocolError("header field 't' must be an integer");
            }
            if (!f.header.contains("conditionings") || !f.header["conditionings"].is_array() ||
                f.header["conditionings"].empty()) {
                throw ProtocolError("header field 'conditionings' must be a non-empty array");
            }
            for (const auto& c : f.header["conditionings"]) {
                if (!c.is_string()) {
                    throw ProtocolError("conditioning tokens must be strings");
                }
            }
            if (f.header.contains("extras") && !f.header["extras"].is_object()) {
                throw ProtocolError("header field 'extras' must be an object");
            }
        }
        require_payload(f, product(dims) * 4);
        return;
    }
    if (op == "decode" || op == "encode") {
        const auto dims = shape_of(f.header, 3);
        require_payload(f, product(dims) * 4);
        return;
    }
    throw ProtocolError(op.empty() ? "header field 'op' missing" : "unknown op '" + op + "'");
}

Bytes encode_denoise_request(const DenoiseRequest& req) {
    if (req.batch.empty()) {
        throw InvalidArgument("encode_denoise_request: empty batch");
    }
    const Shape s = req.batch.front().shape();
    Frame f;
    f.header = {
        {"op", "denoise"},
        {"t", req.timestep},
        {"shape", {static_cast<int>(req.batch.size()), s.channels, s.height, s.width}},
        {"conditionings", req.conditionings},
        {"extras", req.extras.is_object() ? req.extras : nlohmann::json::object()},
        {"request_id", req.request_id},
    };
    f.payload.reserve(req.batch.size() * s.size() * 4);
    for (const auto& patch : req.batch) {
        if (patch.shape() != s) {
            throw InvalidArgument("encode_denoise_request: mixed patch shapes");
        }
        append_floats(f.payload, patch.data());
    }
    return encode_frame(f);
}

DenoiseRequest decode_denoise_request(std::span<const std::uint8_t> bytes) {
    validate_frame(bytes);
    const Frame f = decode_frame(bytes);
    if (op_of(f.header) != "denoise" || !f.header.contains("t")) {
        throw ProtocolError("not a denoise request frame");
    }
    const auto dims = shape_of(f.header, 4);
    DenoiseRequest req;
    req.timestep = f.header["t"].get<int>();
    req.conditionings = f.header["conditionings"].get<std::vector<std::string>>();
    req.extras = f.header.value("extras", nlohmann::json::object());
    req.request_id = f.header["request_id"].get<std::string>();
    const auto values = read_floats(f.payload);
    const Shape s{dims[1], dims[2], dims[3]};
    for (int b = 0; b < dims[0]; ++b) {
        const auto first = values.begin() + static_cast<std::ptrdiff_t>(b * s.size());
        req.batch.emplace_back(s, std::vector<float>(first, first + static_cast<std::ptrdiff_t>(s.size())));
    }
    return req;
}

Bytes encode_denoise_response(const std::vector<Latent>& eps, const std::string& request_id) {
    if (eps.empty()) {
        throw InvalidArgument("encode_denoise_response: no predictions");
    }
    const Shape s = eps.front().shape();
    Frame f;
    f.header = {
        {"op", "denoise"},
        {"shape", {static_cast<int>(eps.size()), s.channels, s.height, s.width}},
        {"request_id", request_id},
    };
    for (const auto& e : eps) {
        if (e.shape() != s) {
            throw InvalidArgument("encode_denoise_response: mixed prediction shapes");
        }
        append_floats(f.payload, e.data());
    }
    return encode_frame(f);
}

std::vector<Latent> decode_denoise_response(std::span<const std::uint8_t> bytes,
                                            const std::string& expected_request_id) {
    validate_frame(bytes);
    const Frame f = decode_frame(bytes);
    if (op_of(f.header) != "denoise" || f.header.contains("t")) {
        throw ProtocolError("not a denoise response frame");
    }
    const std::string id = f.header["request_id"].get<std::string>();
    if (!expected_request_id.empty() && id != expected_request_id) {
        throw ProtocolError("response request_id '" + id + "' does not match '" + expected_request_id + "'");
    }
    const auto dims = shape_of(f.header, 4);
    const auto values = read_floats(f.payload);
    const Shape s{dims[1], dims[2], dims[3]};
    std::vector<Latent> out;
    out.reserve(dims[0]);
    for (int b = 0; b < dims[0]; ++b) {
        const auto first = values.begin() + static_cast<std::ptrdiff_t>(b * s.size());
        out.emplace_back(s, std::vector<float>(first, first + static_cast<std::ptrdiff_t>(s.size())));
    }
    return out;
}

Bytes encode_latent(const std::string& op, const Latent& z, const std::string& request_id) {
    Frame f;
    f.header = {{"op", op}, {"shape", {z.channels(), z.height(), z.width()}}};
    if (!request_id.empty()) {
        f.header["request_id"] = request_id;
    }
    append_floats(f.payload, z.data());
    return encode_frame(f);
}

Latent decode_latent(std::span<const std::uint8_t> bytes) {
    validate_frame(bytes);
    const Frame f = decode_frame(bytes);
    if (f.header.contains("format")) {
        throw ProtocolError("expected a latent frame, got an image frame");
    }
    const auto dims = shape_of(f.header, 3);
    return Latent(Shape{dims[0], dims[1], dims[2]}, read_floats(f.payload));
}

Bytes encode_image(const std::string& op, const RgbImage& image, const std::string& request_id) {
    Frame f;
    f.header = {{"format", "rgb8"}, {"shape", {3, image.height, image.width}}};
    if (!op.empty()) {
        f.header["op"] = op;
    }
    if (!request_id.empty()) {
        f.header["request_id"] = request_id;
    }
    f.payload = image.data;
    return encode_frame(f);
}

RgbImage decode_image(std::span<const std::uint8_t> bytes) {
    validate_frame(bytes);
    const Frame f = decode_frame(bytes);
    if (!f.header.contains("format")) {
        throw ProtocolError("expected an rgb8 image frame");
    }
    const auto dims = shape_of(f.header, 3);
    RgbImage img;
    img.height = dims[1];
    img.width = dims[2];
    img.data = f.payload;
    return img;
}

}  // namespace progfuse::wire
