#include "progfuse/latent_io.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

#include "progfuse/errors.hpp"
#include "progfuse/wire.hpp"

namespace progfuse {

namespace {

constexpr char kLatentMagic[4] = {'P', 'F', 'L', 'T'};
constexpr std::size_t kHeaderSize = 20;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
           static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

}  // namespace

std::vector<std::uint8_t> serialize_latent(const Latent& z) {
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderSize + z.size() * 4);
    out.insert(out.end(), kLatentMagic, kLatentMagic + 4);
    put_u32(out, kLatentFileVersion);
    put_u32(out, static_cast<std::uint32_t>(z.channels()));
    put_u32(out, static_cast<std::uint32_t>(z.height()));
    put_u32(out, static_cast<std::uint32_t>(z.width()));
    wire::append_floats(out, z.data());
    return out;
}

Latent deserialize_latent(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderSize) {
        throw FormatError("latent file truncated: " + std::to_string(bytes.size()) + " bytes, header needs " +
                          std::to_string(kHeaderSize));
    }
    if (!std::equal(kLatentMagic, kLatentMagic + 4, bytes.begin())) {
        throw FormatError("not a latent file: bad magic (expected \"PFLT\")");
    }
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != kLatentFileVersion) {
        throw FormatError("unsupported latent file version " + std::to_string(version));
    }
    const std::uint32_t c = get_u32(bytes, 8);
    const std::uint32_t h = get_u32(bytes, 12);
    const std::uint32_t w = get_u32(bytes, 16);
    if (c == 0 || h == 0 || w == 0 || c > (1u << 20) || h > (1u << 20) || w > (1u << 20)) {
        throw FormatError("latent file declares invalid dims " + std::to_string(c) + "x" + std::to_string(h) + "x" +
                          std::to_string(w));
    }
    const std::uint64_t expected = static_cast<std::uint64_t>(c) * h * w * 4;
    const std::uint64_t actual = bytes.size() - kHeaderSize;
    if (actual != expected) {
        throw FormatError("latent payload " + std::string(actual < expected ? "truncated" : "oversized") +
                          ": header declares " + std::to_string(c) + "x" + std::to_string(h) + "x" +
                          std::to_string(w) + " (" + std::to_string(expected) + " bytes), file holds " +
                          std::to_string(actual) + " bytes");
    }
    return Latent(Shape{static_cast<int>(c), static_cast<int>(h), static_cast<int>(w)},
                  wire::read_floats(bytes.subspan(kHeaderSize)));
}

void write_latent(const std::filesystem::path& path, const Latent& z) {
    const auto bytes = serialize_latent(z);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error("write failed: " + path.string());
    }
}

Latent read_latent(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot read " + path.string());
    }
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_latent(bytes);
}

}  // namespace progfuse
