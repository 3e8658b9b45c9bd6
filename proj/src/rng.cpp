#include "progfuse/rng.hpp"

#include <cmath>
#include <numbers>

#include "progfuse/errors.hpp"

namespace progfuse {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed) : m_seed(seed), m_engine(seed) {}

RngStream RngStream::derive(std::uint64_t master_seed, StreamPurpose purpose, std::uint64_t a, std::uint64_t b) {
    std::uint64_t key = splitmix64(master_seed);
    key = splitmix64(key ^ static_cast<std::uint64_t>(purpose));
    key = splitmix64(key ^ a);
    key = splitmix64(key ^ b);
    return RngStream(key);
}

double RngStream::uniform_open0() {
    // 53 random mantissa bits, shifted by one ulp so zero is excluded.
    return (static_cast<double>(m_engine() >> 11) + 1.0) * 0x1.0p-53;
}

std::int64_t RngStream::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) {
        throw InvalidArgument("uniform_int: empty range");
    }
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) {
        return static_cast<std::int64_t>(m_engine());
    }
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % span);
    std::uint64_t draw;
    do {
        draw = m_engine();
    } while (draw >= limit);
    return lo + static_cast<std::int64_t>(draw % span);
}

double RngStream::normal() {
    if (m_spare) {
        const double v = *m_spare;
        m_spare.reset();
        return v;
    }
    const double u1 = uniform_open0();
    const double u2 = uniform_open0();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    m_spare = radius * std::sin(angle);
    return radius * std::cos(angle);
}

}  // namespace progfuse
