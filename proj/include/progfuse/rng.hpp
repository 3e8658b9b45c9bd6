#pragma once

#include <cstdint>
#include <optional>
#include <random>

namespace progfuse {

// Purposes for substreams derived from one master seed. New purposes are
// appended so existing draws never move.
enum class StreamPurpose : std::uint64_t {
    phase1_init = 1,
    trajectory = 2,
    crop_jitter = 3,
    oracle_target = 4,
    test = 100,
};

/// Seeded random stream. Identical seed plus identical call sequence gives
/// bit-identical output on every platform: the engine is mt19937_64 (fully
/// specified by the standard) and the uniform/normal transforms are local,
/// not the implementation-defined std distributions.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed);

    // Counter-style derivation: the substream for (purpose, a, b) depends only
    // on those values and the master seed.
    static RngStream derive(std::uint64_t master_seed, StreamPurpose purpose, std::uint64_t a = 0,
                            std::uint64_t b = 0);

    std::uint64_t seed() const noexcept { return m_seed; }

    std::uint64_t next_u64() { return m_engine(); }
    // Uniform on (0, 1].
    double uniform_open0();
    // Uniform integer on [lo, hi] by rejection sampling.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    // Standard normal via Box-Muller; pairs are consumed in order.
    double normal();

private:
    std::uint64_t m_seed;
    std::mt19937_64 m_engine;
    std::optional<double> m_spare;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace progfuse
