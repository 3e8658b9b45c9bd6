#include <cmath>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "progfuse/errors.hpp"
#include "progfuse/ops.hpp"

using namespace progfuse;

namespace {

Latent random_latent(Shape s, std::uint64_t seed, double scale = 1.0) {
    RngStream rng(seed);
    Latent z(s);
    for (float& v : z.data()) {
        v = static_cast<float>(scale * rng.normal());
    }
    return z;
}

}  // namespace

TEST_CASE("upsample_bicubic reproduces constants") {
    Latent z(3, 5, 7, 3.7f);
    const Latent up = upsample_bicubic(z, 13, 21);
    CHECK(up.shape() == Shape{3, 13, 21});
    for (float v : up.data()) {
        CHECK(v == doctest::Approx(3.7).epsilon(1e-6));
    }
}

TEST_CASE("upsample_bicubic with unchanged dims is bit-identical") {
    const Latent z = random_latent({2, 6, 9}, 11);
    CHECK(upsample_bicubic(z, 6, 9) == z);
}

TEST_CASE("upsample_bicubic of a 4x4 ramp matches the brute-force convolution sum") {
    Latent z(1, 4, 4);
    std::iota(z.data().begin(), z.data().end(), 0.0f);
    const Latent up = upsample_bicubic(z, 8, 8);
    const Latent ref = oracle::bicubic_bruteforce(z, 8, 8);
    CHECK(max_abs_diff(up, ref) <= 1e-6);

    // Frozen from an independent numpy evaluation of the same sum.
    const double frozen_row0[8] = {-45, -13, 57, 124, 188, 255, 325, 357};
    const double frozen_row7[8] = {1563, 1595, 1665, 1732, 1796, 1863, 1933, 1965};
    for (int x = 0; x < 8; ++x) {
        CHECK(up.at(0, 0, x) == doctest::Approx(frozen_row0[x] / 128.0).epsilon(1e-7));
        CHECK(up.at(0, 7, x) == doctest::Approx(frozen_row7[x] / 128.0).epsilon(1e-7));
    }
    CHECK(up.at(0, 3, 3) == doctest::Approx(800.0 / 128.0));
}

TEST_CASE("upsample_bicubic matches the oracle on random latents and non-integer ratios") {
    const Latent z = random_latent({2, 5, 6}, 3);
    CHECK(max_abs_diff(upsample_bicubic(z, 11, 17), oracle::bicubic_bruteforce(z, 11, 17)) <= 1e-5);
}

TEST_CASE("upsample_bicubic reproduces planes away from the replicated border") {
    // Interior targets whose four taps all fall inside the source grid.
    for (int scale : {2, 3, 4}) {
        Latent z(1, 8, 8);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) z.at(0, y, x) = static_cast<float>(0.75 * y - 1.25 * x + 2.0);
        const Latent up = upsample_bicubic(z, 8 * scale, 8 * scale);
        for (int Y = 0; Y < 8 * scale; ++Y) {
            const double sy = (Y + 0.5) / scale - 0.5;
            if (std::floor(sy) - 1 < 0 || std::floor(sy) + 2 > 7) continue;
            for (int X = 0; X < 8 * scale; ++X) {
                const double sx = (X + 0.5) / scale - 0.5;
                if (std::floor(sx) - 1 < 0 || std::floor(sx) + 2 > 7) continue;
                CHECK(up.at(0, Y, X) == doctest::Approx(0.75 * sy - 1.25 * sx + 2.0).epsilon(1e-5));
            }
        }
    }
}

TEST_CASE("upsample_bicubic rejects bad targets") {
    const Latent z(1, 4, 4);
    CHECK_THROWS_AS(upsample_bicubic(z, 0, 8), InvalidArgument);
    CHECK_THROWS_AS(upsample_bicubic(z, -4, 8), InvalidArgument);
    CHECK_THROWS_AS(upsample_bicubic(z, 2, 8), InvalidArgument);
}

TEST_CASE("gaussian kernel size follows 4s - 3 and is normalized and symmetric") {
    for (int s = 1; s <= 6; ++s) {
        for (double sigma : {0.01, 0.5, 1.0, 3.0}) {
            const auto k = GaussianKernel::for_dilation(s, sigma);
            CHECK(k.size == 4 * s - 3);
            CHECK(std::accumulate(k.weights.begin(), k.weights.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
            for (int i = 0; i < k.size; ++i) {
                CHECK(k.weights[i] == k.weights[k.size - 1 - i]);
            }
        }
    }
    CHECK_THROWS_AS(GaussianKernel::make(4, 1.0), InvalidArgument);
    CHECK_THROWS_AS(GaussianKernel::make(3, 0.0), InvalidArgument);
}

TEST_CASE("gaussian_filter with a single tap is the identity") {
    const Latent z = random_latent({2, 7, 5}, 5);
    CHECK(gaussian_filter(z, GaussianKernel::for_dilation(1, 1.0)) == z);
}

TEST_CASE("gaussian_filter preserves constants") {
    const Latent z(2, 9, 9, -1.5f);
    const Latent out = gaussian_filter(z, GaussianKernel::make(9, 2.0));
    for (float v : out.data()) {
        CHECK(v == doctest::Approx(-1.5).epsilon(1e-6));
    }
}

TEST_CASE("gaussian_filter of an impulse is the outer product of the taps") {
    Latent z(1, 5, 5);
    z.at(0, 2, 2) = 1.0f;
    const auto k = GaussianKernel::make(5, 1.0);
    const Latent out = gaussian_filter(z, k);
    const Latent direct = oracle::conv2d_direct(z, k.weights);
    CHECK(max_abs_diff(out, direct) <= 1e-7);
    const double taps[5] = {0.05448868454964294, 0.24420134200323332, 0.4026199468942474, 0.24420134200323332,
                            0.05448868454964294};
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) CHECK(out.at(0, y, x) == doctest::Approx(taps[y] * taps[x]).epsilon(1e-6));
}

TEST_CASE("gaussian_filter matches direct 2-D convolution on random data") {
    const Latent z = random_latent({3, 12, 10}, 17);
    const auto k = GaussianKernel::make(9, 1.3);
    CHECK(max_abs_diff(gaussian_filter(z, k), oracle::conv2d_direct(z, k.weights)) <= 1e-5);
}

TEST_CASE("gaussian_filter output stays inside the input range") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const Latent z = random_latent({2, 11, 13}, seed, 3.0);
        RngStream rng(seed + 1000);
        const int s = static_cast<int>(rng.uniform_int(1, 6));
        const double sigma = 0.01 + 2.0 * rng.uniform_open0();
        const Latent out = gaussian_filter(z, GaussianKernel::for_dilation(s, sigma));
        CHECK(out.min_value() >= z.min_value() - 1e-6);
        CHECK(out.max_value() <= z.max_value() + 1e-6);
    }
}

TEST_CASE("gaussian_filter rejects even kernels") {
    GaussianKernel k;
    k.size = 4;
    k.weights.assign(4, 0.25);
    CHECK_THROWS_AS(gaussian_filter(Latent(1, 4, 4), k), InvalidArgument);
}

TEST_CASE("randn is deterministic per seed and differs across seeds") {
    RngStream a(42);
    RngStream b(42);
    RngStream c(43);
    const Latent za = randn({4, 8, 8}, a);
    CHECK(za == randn({4, 8, 8}, b));
    CHECK_FALSE(za == randn({4, 8, 8}, c));
}

TEST_CASE("randn moments over 10^6 samples") {
    RngStream rng(2024);
    const Latent z = randn({1, 1000, 1000}, rng);
    double mean = 0.0;
    for (float v : z.data()) mean += v;
    mean /= static_cast<double>(z.size());
    double var = 0.0;
    for (float v : z.data()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(z.size() - 1);
    CHECK(std::abs(mean) <= 0.01);
    CHECK(std::abs(var - 1.0) <= 0.01);
}

TEST_CASE("derived substreams are stable and independent") {
    auto a = RngStream::derive(7, StreamPurpose::trajectory, 2);
    auto b = RngStream::derive(7, StreamPurpose::trajectory, 2);
    auto c = RngStream::derive(7, StreamPurpose::trajectory, 3);
    auto d = RngStream::derive(7, StreamPurpose::crop_jitter, 2);
    const auto first = a.next_u64();
    CHECK(first == b.next_u64());
    CHECK(first != c.next_u64());
    CHECK(first != d.next_u64());
}

TEST_CASE("uniform_int stays in range and hits both ends") {
    RngStream rng(9);
    bool lo = false;
    bool hi = false;
    for (int i = 0; i < 2000; ++i) {
        const auto v = rng.uniform_int(-3, 3);
        CHECK(v >= -3);
        CHECK(v <= 3);
        lo |= v == -3;
        hi |= v == 3;
    }
    CHECK(lo);
    CHECK(hi);
    CHECK(rng.uniform_int(5, 5) == 5);
}
