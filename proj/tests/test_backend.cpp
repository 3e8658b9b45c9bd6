#include <filesystem>

#include "doctest.h"
#include "oracles.hpp"
#include "progfuse/backend.hpp"
#include "progfuse/errors.hpp"
#include "progfuse/ops.hpp"
#include "progfuse/wire.hpp"

using namespace progfuse;

namespace {

DenoiseRequest make_request(int b, int h, int w, int t = 501) {
    DenoiseRequest req;
    RngStream rng(b * 1000 + h);
    for (int i = 0; i < b; ++i) req.batch.push_back(randn({4, h, w}, rng));
    req.timestep = t;
    req.conditionings = {"cond", "uncond"};
    req.request_id = "test-0";
    return req;
}

}  // namespace

TEST_CASE("denoise_batch validates before forwarding") {
    ZeroDenoiser zero(4, 16, 16);
    CountingDenoiser counter(zero);
    CHECK_THROWS_AS(denoise_batch(counter, make_request(0, 8, 8), 4), InvalidArgument);
    CHECK_THROWS_AS(denoise_batch(counter, make_request(5, 8, 8), 4), InvalidArgument);
    CHECK_THROWS_AS(denoise_batch(counter, make_request(1, 32, 8), 4), InvalidArgument);
    auto mixed = make_request(2, 8, 8);
    mixed.batch[1] = Latent(4, 8, 4);
    CHECK_THROWS_AS(denoise_batch(counter, mixed, 4), InvalidArgument);
    auto nocond = make_request(1, 8, 8);
    nocond.conditionings.clear();
    CHECK_THROWS_AS(denoise_batch(counter, nocond, 4), InvalidArgument);
    CHECK(counter.calls() == 0);

    const auto eps = denoise_batch(counter, make_request(4, 8, 8), 4);
    CHECK(eps.size() == 8);
    CHECK(counter.calls() == 1);
    CHECK(counter.max_batch() == 4);
}

TEST_CASE("oracle epsilon drives one DDIM step onto the target") {
    const auto sched = build_schedule();
    RngStream rng(3);
    const Latent zt = randn({4, 8, 8}, rng);
    const Latent target = randn({4, 8, 8}, rng);
    for (int t : {981, 21, 1}) {
        const Latent eps = oracle_epsilon(zt, t, target, sched);
        CHECK(max_abs_diff(ddim_step(zt, eps, t, 0, sched), target) <= 1e-5);
    }
    CHECK_THROWS_AS(oracle_epsilon(zt, 0, target, sched), InvalidArgument);
}

TEST_CASE("oracle denoiser locates local and global paths on its target") {
    const auto sched = build_schedule();
    RngStream rng(12);
    const Latent target = randn({4, 16, 16}, rng);
    OracleDenoiser oracle_backend(sched, {Latent(4, 8, 8), target}, 8, 8);

    DenoiseRequest req;
    const DilationSet dil(2);
    req.batch = {extract_crop(target, {4, 6}, 8, 8), dilated_sample_one(target, dil, 3)};
    req.timestep = 981;
    req.conditionings = {"c", "u"};
    req.request_id = "x";
    set_path_geometry(req, 2, 16, 16,
                      {{PathKind::local, 4, 6, 1}, {PathKind::global, 1, 1, 2}});
    CHECK(path_geometry(req)[1] == PathGeometry{PathKind::global, 1, 1, 2});
    CHECK(canvas_dims(req) == std::pair{16, 16});

    const auto eps = oracle_backend.denoise(req);
    REQUIRE(eps.size() == 4);
    CHECK(max_abs_diff(ddim_step(req.batch[0], eps[0], 981, 0, sched), extract_crop(target, {4, 6}, 8, 8)) <= 1e-5);
    CHECK(max_abs_diff(ddim_step(req.batch[1], eps[2], 981, 0, sched), dilated_sample_one(target, dil, 3)) <= 1e-5);
    CHECK(eps[0] == eps[1]);
}

TEST_CASE("bicubic target chain") {
    RngStream rng(1);
    const Latent z = randn({4, 6, 5}, rng);
    const auto chain = bicubic_target_chain(z, 3);
    REQUIRE(chain.size() == 3);
    CHECK(chain[0] == z);
    CHECK(chain[1].shape() == Shape{4, 12, 10});
    CHECK(chain[2] == upsample_bicubic(chain[1], 18, 15));
}

TEST_CASE("affine denoiser depends on patch, t and conditioning index") {
    AffineDenoiser aff(4, 16, 16);
    auto req = make_request(2, 8, 8, 100);
    const auto eps = aff.denoise(req);
    REQUIRE(eps.size() == 4);
    CHECK(eps[1].at(2, 3, 4) == AffineDenoiser::value(req.batch[0].at(2, 3, 4), 100, 1));
    CHECK(eps[2].at(0, 0, 0) == AffineDenoiser::value(req.batch[1].at(0, 0, 0), 100, 0));
}

TEST_CASE("record and replay return byte-identical responses") {
    const auto path = std::filesystem::temp_directory_path() / "progfuse_record_test.bin";
    std::filesystem::remove(path);
    AffineDenoiser aff(4, 16, 16);
    std::vector<DenoiseRequest> reqs;
    std::vector<std::vector<Latent>> live;
    {
        RecordingDenoiser rec(aff, path);
        for (int i = 0; i < 3; ++i) {
            auto r = make_request(i + 1, 8, 8, 100 + i);
            r.request_id = "r" + std::to_string(i);
            live.push_back(rec.denoise(r));
            reqs.push_back(r);
        }
    }
    ReplayDenoiser replay(path, aff.info());
    CHECK(replay.size() == 3);
    for (std::size_t i = 0; i < reqs.size(); ++i) {
        CHECK(replay.denoise(reqs[i]) == live[i]);
        CHECK(replay.recorded_response(reqs[i]) == wire::encode_denoise_response(live[i], reqs[i].request_id));
    }
    auto unknown = make_request(1, 8, 8, 999);
    CHECK_THROWS_AS(replay.denoise(unknown), BackendError);
    std::filesystem::remove(path);
}
