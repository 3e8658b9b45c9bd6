#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "progfuse/errors.hpp"
#include "progfuse/ops.hpp"
#include "progfuse/pipeline.hpp"

using namespace progfuse;

namespace {

PipelineConfig small_config() {
    PipelineConfig cfg;
    cfg.schedule.inference_steps = 10;
    cfg.seed = 11;
    cfg.guidance.conditioning_id = "c";
    cfg.guidance.unconditional_id = "u";
    return cfg;
}

PipelineConfig plain_config() {
    auto cfg = small_config();
    cfg.skip_residual = false;
    cfg.dilated = false;
    cfg.progressive = false;
    return cfg;
}

}  // namespace

TEST_CASE("phase planning") {
    const auto p = plan_phases(16, 8, 6);
    CHECK(p.S == 4);
    REQUIRE(p.phases.size() == 4);
    CHECK(p.phases[2].index == 3);
    CHECK(p.phases[2].height == 24);
    CHECK(p.phases[2].width == 18);
    CHECK(plan_phases(1, 8, 8).phases.size() == 1);
    try {
        plan_phases(3, 8, 8);
        FAIL("expected InvalidArgument");
    } catch (const InvalidArgument& e) {
        CHECK(std::string(e.what()).find("perfect square") != std::string::npos);
    }
    const auto jump = without_progression(plan_phases_direct(4, 8, 8));
    REQUIRE(jump.phases.size() == 2);
    CHECK(jump.phases[0].index == 1);
    CHECK(jump.phases[1].index == 4);
}

TEST_CASE("config validation") {
    auto cfg = small_config();
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = small_config();
    cfg.inflight = 0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = small_config();
    cfg.decay.alpha2 = -1.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("blend helpers") {
    const Latent a(1, 2, 2, 2.0f);
    const Latent b(1, 2, 2, 4.0f);
    CHECK(convex_blend(a, b, 0.25).at(0, 1, 1) == doctest::Approx(3.5));
    CHECK(convex_blend(a, b, 0.0) == b);
    CHECK(convex_blend(a, b, 1.0) == a);
    // Skip residual at t = T is all diffused latent; at t = 0 all denoised.
    CHECK(skip_residual_blend(a, b, 1000, 1000, 3.0) == b);
    CHECK(skip_residual_blend(a, b, 0, 1000, 3.0) == a);
    CHECK(fuse_global_local(a, b, 1000, 1000, 1.0) == a);
    CHECK(fuse_global_local(a, b, 0, 1000, 1.0) == b);
}

TEST_CASE("phase 1 with a zero denoiser follows the scalar recurrence") {
    auto cfg = small_config();
    ZeroDenoiser zero(4, 8, 8);
    Pipeline p(cfg, zero);
    const auto r = p.run_phase1();
    const Latent expect = oracle::zero_denoiser_chain(p.initial_noise(), p.schedule());
    CHECK(max_abs_diff(r.latent, expect) <= 1e-5);
    CHECK(r.path_steps == 10);
}

TEST_CASE("plain MultiDiffusion matches the straight-line reference bit for bit") {
    for (bool jitter : {false, true}) {
        for (int batch : {1, 3, 8}) {
            auto cfg = plain_config();
            cfg.jitter = jitter;
            cfg.jitter_max = jitter ? 1 : -1;
            cfg.batch_size = batch;
            AffineDenoiser aff(4, 8, 8);
            std::vector<Latent> steps;
            RunObserver obs;
            obs.on_step = [&](int phase, int, const Latent& z) {
                if (phase == 2) steps.push_back(z);
            };
            const auto runs = run_pipeline(2, cfg, aff, obs);
            AffineDenoiser aff_ref(4, 8, 8);
            const auto ref = oracle::reference_multidiffusion(aff_ref, cfg, 2);
            CHECK(runs.front().latent == ref.phase1);
            REQUIRE(steps.size() == ref.steps.size());
            for (std::size_t i = 0; i < steps.size(); ++i) CHECK(steps[i] == ref.steps[i]);
            CHECK(runs.back().latent == ref.final);
        }
    }
}

TEST_CASE("oracle backend drives every phase onto its target") {
    auto cfg = small_config();
    const auto sched = cfg.schedule.build();
    RngStream rng(21);
    const Latent z_star = randn({4, 8, 8}, rng);
    const auto targets = bicubic_target_chain(z_star, 3);
    OracleDenoiser oracle_backend(sched, targets, 8, 8);
    const auto runs = run_pipeline(3, cfg, oracle_backend);
    REQUIRE(runs.size() == 3);
    for (int s = 0; s < 3; ++s) {
        CHECK(max_abs_diff(runs[s].latent, targets[s]) <= 1e-3);
    }
}

TEST_CASE("all ablation combinations run and stay finite") {
    for (int mask = 0; mask < 8; ++mask) {
        auto cfg = small_config();
        cfg.skip_residual = mask & 1;
        cfg.dilated = mask & 2;
        cfg.progressive = mask & 4;
        AffineDenoiser aff(4, 8, 8);
        const auto runs = run_pipeline(3, cfg, aff);
        CHECK(runs.size() == (cfg.progressive ? 3u : 2u));
        CHECK(runs.back().latent.shape() == Shape{4, 24, 24});
        CHECK(runs.back().latent.all_finite());
    }
}

TEST_CASE("path-step counts per phase") {
    auto cfg = small_config();
    AffineDenoiser aff(4, 8, 8);
    CountingDenoiser counter(aff);
    const auto runs = run_pipeline(3, cfg, counter);
    // Phase 2: 9 crops + 4 dilated views; phase 3: 25 crops + 9 views.
    CHECK(runs[0].path_steps == 10);
    CHECK(runs[1].path_steps == 13 * 10);
    CHECK(runs[2].path_steps == 34 * 10);
    CHECK(counter.patches() == 10 + 130 + 340);
    CHECK(counter.max_batch() <= static_cast<std::size_t>(cfg.batch_size));
}

TEST_CASE("determinism and seed sensitivity") {
    auto cfg = small_config();
    AffineDenoiser a(4, 8, 8);
    const auto r1 = run_pipeline(2, cfg, a);
    const auto r2 = run_pipeline(2, cfg, a);
    CHECK(r1.back().latent == r2.back().latent);
    cfg.seed = 12;
    CHECK_FALSE(run_pipeline(2, cfg, a).back().latent == r1.back().latent);
}

TEST_CASE("batch size and concurrency do not change the result") {
    auto cfg = small_config();
    AffineDenoiser a(4, 8, 8);
    const auto ref = run_pipeline(3, cfg, a).back().latent;
    for (int batch : {1, 5, 64}) {
        for (int inflight : {1, 3}) {
            cfg.batch_size = batch;
            cfg.inflight = inflight;
            CountingDenoiser counter(a);
            Pipeline p(cfg, counter);
            const auto runs = p.run(p.plan(3));
            CHECK(runs.back().latent == ref);
            CHECK(counter.max_batch() <= static_cast<std::size_t>(batch));
            CHECK(p.peak_inflight_paths() <= static_cast<std::size_t>(batch * inflight));
        }
    }
}

TEST_CASE("requests carry ids and geometry") {
    struct Spy final : Denoiser {
        AffineDenoiser inner{4, 8, 8};
        std::vector<DenoiseRequest> seen;
        BackendInfo info() const override { return inner.info(); }
        std::vector<Latent> denoise(const DenoiseRequest& req) override {
            seen.push_back(req);
            return inner.denoise(req);
        }
    } spy;
    auto cfg = small_config();
    cfg.batch_size = 4;
    run_pipeline(2, cfg, spy);
    CHECK(spy.seen.front().request_id == "p1-s0-b0");
    bool saw_global = false;
    for (const auto& r : spy.seen) {
        CHECK(r.conditionings == std::vector<std::string>{"c", "u"});
        const auto geo = path_geometry(r);
        CHECK(geo.size() == r.batch.size());
        for (const auto& g : geo) saw_global |= g.kind == PathKind::global;
    }
    CHECK(saw_global);
    CHECK(spy.seen.back().request_id.rfind("p2-s9-", 0) == 0);
}

TEST_CASE("start_t shortens later phases") {
    auto cfg = small_config();
    cfg.start_t = 500;
    AffineDenoiser a(4, 8, 8);
    const auto runs = run_pipeline(2, cfg, a);
    // Timesteps 901, 801, ..., 1; those <= 500 are 401..1, five steps.
    CHECK(runs[1].path_steps == 13 * 5);
}

TEST_CASE("init_from_latent replaces phase 1") {
    auto cfg = small_config();
    AffineDenoiser a(4, 8, 8);
    RngStream rng(3);
    const Latent init = randn({4, 8, 8}, rng);
    const auto runs = init_from_latent(init, 2, cfg, a);
    CHECK(runs.front().latent == init);
    CHECK(runs.back().latent.shape() == Shape{4, 16, 16});
    CHECK_THROWS_AS(init_from_latent(Latent(4, 6, 8), 2, cfg, a), InvalidArgument);
}

TEST_CASE("backend failures abort with phase and timestep context") {
    struct Flaky final : Denoiser {
        AffineDenoiser inner{4, 8, 8};
        int calls = 0;
        BackendInfo info() const override { return inner.info(); }
        std::vector<Latent> denoise(const DenoiseRequest& req) override {
            if (++calls == 15) throw BackendError("boom", req.request_id, true);
            return inner.denoise(req);
        }
    } flaky;
    auto cfg = small_config();
    std::vector<int> finished;
    RunObserver obs;
    obs.on_phase = [&](PhaseResult& r) { finished.push_back(r.phase); };
    try {
        run_pipeline(2, cfg, flaky, obs);
        FAIL("expected PipelineError");
    } catch (const PipelineError& e) {
        CHECK(e.phase() == 2);
        CHECK(e.timestep() > 0);
    }
    CHECK(finished == std::vector<int>{1});
}
