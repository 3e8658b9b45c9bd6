#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "progfuse/backend.hpp"
#include "progfuse/latent.hpp"
#include "progfuse/patching.hpp"
#include "progfuse/schedule.hpp"

namespace progfuse {

struct ScheduleConfig {
    int train_steps = 1000;
    double beta_start = 0.00085;
    double beta_end = 0.012;
    int inference_steps = 50;
    BetaLaw law = BetaLaw::scaled_linear;

    NoiseSchedule build() const {
        return build_schedule(train_steps, beta_start, beta_end, inference_steps, law);
    }
};

struct PipelineConfig {
    DecayParams decay;
    GuidanceSpec guidance;
    ScheduleConfig schedule;

    // Phase-1 latent dims; 0 means the backend's native dims.
    int base_h = 0;
    int base_w = 0;
    // Crop strides; 0 means half the crop size.
    int stride_h = 0;
    int stride_w = 0;
    bool jitter = true;
    // Maximum crop jitter; -1 means crop size / 16.
    int jitter_max = -1;
    // Draw jitter once per phase instead of once per denoising step.
    bool freeze_jitter = false;

    int batch_size = 8;
    // Batches evaluated concurrently within one denoising step.
    int inflight = 1;

    bool skip_residual = true;
    bool dilated = true;
    bool progressive = true;

    // Phases 2..S start denoising at the largest DDIM timestep <= start_t
    // instead of T; -1 keeps the full schedule.
    int start_t = -1;

    std::uint64_t seed = 0;

    void validate() const;
};

/// Per-phase latent dims and dilation factors.
struct PhasePlan {
    struct Phase {
        int index = 1;  // s; also the dilation factor
        int height = 0;
        int width = 0;
    };

    int S = 1;
    int base_h = 0;
    int base_w = 0;
    std::vector<Phase> phases;
};

// S = sqrt(K); K must be a perfect square.
PhasePlan plan_phases(int K, int base_h, int base_w);
PhasePlan plan_phases_direct(int S, int base_h, int base_w);
// Drops phases 2..S-1 (progressive upscaling disabled): phase 1 then S.
PhasePlan without_progression(const PhasePlan& plan);

struct PhaseResult {
    int phase = 1;
    Latent latent;
    double seconds = 0.0;
    std::size_t denoiser_calls = 0;
    std::size_t path_steps = 0;
    std::size_t peak_inflight_paths = 0;
    std::string preview_path;
};

/// Hooks for previews and step-level inspection.
struct RunObserver {
    std::function<void(PhaseResult&)> on_phase;
    // Canvas after each denoising step of a phase (z_{t_prev}).
    std::function<void(int phase, int t, const Latent&)> on_step;
};

// c1 z_diffused + (1 - c1) z_denoise with c1 = cosine_decay(t, T, alpha1).
Latent skip_residual_blend(const Latent& z_denoise, const Latent& z_diffused, int t, int T, double alpha1);
// c2 z_global + (1 - c2) z_local with c2 = cosine_decay(t, T, alpha2).
Latent fuse_global_local(const Latent& z_global, const Latent& z_local, int t, int T, double alpha2);
// weight * a + (1 - weight) * b, elementwise in double.
Latent convex_blend(const Latent& a, const Latent& b, double weight);

/// Counts path latents held between extraction and accumulation.
class InflightMeter {
public:
    void acquire(std::size_t n) noexcept;
    void release(std::size_t n) noexcept;
    std::size_t peak() const noexcept { return m_peak; }
    void reset_peak() noexcept { m_peak = m_current.load(); }

private:
    std::atomic<std::size_t> m_current{0};
    std::atomic<std::size_t> m_peak{0};
};

/// Runs the phase loop against one backend. Random draws come from
/// substreams of config.seed: phase-1 init, per-phase trajectory noise, and
/// per-(phase, step) crop jitter.
class Pipeline {
public:
    Pipeline(PipelineConfig config, Denoiser& backend);

    const PipelineConfig& config() const noexcept { return m_config; }
    const NoiseSchedule& schedule() const noexcept { return m_schedule; }
    int base_h() const noexcept { return m_base_h; }
    int base_w() const noexcept { return m_base_w; }
    int crop_h() const noexcept { return m_crop_h; }
    int crop_w() const noexcept { return m_crop_w; }

    PhasePlan plan(int S) const;

    PhaseResult run_phase1(const RunObserver& observer = {});
    PhaseResult run_phase(const PhasePlan::Phase& phase, const PhaseResult& prev, const RunObserver& observer = {});

    std::vector<PhaseResult> run(const PhasePlan& plan, const RunObserver& observer = {});
    // Replaces phase 1 with z_init (e.g. an encoded image).
    std::vector<PhaseResult> run_from_latent(const Latent& z_init, const PhasePlan& plan,
                                             const RunObserver& observer = {});

    // Initial noise for phase 1 (exposed for reference implementations).
    Latent initial_noise() const;
    // Crop plan for a phase canvas, before jitter.
    CropSet crop_plan(int H, int W) const;
    // Jitter stream for a phase and step index.
    RngStream jitter_stream(int phase, std::size_t step) const;
    RngStream trajectory_stream(int phase) const;

    std::size_t peak_inflight_paths() const noexcept { return m_meter.peak(); }

private:
    struct StepStats {
        std::size_t calls = 0;
        std::size_t path_steps = 0;
    };

    Latent denoise_step(const Latent& z_hat, const Latent* z_global_input, const CropSet& crops, int dilation,
                        int phase, std::size_t step_index, double c2, StepStats& stats);

    PipelineConfig m_config;
    Denoiser& m_backend;
    NoiseSchedule m_schedule;
    int m_channels;
    int m_base_h;
    int m_base_w;
    int m_crop_h;
    int m_crop_w;
    InflightMeter m_meter;
};

// Free-function entry points over a temporary Pipeline.
PhaseResult run_phase1(const PipelineConfig& config, Denoiser& backend);
std::vector<PhaseResult> run_pipeline(int S, const PipelineConfig& config, Denoiser& backend,
                                      const RunObserver& observer = {});
std::vector<PhaseResult> init_from_latent(const Latent& z_init, int S, const PipelineConfig& config,
                                          Denoiser& backend, const RunObserver& observer = {});

}  // namespace progfuse
