#include "progfuse/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <future>

#include "progfuse/errors.hpp"
#include "progfuse/ops.hpp"

namespace progfuse {

void PipelineConfig::validate() const {
    if (batch_size < 1) {
        throw InvalidArgument("batch_size must be >= 1");
    }
    if (inflight < 1) {
        throw InvalidArgument("inflight must be >= 1");
    }
    if (!(decay.alpha1 > 0.0) || !(decay.alpha2 > 0.0) || !(decay.alpha3 > 0.0)) {
        throw InvalidArgument("decay exponents alpha1..3 must be positive");
    }
    if (!(decay.sigma2 > 0.0) || !(decay.sigma2 < decay.sigma1)) {
        throw InvalidArgument("filter sigmas must satisfy 0 < sigma2 < sigma1");
    }
    if (!(guidance.scale >= 0.0) || !std::isfinite(guidance.scale)) {
        throw InvalidArgument("guidance scale must be a finite non-negative number");
    }
    if (base_h < 0 || base_w < 0 || stride_h < 0 || stride_w < 0) {
        throw InvalidArgument("base dims and strides must be non-negative (0 selects the default)");
    }
    if (jitter_max < -1) {
        throw InvalidArgument("jitter_max must be >= 0 (or -1 for crop size / 16)");
    }
    if (start_t < -1 || start_t > schedule.train_steps) {
        throw InvalidArgument("start_t must be in [0, train_steps] (or -1 for the full schedule)");
    }
}

PhasePlan plan_phases_direct(int S, int base_h, int base_w) {
    if (S < 1) {
        throw InvalidArgument("number of phases must be >= 1");
    }
    if (base_h <= 0 || base_w <= 0) {
        throw InvalidArgument("base latent dims must be positive");
    }
    PhasePlan plan;
    plan.S = S;
    plan.base_h = base_h;
    plan.base_w = base_w;
    for (int s = 1; s <= S; ++s) {
        plan.phases.push_back({s, s * base_h, s * base_w});
    }
    return plan;
}

PhasePlan plan_phases(int K, int base_h, int base_w) {
    if (K < 1) {
        throw InvalidArgument("magnification factor must be >= 1");
    }
    const int S = static_cast<int>(std::lround(std::sqrt(static_cast<double>(K))));
    if (S * S != K) {
        throw InvalidArgument("magnification factor " + std::to_string(K) +
                              " is not a perfect square; the side-length scale S = sqrt(K) must be an integer "
                              "(use 1, 4, 9, 16, ... or give the number of phases S directly)");
    }
    return plan_phases_direct(S, base_h, base_w);
}

PhasePlan without_progression(const PhasePlan& plan) {
    PhasePlan out = plan;
    if (plan.phases.size() > 2) {
        out.phases = {plan.phases.front(), plan.phases.back()};
    }
    return out;
}

Latent convex_blend(const Latent& a, const Latent& b, double weight) {
    require_same_shape(a, b, "convex_blend");
    const double other = 1.0 - weight;
    Latent out(a.shape());
    auto o = out.data();
    auto pa = a.data();
    auto pb = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = static_cast<float>(weight * pa[i] + other * pb[i]);
    }
    return out;
}

Latent skip_residual_blend(const Latent& z_denoise, const Latent& z_diffused, int t, int T, double alpha1) {
    require_same_shape(z_denoise, z_diffused, "skip_residual_blend");
    return convex_blend(z_diffused, z_denoise, cosine_decay(t, T, alpha1));
}

Latent fuse_global_local(const Latent& z_global, const Latent& z_local, int t, int T, double alpha2) {
    require_same_shape(z_global, z_local, "fuse_global_local");
    return convex_blend(z_global, z_local, cosine_decay(t, T, alpha2));
}

void InflightMeter::acquire(std::size_t n) noexcept { atomic_store_max(m_peak, m_current += n); }

void InflightMeter::release(std::size_t n) noexcept { m_current -= n; }

Pipeline::Pipeline(PipelineConfig config, Denoiser& backend)
    : m_config(std::move(config)), m_backend(backend), m_schedule(m_config.schedule.build()) {
    m_config.validate();
    const BackendInfo info = m_backend.info();
    if (info.channels <= 0 || info.native_h <= 0 || info.native_w <= 0) {
        throw InvalidArgument("backend reports invalid native dims");
    }
    m_channels = info.channels;
    m_base_h = m_config.base_h > 0 ? m_config.base_h : info.native_h;
    m_base_w = m_config.base_w > 0 ? m_config.base_w : info.native_w;
    if (m_base_h > info.native_h || m_base_w > info.native_w) {
        throw InvalidArgument("phase-1 dims " + std::to_string(m_base_h) + "x" + std::to_string(m_base_w) +
                              " exceed the backend's native " + std::to_string(info.native_h) + "x" +
                              std::to_string(info.native_w));
    }
    m_crop_h = info.native_h;
    m_crop_w = info.native_w;
    if (info.max_batch > 0 && m_config.batch_size > info.max_batch) {
        throw InvalidArgument("batch_size " + std::to_string(m_config.batch_size) + " exceeds backend max_batch " +
                              std::to_string(info.max_batch));
    }
}

PhasePlan Pipeline::plan(int S) const {
    PhasePlan p = plan_phases_direct(S, m_base_h, m_base_w);
    return m_config.progressive ? p : without_progression(p);
}

Latent Pipeline::initial_noise() const {
    RngStream rng = RngStream::derive(m_config.seed, StreamPurpose::phase1_init);
    return randn(Shape{m_channels, m_base_h, m_base_w}, rng);
}

RngStream Pipeline::jitter_stream(int phase, std::size_t step) const {
    return RngStream::derive(m_config.seed, StreamPurpose::crop_jitter, static_cast<std::uint64_t>(phase),
                             m_config.freeze_jitter ? 0 : step);
}

RngStream Pipeline::trajectory_stream(int phase) const {
    return RngStream::derive(m_config.seed, StreamPurpose::trajectory, static_cast<std::uint64_t>(phase));
}

CropSet Pipeline::crop_plan(int H, int W) const {
    const int h = std::min(m_crop_h, H);
    const int w = std::min(m_crop_w, W);
    const int dh = m_config.stride_h > 0 ? m_config.stride_h : std::max(1, h / 2);
    const int dw = m_config.stride_w > 0 ? m_config.stride_w : std::max(1, w / 2);
    CropSet set = plan_crops(H, W, h, w, dh, dw);
    if (!m_config.jitter) {
        set.jitter_max_h = set.jitter_max_w = 0;
    } else if (m_config.jitter_max >= 0) {
        set.jitter_max_h = set.jitter_max_w = m_config.jitter_max;
    }
    return set;
}

Latent Pipeline::denoise_step(const Latent& z_hat, const Latent* z_global_input, const CropSet& crops, int dilation,
                              int phase, std::size_t step_index, double c2, StepStats& stats) {
    const int H = z_hat.height();
    const int W = z_hat.width();
    const int t = m_schedule.timesteps()[step_index];
    const int t_prev = m_schedule.previous_timestep(step_index);
    const DilationSet dil(dilation);

    std::vector<PathGeometry> paths;
    paths.reserve(crops.size() + (z_global_input ? dil.count() : 0));
    for (const auto& pos : crops.crops) {
        paths.push_back({PathKind::local, pos.top, pos.left, 1});
    }
    if (z_global_input) {
        for (int m = 0; m < dil.count(); ++m) {
            const auto off = dil.offset(m);
            paths.push_back({PathKind::global, off.top, off.left, dilation});
        }
    }

    auto extract = [&](const PathGeometry& g) {
        return g.kind == PathKind::local ? extract_crop(z_hat, {g.row, g.col}, crops.patch_h, crops.patch_w)
                                         : dilated_sample_one(*z_global_input, dil, g.row * dilation + g.col);
    };
    auto patch_shape = [&](const PathGeometry& g) {
        return g.kind == PathKind::local ? std::pair{crops.patch_h, crops.patch_w}
                                         : std::pair{H / dilation, W / dilation};
    };

    LocalAccumulator local(z_hat.channels(), H, W);
    Latent global(z_hat.shape());

    struct Pending {
        std::size_t first = 0;
        int batch_index = 0;
        std::shared_ptr<DenoiseRequest> request;
        std::future<std::vector<Latent>> eps;
    };
    std::deque<Pending> queue;
    const std::size_t k = 2;
    const double g = m_config.guidance.scale;

    auto drain_one = [&]() {
        Pending p = std::move(queue.front());
        queue.pop_front();
        const std::size_t n = p.request->batch.size();
        std::vector<Latent> eps;
        try {
            eps = p.eps.get();
        } catch (const std::exception& e) {
            m_meter.release(n);
            throw PipelineError("phase " + std::to_string(phase) + ", t=" + std::to_string(t) + ", batch " +
                                    std::to_string(p.batch_index) + ": " + e.what(),
                                phase, t, p.batch_index);
        }
        for (std::size_t j = 0; j < n; ++j) {
            const Latent guided = cfg_combine(eps[j * k + 1], eps[j * k], g);
            const Latent stepped = ddim_step(p.request->batch[j], guided, t, t_prev, m_schedule);
            const PathGeometry& geo = paths[p.first + j];
            if (geo.kind == PathKind::local) {
                local.add(stepped, {geo.row, geo.col});
            } else {
                dilated_scatter(global, stepped, dil, geo.row * dilation + geo.col);
            }
        }
        m_meter.release(n);
    };

    const auto launch = m_config.inflight > 1 ? std::launch::async : std::launch::deferred;
    int batch_index = 0;
    try {
        for (std::size_t first = 0; first < paths.size(); ++batch_index) {
            const auto shape = patch_shape(paths[first]);
            std::size_t end = first;
            while (end < paths.size() && end - first < static_cast<std::size_t>(m_config.batch_size) &&
                   patch_shape(paths[end]) == shape) {
                ++end;
            }
            if (queue.size() >= static_cast<std::size_t>(m_config.inflight)) {
                drain_one();
            }
            auto req = std::make_shared<DenoiseRequest>();
            req->timestep = t;
            req->conditionings = {m_config.guidance.conditioning_id, m_config.guidance.unconditional_id};
            req->request_id = "p" + std::to_string(phase) + "-s" + std::to_string(step_index) + "-b" +
                              std::to_string(batch_index);
            m_meter.acquire(end - first);
            req->batch.reserve(end - first);
            for (std::size_t i = first; i < end; ++i) {
                req->batch.push_back(extract(paths[i]));
            }
            set_path_geometry(*req, phase, H, W, std::vector<PathGeometry>(paths.begin() + first, paths.begin() + end));
            Pending p;
            p.first = first;
            p.batch_index = batch_index;
            p.request = req;
            p.eps = std::async(launch, [this, req]() { return denoise_batch(m_backend, *req, m_config.batch_size); });
            queue.push_back(std::move(p));
            ++stats.calls;
            stats.path_steps += end - first;
            first = end;
        }
        while (!queue.empty()) {
            drain_one();
        }
    } catch (...) {
        for (auto& p : queue) {
            if (p.eps.valid()) {
                p.eps.wait();
            }
            m_meter.release(p.request->batch.size());
        }
        throw;
    }

    // With the global path disabled c2 is 0 and `global` is an unevaluated
    // zero canvas, so the blend returns the local reconstruction exactly.
    return convex_blend(global, local.finish(), z_global_input ? c2 : 0.0);
}

PhaseResult Pipeline::run_phase1(const RunObserver& observer) {
    const auto start = std::chrono::steady_clock::now();
    Latent z = initial_noise();
    const CropSet single = plan_crops(m_base_h, m_base_w, m_base_h, m_base_w, m_base_h, m_base_w);
    StepStats stats;
    for (std::size_t i = 0; i < m_schedule.timesteps().size(); ++i) {
        z = denoise_step(z, nullptr, single, 1, 1, i, 0.0, stats);
        if (observer.on_step) {
            observer.on_step(1, m_schedule.previous_timestep(i), z);
        }
    }
    if (!z.all_finite()) {
        throw PipelineError("phase 1 produced non-finite values", 1, 0, -1);
    }
    PhaseResult r;
    r.phase = 1;
    r.latent = std::move(z);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    r.denoiser_calls = stats.calls;
    r.path_steps = stats.path_steps;
    r.peak_inflight_paths = m_meter.peak();
    return r;
}

PhaseResult Pipeline::run_phase(const PhasePlan::Phase& phase, const PhaseResult& prev, const RunObserver& observer) {
    const int s = phase.index;
    if (s < 2) {
        throw InvalidArgument("run_phase: phase index must be >= 2");
    }
    if (phase.height % s != 0 || phase.width % s != 0) {
        throw InvalidArgument("run_phase: phase dims must be divisible by the dilation factor");
    }
    if (prev.latent.channels() != m_channels || prev.latent.height() > phase.height ||
        prev.latent.width() > phase.width) {
        throw InvalidArgument("run_phase: previous phase latent " + prev.latent.shape().str() +
                              " incompatible with phase " + std::to_string(s));
    }
    const auto start = std::chrono::steady_clock::now();
    const int T = m_schedule.train_steps();
    const auto& steps = m_schedule.timesteps();

    // Upsample, then diffuse along one correlated trajectory.
    const Latent upsampled = upsample_bicubic(prev.latent, phase.height, phase.width);
    RngStream traj_rng = trajectory_stream(s);
    auto trajectory = diffuse_trajectory(upsampled, m_schedule, traj_rng);
    auto diffused_at = [&](int t) -> const Latent& {
        for (const auto& [tt, z] : trajectory) {
            if (tt == t) {
                return z;
            }
        }
        throw Error("trajectory has no entry for t=" + std::to_string(t));
    };

    std::size_t first_step = 0;
    if (m_config.start_t >= 0) {
        while (first_step < steps.size() && steps[first_step] > m_config.start_t) {
            ++first_step;
        }
    }

    const CropSet grid = crop_plan(phase.height, phase.width);
    const bool jittered = grid.jitter_max_h > 0 || grid.jitter_max_w > 0;
    std::optional<CropSet> frozen;
    if (jittered && m_config.freeze_jitter) {
        RngStream rng = jitter_stream(s, 0);
        frozen = jitter_crops(grid, rng);
    }

    StepStats stats;
    Latent z = first_step < steps.size() ? diffused_at(steps[first_step]) : upsampled;
    for (std::size_t i = first_step; i < steps.size(); ++i) {
        const int t = steps[i];
        const double c1 = m_config.skip_residual ? cosine_decay(t, T, m_config.decay.alpha1) : 0.0;
        const Latent z_hat = convex_blend(diffused_at(t), z, c1);

        CropSet crops = grid;
        if (frozen) {
            crops = *frozen;
        } else if (jittered) {
            RngStream rng = jitter_stream(s, i);
            crops = jitter_crops(grid, rng);
        }

        if (m_config.dilated) {
            const double sigma = sigma_at(t, T, m_config.decay);
            const Latent blurred = gaussian_filter(z_hat, GaussianKernel::for_dilation(s, sigma));
            const double c2 = cosine_decay(t, T, m_config.decay.alpha2);
            z = denoise_step(z_hat, &blurred, crops, s, s, i, c2, stats);
        } else {
            z = denoise_step(z_hat, nullptr, crops, s, s, i, 0.0, stats);
        }
        if (!z.all_finite()) {
            throw PipelineError("phase " + std::to_string(s) + " produced non-finite values at t=" + std::to_string(t),
                                s, t, -1);
        }
        if (observer.on_step) {
            observer.on_step(s, m_schedule.previous_timestep(i), z);
        }
    }

    PhaseResult r;
    r.phase = s;
    r.latent = std::move(z);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    r.denoiser_calls = stats.calls;
    r.path_steps = stats.path_steps;
    r.peak_inflight_paths = m_meter.peak();
    return r;
}

std::vector<PhaseResult> Pipeline::run(const PhasePlan& plan, const RunObserver& observer) {
    std::vector<PhaseResult> results;
    results.push_back(run_phase1(observer));
    if (observer.on_phase) {
        observer.on_phase(results.back());
    }
    for (std::size_t i = 1; i < plan.phases.size(); ++i) {
        results.push_back(run_phase(plan.phases[i], results.back(), observer));
        if (observer.on_phase) {
            observer.on_phase(results.back());
        }
    }
    return results;
}

std::vector<PhaseResult> Pipeline::run_from_latent(const Latent& z_init, const PhasePlan& plan,
                                                   const RunObserver& observer) {
    if (z_init.shape() != Shape{m_channels, m_base_h, m_base_w}) {
        throw InvalidArgument("init latent " + z_init.shape().str() + " does not match phase-1 dims " +
                              Shape{m_channels, m_base_h, m_base_w}.str());
    }
    if (!z_init.all_finite()) {
        throw InvalidArgument("init latent contains non-finite values");
    }
    std::vector<PhaseResult> results;
    PhaseResult first;
    first.phase = 1;
    first.latent = z_init;
    results.push_back(std::move(first));
    if (observer.on_phase) {
        observer.on_phase(results.back());
    }
    for (std::size_t i = 1; i < plan.phases.size(); ++i) {
        results.push_back(run_phase(plan.phases[i], results.back(), observer));
        if (observer.on_phase) {
            observer.on_phase(results.back());
        }
    }
    return results;
}

PhaseResult run_phase1(const PipelineConfig& config, Denoiser& backend) {
    Pipeline p(config, backend);
    return p.run_phase1();
}

std::vector<PhaseResult> run_pipeline(int S, const PipelineConfig& config, Denoiser& backend,
                                      const RunObserver& observer) {
    Pipeline p(config, backend);
    return p.run(p.plan(S), observer);
}

std::vector<PhaseResult> init_from_latent(const Latent& z_init, int S, const PipelineConfig& config,
                                          Denoiser& backend, const RunObserver& observer) {
    Pipeline p(config, backend);
    return p.run_from_latent(z_init, p.plan(S), observer);
}

}  // namespace progfuse
