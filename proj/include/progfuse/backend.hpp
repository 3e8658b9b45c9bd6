#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "progfuse/latent.hpp"
#include "progfuse/schedule.hpp"

namespace progfuse {

enum class PathKind { local, global };

/// Where a denoising path came from on the phase canvas. For local paths
/// (row, col) is the crop's top-left corner and stride is 1; for global paths
/// it is the dilation offset and stride is the dilation factor.
struct PathGeometry {
    PathKind kind = PathKind::local;
    int row = 0;
    int col = 0;
    int stride = 1;
    bool operator==(const PathGeometry&) const = default;
};

void to_json(nlohmann::json& j, const PathGeometry& g);
void from_json(const nlohmann::json& j, PathGeometry& g);

struct DenoiseRequest {
    std::vector<Latent> batch;
    int timestep = 0;
    std::vector<std::string> conditionings;
    // Opaque passthrough. The engine writes "phase", "canvas" and "paths"
    // (crop coordinates / dilation offsets per patch).
    nlohmann::json extras = nlohmann::json::object();
    std::string request_id;
};

// Geometry helpers over DenoiseRequest::extras.
void set_path_geometry(DenoiseRequest& req, int phase, int canvas_h, int canvas_w,
                       const std::vector<PathGeometry>& paths);
std::vector<PathGeometry> path_geometry(const DenoiseRequest& req);
std::pair<int, int> canvas_dims(const DenoiseRequest& req);

struct BackendInfo {
    std::string kind;
    int native_h = 128;
    int native_w = 128;
    int channels = 4;
    int max_batch = 0;       // 0: no server-side limit
    int decode_factor = 0;   // 0: no decoder attached
};

/// Abstract epsilon-prediction backend. The response holds one prediction
/// per (patch, conditioning), patch-major.
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual BackendInfo info() const = 0;
    virtual std::vector<Latent> denoise(const DenoiseRequest& req) = 0;
};

// Validates the request against the handle (non-empty, <= batch_size,
// uniform patch shape within native dims, at least one conditioning) and
// forwards it.
std::vector<Latent> denoise_batch(Denoiser& backend, const DenoiseRequest& req, int batch_size);

// The unique eps for which a DDIM step's clean-latent prediction is `target`.
Latent oracle_epsilon(const Latent& z_t, int t, const Latent& target, const NoiseSchedule& schedule);

class ZeroDenoiser final : public Denoiser {
public:
    ZeroDenoiser(int channels, int native_h, int native_w);
    BackendInfo info() const override { return m_info; }
    std::vector<Latent> denoise(const DenoiseRequest& req) override;

private:
    BackendInfo m_info;
};

/// Returns oracle_epsilon against a per-phase target canvas, located by the
/// request's canvas dims and each patch's path geometry. Drives every DDIM
/// chain exactly onto the target.
class OracleDenoiser final : public Denoiser {
public:
    OracleDenoiser(NoiseSchedule schedule, std::vector<Latent> targets, int native_h, int native_w);
    BackendInfo info() const override { return m_info; }
    std::vector<Latent> denoise(const DenoiseRequest& req) override;

    const std::vector<Latent>& targets() const noexcept { return m_targets; }

private:
    const Latent& target_for(int canvas_h, int canvas_w) const;

    BackendInfo m_info;
    NoiseSchedule m_schedule;
    std::vector<Latent> m_targets;
};

// Target chain for the oracle: phase 1 is z_star, each later phase is the
// bicubic upsample of the previous one to (s * base_h, s * base_w).
std::vector<Latent> bicubic_target_chain(const Latent& z_star, int phases);

/// Closed-form deterministic test backend whose output depends on the patch,
/// t, and the conditioning index: eps = 0.5 z + 1e-3 t + 0.25 k.
class AffineDenoiser final : public Denoiser {
public:
    AffineDenoiser(int channels, int native_h, int native_w);
    BackendInfo info() const override { return m_info; }
    std::vector<Latent> denoise(const DenoiseRequest& req) override;

    static float value(float z, int t, int conditioning_index) {
        return static_cast<float>(0.5 * z + 1e-3 * t + 0.25 * conditioning_index);
    }

private:
    BackendInfo m_info;
};

/// Wraps a backend and writes every request/response frame pair to a file.
class RecordingDenoiser final : public Denoiser {
public:
    RecordingDenoiser(Denoiser& inner, std::filesystem::path path);
    BackendInfo info() const override { return m_inner.info(); }
    std::vector<Latent> denoise(const DenoiseRequest& req) override;

private:
    Denoiser& m_inner;
    std::filesystem::path m_path;
    std::mutex m_mutex;
};

/// Serves responses from a recording made by RecordingDenoiser, keyed by
/// the exact request frame bytes.
class ReplayDenoiser final : public Denoiser {
public:
    ReplayDenoiser(const std::filesystem::path& path, BackendInfo info);
    BackendInfo info() const override { return m_info; }
    std::vector<Latent> denoise(const DenoiseRequest& req) override;

    // Raw recorded response frame for a request.
    const std::vector<std::uint8_t>& recorded_response(const DenoiseRequest& req) const;
    std::size_t size() const noexcept { return m_frames.size(); }

private:
    BackendInfo m_info;
    std::map<std::vector<std::uint8_t>, std::vector<std::uint8_t>> m_frames;
};

/// Instrumentation decorator: counts calls and path-steps and tracks the
/// largest batch and peak concurrently outstanding patches.
class CountingDenoiser final : public Denoiser {
public:
    explicit CountingDenoiser(Denoiser& inner) : m_inner(inner) {}
    BackendInfo info() const override { return m_inner.info(); }
    std::vector<Latent> denoise(const DenoiseRequest& req) override;

    std::size_t calls() const noexcept { return m_calls; }
    std::size_t patches() const noexcept { return m_patches; }
    std::size_t max_batch() const noexcept { return m_max_batch; }
    std::size_t peak_outstanding() const noexcept { return m_peak; }

private:
    Denoiser& m_inner;
    std::atomic<std::size_t> m_calls{0};
    std::atomic<std::size_t> m_patches{0};
    std::atomic<std::size_t> m_max_batch{0};
    std::atomic<std::size_t> m_outstanding{0};
    std::atomic<std::size_t> m_peak{0};
};

void atomic_store_max(std::atomic<std::size_t>& target, std::size_t value) noexcept;

}  // namespace progfuse
