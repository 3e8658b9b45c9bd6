#include "progfuse/backend.hpp"

#include <cmath>
#include <fstream>

#include "progfuse/errors.hpp"
#include "progfuse/ops.hpp"
#include "progfuse/patching.hpp"
#include "progfuse/wire.hpp"

namespace progfuse {

void to_json(nlohmann::json& j, const PathGeometry& g) {
    if (g.kind == PathKind::local) {
        j = nlohmann::json{{"kind", "local"}, {"top", g.row}, {"left", g.col}};
    } else {
        j = nlohmann::json{{"kind", "global"}, {"offset", {g.row, g.col}}, {"dilation", g.stride}};
    }
}

void from_json(const nlohmann::json& j, PathGeometry& g) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "local") {
        g = PathGeometry{PathKind::local, j.at("top").get<int>(), j.at("left").get<int>(), 1};
    } else if (kind == "global") {
        const auto& off = j.at("offset");
        g = PathGeometry{PathKind::global, off.at(0).get<int>(), off.at(1).get<int>(), j.at("dilation").get<int>()};
    } else {
        throw ProtocolError("unknown path kind '" + kind + "'");
    }
}

void set_path_geometry(DenoiseRequest& req, int phase, int canvas_h, int canvas_w,
                       const std::vector<PathGeometry>& paths) {
    req.extras["phase"] = phase;
    req.extras["canvas"] = {canvas_h, canvas_w};
    req.extras["paths"] = paths;
}

std::vector<PathGeometry> path_geometry(const DenoiseRequest& req) {
    if (!req.extras.is_object() || !req.extras.contains("paths")) {
        return {};
    }
    return req.extras.at("paths").get<std::vector<PathGeometry>>();
}

std::pair<int, int> canvas_dims(const DenoiseRequest& req) {
    if (req.extras.is_object() && req.extras.contains("canvas")) {
        const auto& c = req.extras.at("canvas");
        return {c.at(0).get<int>(), c.at(1).get<int>()};
    }
    if (req.batch.empty()) {
        return {0, 0};
    }
    return {req.batch.front().height(), req.batch.front().width()};
}

std::vector<Latent> denoise_batch(Denoiser& backend, const DenoiseRequest& req, int batch_size) {
    if (req.batch.empty()) {
        throw InvalidArgument("denoise_batch: empty batch");
    }
    if (batch_size > 0 && static_cast<int>(req.batch.size()) > batch_size) {
        throw InvalidArgument("denoise_batch: batch of " + std::to_string(req.batch.size()) +
                              " exceeds batch_size " + std::to_string(batch_size));
    }
    if (req.conditionings.empty()) {
        throw InvalidArgument("denoise_batch: at least one conditioning is required");
    }
    const BackendInfo info = backend.info();
    const Shape shape = req.batch.front().shape();
    for (const auto& patch : req.batch) {
        if (patch.shape() != shape) {
            throw InvalidArgument("denoise_batch: mixed patch shapes in one batch");
        }
    }
    if (shape.channels != info.channels || shape.height > info.native_h || shape.width > info.native_w) {
        throw InvalidArgument("denoise_batch: patch shape " + shape.str() + " incompatible with backend native " +
                              std::to_string(info.channels) + "x" + std::to_string(info.native_h) + "x" +
                              std::to_string(info.native_w));
    }
    auto eps = backend.denoise(req);
    const std::size_t expected = req.batch.size() * req.conditionings.size();
    if (eps.size() != expected) {
        throw BackendError("denoise_batch: backend returned " + std::to_string(eps.size()) + " predictions, expected " +
                               std::to_string(expected),
                           req.request_id);
    }
    for (const auto& e : eps) {
        if (e.shape() != shape) {
            throw BackendError("denoise_batch: backend returned prediction of shape " + e.shape().str(),
                               req.request_id);
        }
    }
    return eps;
}

Latent oracle_epsilon(const Latent& z_t, int t, const Latent& target, const NoiseSchedule& schedule) {
    require_same_shape(z_t, target, "oracle_epsilon");
    if (t <= 0) {
        throw InvalidArgument("oracle_epsilon: t must be positive (noise scale is zero at t=0)");
    }
    const double abar = schedule.alpha_bar(t);
    const double signal = std::sqrt(abar);
    const double noise = std::sqrt(1.0 - abar);
    Latent out(z_t.shape());
    auto o = out.data();
    auto z = z_t.data();
    auto x = target.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = static_cast<float>((z[i] - signal * x[i]) / noise);
    }
    return out;
}

ZeroDenoiser::ZeroDenoiser(int channels, int native_h, int native_w) {
    m_info.kind = "mock-zero";
    m_info.channels = channels;
    m_info.native_h = native_h;
    m_info.native_w = native_w;
}

std::vector<Latent> ZeroDenoiser::denoise(const DenoiseRequest& req) {
    std::vector<Latent> out;
    out.reserve(req.batch.size() * req.conditionings.size());
    for (const auto& patch : req.batch) {
        for (std::size_t k = 0; k < req.conditionings.size(); ++k) {
            out.emplace_back(patch.shape(), 0.0f);
        }
    }
    return out;
}

OracleDenoiser::OracleDenoiser(NoiseSchedule schedule, std::vector<Latent> targets, int native_h, int native_w)
    : m_schedule(std::move(schedule)), m_targets(std::move(targets)) {
    if (m_targets.empty()) {
        throw InvalidArgument("OracleDenoiser: at least one target is required");
    }
    m_info.kind = "mock-oracle";
    m_info.channels = m_targets.front().channels();
    m_info.native_h = native_h;
    m_info.native_w = native_w;
}

const Latent& OracleDenoiser::target_for(int canvas_h, int canvas_w) const {
    for (const auto& t : m_targets) {
        if (t.height() == canvas_h && t.width() == canvas_w) {
            return t;
        }
    }
    throw BackendError("oracle: no target for canvas " + std::to_string(canvas_h) + "x" + std::to_string(canvas_w));
}

std::vector<Latent> OracleDenoiser::denoise(const DenoiseRequest& req) {
    const auto [canvas_h, canvas_w] = canvas_dims(req);
    const Latent& canvas_target = target_for(canvas_h, canvas_w);
    auto paths = path_geometry(req);
    if (paths.empty()) {
        paths.assign(req.batch.size(), PathGeometry{});
    }
    if (paths.size() != req.batch.size()) {
        throw BackendError("oracle: geometry count does not match batch", req.request_id);
    }
    std::vector<Latent> out;
    out.reserve(req.batch.size() * req.conditionings.size());
    for (std::size_t i = 0; i < req.batch.size(); ++i) {
        const Latent& patch = req.batch[i];
        const PathGeometry& g = paths[i];
        Latent target = g.kind == PathKind::local
                            ? extract_crop(canvas_target, {g.row, g.col}, patch.height(), patch.width())
                            : dilated_sample_one(canvas_target, DilationSet(g.stride), g.row * g.stride + g.col);
        Latent eps = oracle_epsilon(patch, req.timestep, target, m_schedule);
        for (std::size_t k = 0; k < req.conditionings.size(); ++k) {
            out.push_back(eps);
        }
    }
    return out;
}

std::vector<Latent> bicubic_target_chain(const Latent& z_star, int phases) {
    if (phases < 1) {
        throw InvalidArgument("bicubic_target_chain: phases must be >= 1");
    }
    std::vector<Latent> chain{z_star};
    for (int s = 2; s <= phases; ++s) {
        chain.push_back(upsample_bicubic(chain.back(), s * z_star.height(), s * z_star.width()));
    }
    return chain;
}

AffineDenoiser::AffineDenoiser(int channels, int native_h, int native_w) {
    m_info.kind = "mock-affine";
    m_info.channels = channels;
    m_info.native_h = native_h;
    m_info.native_w = native_w;
}

std::vector<Latent> AffineDenoiser::denoise(const DenoiseRequest& req) {
    std::vector<Latent> out;
    out.reserve(req.batch.size() * req.conditionings.size());
    for (const auto& patch : req.batch) {
        for (std::size_t k = 0; k < req.conditionings.size(); ++k) {
            Latent e(patch.shape());
            auto src = patch.data();
            auto dst = e.data();
            for (std::size_t i = 0; i < dst.size(); ++i) {
                dst[i] = value(src[i], req.timestep, static_cast<int>(k));
            }
            out.push_back(std::move(e));
        }
    }
    return out;
}

namespace {

void write_record(std::ofstream& out, const wire::Bytes& bytes) {
    const std::uint64_t n = bytes.size();
    std::uint8_t len[8];
    for (int i = 0; i < 8; ++i) {
        len[i] = static_cast<std::uint8_t>(n >> (8 * i));
    }
    out.write(reinterpret_cast<const char*>(len), 8);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

bool read_record(std::ifstream& in, wire::Bytes& bytes) {
    std::uint8_t len[8];
    if (!in.read(reinterpret_cast<char*>(len), 8)) {
        return false;
    }
    std::uint64_t n = 0;
    for (int i = 0; i < 8; ++i) {
        n |= static_cast<std::uint64_t>(len[i]) << (8 * i);
    }
    bytes.resize(n);
    if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n))) {
        throw FormatError("replay recording truncated");
    }
    return true;
}

}  // namespace

RecordingDenoiser::RecordingDenoiser(Denoiser& inner, std::filesystem::path path)
    : m_inner(inner), m_path(std::move(path)) {
    std::ofstream truncate(m_path, std::ios::binary | std::ios::trunc);
    if (!truncate) {
        throw Error("cannot open recording " + m_path.string());
    }
}

std::vector<Latent> RecordingDenoiser::denoise(const DenoiseRequest& req) {
    auto eps = m_inner.denoise(req);
    const auto request_frame = wire::encode_denoise_request(req);
    const auto response_frame = wire::encode_denoise_response(eps, req.request_id);
    std::lock_guard lock(m_mutex);
    std::ofstream out(m_path, std::ios::binary | std::ios::app);
    write_record(out, request_frame);
    write_record(out, response_frame);
    return eps;
}

ReplayDenoiser::ReplayDenoiser(const std::filesystem::path& path, BackendInfo info) : m_info(std::move(info)) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open recording " + path.string());
    }
    m_info.kind = "replay";
    wire::Bytes request;
    wire::Bytes response;
    while (read_record(in, request)) {
        if (!read_record(in, response)) {
            throw FormatError("replay recording ends with an unpaired request");
        }
        wire::validate_frame(request);
        wire::validate_frame(response);
        m_frames[request] = response;
    }
}

const std::vector<std::uint8_t>& ReplayDenoiser::recorded_response(const DenoiseRequest& req) const {
    const auto it = m_frames.find(wire::encode_denoise_request(req));
    if (it == m_frames.end()) {
        throw BackendError("replay: request not present in recording", req.request_id);
    }
    return it->second;
}

std::vector<Latent> ReplayDenoiser::denoise(const DenoiseRequest& req) {
    return wire::decode_denoise_response(recorded_response(req), req.request_id);
}

void atomic_store_max(std::atomic<std::size_t>& target, std::size_t value) noexcept {
    std::size_t prev = target.load();
    while (prev < value && !target.compare_exchange_weak(prev, value)) {
    }
}

std::vector<Latent> CountingDenoiser::denoise(const DenoiseRequest& req) {
    const std::size_t n = req.batch.size();
    ++m_calls;
    m_patches += n;
    atomic_store_max(m_max_batch, n);
    atomic_store_max(m_peak, m_outstanding += n);
    try {
        auto out = m_inner.denoise(req);
        m_outstanding -= n;
        return out;
    } catch (...) {
        m_outstanding -= n;
        throw;
    }
}

}  // namespace progfuse
