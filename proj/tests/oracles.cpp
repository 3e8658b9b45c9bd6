#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "json.hpp"
#include "progfuse/ops.hpp"

namespace oracle {

using namespace progfuse;

double keys_cubic(double x) {
    const double a = -0.5;
    const double ax = std::fabs(x);
    if (ax <= 1.0) {
        return (a + 2.0) * ax * ax * ax - (a + 3.0) * ax * ax + 1.0;
    }
    if (ax < 2.0) {
        return a * ax * ax * ax - 5.0 * a * ax * ax + 8.0 * a * ax - 4.0 * a;
    }
    return 0.0;
}

Latent bicubic_bruteforce(const Latent& z, int H, int W) {
    Latent out(z.channels(), H, W);
    const int h = z.height();
    const int w = z.width();
    for (int c = 0; c < z.channels(); ++c) {
        for (int Y = 0; Y < H; ++Y) {
            const double sy = (Y + 0.5) * h / H - 0.5;
            for (int X = 0; X < W; ++X) {
                const double sx = (X + 0.5) * w / W - 0.5;
                double acc = 0.0;
                for (int i = -4; i < h + 4; ++i) {
                    const double wy = keys_cubic(sy - i);
                    if (wy == 0.0) {
                        continue;
                    }
                    for (int j = -4; j < w + 4; ++j) {
                        const int ci = std::min(std::max(i, 0), h - 1);
                        const int cj = std::min(std::max(j, 0), w - 1);
                        acc += wy * keys_cubic(sx - j) * z.at(c, ci, cj);
                    }
                }
                out.at(c, Y, X) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

Latent conv2d_direct(const Latent& z, const std::vector<double>& taps) {
    const int n = static_cast<int>(taps.size());
    const int half = n / 2;
    Latent out(z.shape());
    for (int c = 0; c < z.channels(); ++c) {
        for (int y = 0; y < z.height(); ++y) {
            for (int x = 0; x < z.width(); ++x) {
                double acc = 0.0;
                for (int a = 0; a < n; ++a) {
                    for (int b = 0; b < n; ++b) {
                        const int sy = std::min(std::max(y + a - half, 0), z.height() - 1);
                        const int sx = std::min(std::max(x + b - half, 0), z.width() - 1);
                        acc += taps[a] * taps[b] * z.at(c, sy, sx);
                    }
                }
                out.at(c, y, x) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

std::vector<double> alpha_bar_product(const std::vector<double>& betas) {
    std::vector<double> out(betas.size(), 1.0);
    for (std::size_t t = 1; t < betas.size(); ++t) {
        double p = 1.0;
        for (std::size_t i = 1; i <= t; ++i) {
            p *= 1.0 - betas[i];
        }
        out[t] = p;
    }
    return out;
}

Latent covering_mean(const std::vector<Latent>& patches, const std::vector<CropPosition>& crops, int H, int W) {
    Latent out(patches.front().channels(), H, W);
    for (int c = 0; c < out.channels(); ++c) {
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                double sum = 0.0;
                int n = 0;
                for (std::size_t k = 0; k < patches.size(); ++k) {
                    const auto& p = patches[k];
                    const int py = y - crops[k].top;
                    const int px = x - crops[k].left;
                    if (py >= 0 && px >= 0 && py < p.height() && px < p.width()) {
                        sum += p.at(c, py, px);
                        ++n;
                    }
                }
                out.at(c, y, x) = static_cast<float>(sum / n);
            }
        }
    }
    return out;
}

std::size_t enumerate_crop_count(int H, int W, int h, int w, int dh, int dw) {
    std::size_t rows = 0;
    std::size_t cols = 0;
    for (int top = 0; top + h <= H; ++top) {
        rows += (top % dh == 0) ? 1 : 0;
    }
    for (int left = 0; left + w <= W; ++left) {
        cols += (left % dw == 0) ? 1 : 0;
    }
    return rows * cols;
}

std::size_t enumerate_dilated_count(int H, int W, int s) {
    std::size_t n = 0;
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            // (i, j) starts a view iff it is the first cell of its residue class.
            if (i < s && j < s) {
                ++n;
            }
        }
    }
    return n;
}

namespace {

std::vector<Latent> eps_for(Denoiser& backend, const Latent& patch, int t, const PipelineConfig& config, int phase,
                            int H, int W, CropPosition pos) {
    DenoiseRequest req;
    req.batch = {patch};
    req.timestep = t;
    req.conditionings = {config.guidance.conditioning_id, config.guidance.unconditional_id};
    set_path_geometry(req, phase, H, W, {PathGeometry{PathKind::local, pos.top, pos.left, 1}});
    return backend.denoise(req);
}

Latent guided_step(const Latent& patch, const std::vector<Latent>& eps, double g, int t, int t_prev,
                   const NoiseSchedule& sched) {
    const double abar_t = sched.alpha_bars()[t];
    const double abar_p = sched.alpha_bars()[t_prev];
    const double nt = std::sqrt(1.0 - abar_t);
    const double st = std::sqrt(abar_t);
    const double sp = std::sqrt(abar_p);
    const double np = std::sqrt(1.0 - abar_p);
    Latent out(patch.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const float c = eps[0].data()[i];
        const float u = eps[1].data()[i];
        const float e = static_cast<float>(u + g * (static_cast<double>(c) - u));
        const double x0 = (patch.data()[i] - nt * e) / st;
        out.data()[i] = static_cast<float>(sp * x0 + np * e);
    }
    return out;
}

}  // namespace

ReferenceRun reference_multidiffusion(Denoiser& backend, const PipelineConfig& config, int S) {
    const NoiseSchedule sched = config.schedule.build();
    const auto info = backend.info();
    const int h = info.native_h;
    const int w = info.native_w;
    const int c = info.channels;
    const double g = config.guidance.scale;
    const auto& ts = sched.timesteps();
    auto t_prev_of = [&](std::size_t i) { return i + 1 < ts.size() ? ts[i + 1] : 0; };

    ReferenceRun run;

    RngStream init = RngStream::derive(config.seed, StreamPurpose::phase1_init);
    Latent z(c, h, w);
    for (float& v : z.data()) {
        v = static_cast<float>(init.normal());
    }
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const auto eps = eps_for(backend, z, ts[i], config, 1, h, w, {0, 0});
        z = guided_step(z, eps, g, ts[i], t_prev_of(i), sched);
    }
    run.phase1 = z;
    if (S == 1) {
        run.final = z;
        return run;
    }

    const int H = S * h;
    const int W = S * w;
    const Latent up = upsample_bicubic(z, H, W);
    RngStream traj_rng = RngStream::derive(config.seed, StreamPurpose::trajectory, static_cast<std::uint64_t>(S));
    const auto traj = diffuse_trajectory(up, sched, traj_rng);
    Latent canvas = traj.back().second;  // largest t == ts.front()

    const int dh = config.stride_h > 0 ? config.stride_h : h / 2;
    const int dw = config.stride_w > 0 ? config.stride_w : w / 2;
    std::vector<int> tops;
    std::vector<int> lefts;
    for (int p = 0; p < H - h; p += dh) tops.push_back(p);
    tops.push_back(H - h);
    for (int p = 0; p < W - w; p += dw) lefts.push_back(p);
    lefts.push_back(W - w);
    const int jmax_h = !config.jitter ? 0 : (config.jitter_max >= 0 ? config.jitter_max : h / 16);
    const int jmax_w = !config.jitter ? 0 : (config.jitter_max >= 0 ? config.jitter_max : w / 16);

    for (std::size_t i = 0; i < ts.size(); ++i) {
        std::vector<CropPosition> crops;
        for (int top : tops) {
            for (int left : lefts) {
                crops.push_back({top, left});
            }
        }
        if (jmax_h > 0 || jmax_w > 0) {
            RngStream jr = RngStream::derive(config.seed, StreamPurpose::crop_jitter, static_cast<std::uint64_t>(S),
                                             config.freeze_jitter ? 0 : i);
            for (auto& p : crops) {
                const auto dy = jr.uniform_int(-jmax_h, jmax_h);
                const auto dx = jr.uniform_int(-jmax_w, jmax_w);
                if (p.top != 0 && p.top != H - h) p.top = std::clamp(p.top + static_cast<int>(dy), 0, H - h);
                if (p.left != 0 && p.left != W - w) p.left = std::clamp(p.left + static_cast<int>(dx), 0, W - w);
            }
        }
        std::vector<double> sum(canvas.size(), 0.0);
        std::vector<int> count(static_cast<std::size_t>(H) * W, 0);
        for (const auto& pos : crops) {
            Latent patch(c, h, w);
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) patch.at(ch, y, x) = canvas.at(ch, pos.top + y, pos.left + x);
            const auto eps = eps_for(backend, patch, ts[i], config, S, H, W, pos);
            const Latent stepped = guided_step(patch, eps, g, ts[i], t_prev_of(i), sched);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) ++count[static_cast<std::size_t>(pos.top + y) * W + pos.left + x];
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        sum[(static_cast<std::size_t>(ch) * H + pos.top + y) * W + pos.left + x] +=
                            stepped.at(ch, y, x);
        }
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    const std::size_t cell = static_cast<std::size_t>(y) * W + x;
                    canvas.at(ch, y, x) = static_cast<float>(sum[ch * static_cast<std::size_t>(H) * W + cell] /
                                                             count[cell]);
                }
        run.steps.push_back(canvas);
    }
    run.final = canvas;
    return run;
}

Latent zero_denoiser_chain(const Latent& z_T, const NoiseSchedule& schedule) {
    Latent z = z_T;
    const auto& ts = schedule.timesteps();
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const int t_prev = i + 1 < ts.size() ? ts[i + 1] : 0;
        const double ratio = std::sqrt(schedule.alpha_bars()[t_prev] / schedule.alpha_bars()[ts[i]]);
        for (float& v : z.data()) {
            v = static_cast<float>(v * ratio);
        }
    }
    return z;
}

std::string check_frame(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8) return "short";
    if (std::memcmp(bytes.data(), "PFD1", 4) != 0) return "magic";
    const std::uint32_t len = bytes[4] | bytes[5] << 8 | bytes[6] << 16 | static_cast<std::uint32_t>(bytes[7]) << 24;
    if (8 + static_cast<std::size_t>(len) > bytes.size()) return "header length";
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
    } catch (...) {
        return "json";
    }
    const std::size_t payload = bytes.size() - 8 - len;
    std::size_t elems = 1;
    for (const auto& d : header.at("shape")) elems *= d.get<std::size_t>();
    const bool rgb = header.value("format", "") == "rgb8";
    if (payload != elems * (rgb ? 1 : 4)) return "payload length";
    if (!rgb && header.value("op", "") == "denoise" && !header.contains("request_id")) return "request_id";
    return {};
}

}  // namespace oracle
