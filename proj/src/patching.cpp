#include "progfuse/patching.hpp"

#include <algorithm>
#include <string>

#include "progfuse/errors.hpp"

namespace progfuse {

namespace {

std::vector<int> axis_positions(int extent, int patch, int stride) {
    std::vector<int> out;
    const int last = extent - patch;
    for (int p = 0;; p += stride) {
        if (p >= last) {
            out.push_back(last);
            break;
        }
        out.push_back(p);
    }
    return out;
}

}  // namespace

DilationSet::DilationSet(int s) : dilation(s) {
    if (s < 1) {
        throw InvalidArgument("dilation factor must be >= 1, got " + std::to_string(s));
    }
}

CropSet plan_crops(int H, int W, int h, int w, int stride_h, int stride_w) {
    if (h <= 0 || w <= 0 || H <= 0 || W <= 0) {
        throw InvalidArgument("plan_crops: dimensions must be positive");
    }
    if (h > H || w > W) {
        throw InvalidArgument("plan_crops: patch " + std::to_string(h) + "x" + std::to_string(w) +
                              " larger than canvas " + std::to_string(H) + "x" + std::to_string(W));
    }
    if (stride_h <= 0 || stride_w <= 0) {
        throw InvalidArgument("plan_crops: strides must be positive");
    }
    CropSet set;
    set.canvas_h = H;
    set.canvas_w = W;
    set.patch_h = h;
    set.patch_w = w;
    set.stride_h = stride_h;
    set.stride_w = stride_w;
    set.jitter_max_h = h / 16;
    set.jitter_max_w = w / 16;
    const auto tops = axis_positions(H, h, stride_h);
    const auto lefts = axis_positions(W, w, stride_w);
    set.crops.reserve(tops.size() * lefts.size());
    for (int top : tops) {
        for (int left : lefts) {
            set.crops.push_back({top, left});
        }
    }
    return set;
}

CropSet jitter_crops(const CropSet& crops, RngStream& rng) {
    CropSet out = crops;
    const int max_top = crops.canvas_h - crops.patch_h;
    const int max_left = crops.canvas_w - crops.patch_w;
    for (auto& pos : out.crops) {
        const int dy = static_cast<int>(rng.uniform_int(-crops.jitter_max_h, crops.jitter_max_h));
        const int dx = static_cast<int>(rng.uniform_int(-crops.jitter_max_w, crops.jitter_max_w));
        if (pos.top != 0 && pos.top != max_top) {
            pos.top = std::clamp(pos.top + dy, 0, max_top);
        }
        if (pos.left != 0 && pos.left != max_left) {
            pos.left = std::clamp(pos.left + dx, 0, max_left);
        }
    }
    return out;
}

Latent extract_crop(const Latent& z, CropPosition pos, int h, int w) {
    if (pos.top < 0 || pos.left < 0 || h <= 0 || w <= 0 || pos.top + h > z.height() || pos.left + w > z.width()) {
        throw InvalidArgument("extract_crop: crop (" + std::to_string(pos.top) + "," + std::to_string(pos.left) +
                              ") of " + std::to_string(h) + "x" + std::to_string(w) + " out of bounds for " +
                              z.shape().str());
    }
    Latent out(z.channels(), h, w);
    for (int c = 0; c < z.channels(); ++c) {
        for (int y = 0; y < h; ++y) {
            const float* src = &z.data()[(static_cast<std::size_t>(c) * z.height() + pos.top + y) * z.width() + pos.left];
            std::copy(src, src + w, &out.at(c, y, 0));
        }
    }
    return out;
}

std::vector<Latent> extract_crops(const Latent& z, const CropSet& crops) {
    std::vector<Latent> out;
    out.reserve(crops.size());
    for (const auto& pos : crops.crops) {
        out.push_back(extract_crop(z, pos, crops.patch_h, crops.patch_w));
    }
    return out;
}

LocalAccumulator::LocalAccumulator(int channels, int H, int W)
    : m_channels(channels),
      m_height(H),
      m_width(W),
      m_sum(static_cast<std::size_t>(channels) * H * W, 0.0),
      m_count(static_cast<std::size_t>(H) * W, 0) {
    if (channels <= 0 || H <= 0 || W <= 0) {
        throw InvalidArgument("LocalAccumulator: dimensions must be positive");
    }
}

void LocalAccumulator::add(const Latent& patch, CropPosition pos) {
    if (patch.channels() != m_channels || pos.top < 0 || pos.left < 0 || pos.top + patch.height() > m_height ||
        pos.left + patch.width() > m_width) {
        throw InvalidArgument("reconstruct_local: patch " + patch.shape().str() + " at (" + std::to_string(pos.top) +
                              "," + std::to_string(pos.left) + ") does not fit canvas");
    }
    const std::size_t plane = static_cast<std::size_t>(m_height) * m_width;
    for (int y = 0; y < patch.height(); ++y) {
        const std::size_t row = static_cast<std::size_t>(pos.top + y) * m_width + pos.left;
        for (int x = 0; x < patch.width(); ++x) {
            ++m_count[row + x];
        }
        for (int c = 0; c < m_channels; ++c) {
            double* dst = &m_sum[c * plane + row];
            for (int x = 0; x < patch.width(); ++x) {
                dst[x] += patch.at(c, y, x);
            }
        }
    }
}

Latent LocalAccumulator::finish() const {
    Latent out(m_channels, m_height, m_width);
    const std::size_t plane = static_cast<std::size_t>(m_height) * m_width;
    for (std::size_t i = 0; i < plane; ++i) {
        if (m_count[i] == 0) {
            throw CoverageViolation("reconstruct_local: cell (" + std::to_string(i / m_width) + "," +
                                    std::to_string(i % m_width) + ") is not covered by any crop");
        }
    }
    auto o = out.data();
    for (int c = 0; c < m_channels; ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
            o[c * plane + i] = static_cast<float>(m_sum[c * plane + i] / m_count[i]);
        }
    }
    return out;
}

Latent reconstruct_local(const std::vector<Latent>& patches, const CropSet& crops, int H, int W) {
    if (patches.size() != crops.size()) {
        throw InvalidArgument("reconstruct_local: " + std::to_string(patches.size()) + " patches for " +
                              std::to_string(crops.size()) + " crops");
    }
    if (patches.empty()) {
        throw CoverageViolation("reconstruct_local: no patches");
    }
    LocalAccumulator acc(patches.front().channels(), H, W);
    for (std::size_t i = 0; i < patches.size(); ++i) {
        if (patches[i].height() != crops.patch_h || patches[i].width() != crops.patch_w) {
            throw InvalidArgument("reconstruct_local: patch " + std::to_string(i) + " has shape " +
                                  patches[i].shape().str() + ", plan expects " + std::to_string(crops.patch_h) +
                                  "x" + std::to_string(crops.patch_w));
        }
        acc.add(patches[i], crops.crops[i]);
    }
    return acc.finish();
}

Latent dilated_sample_one(const Latent& z, const DilationSet& dil, int m) {
    const int s = dil.dilation;
    if (z.height() % s != 0 || z.width() % s != 0) {
        throw InvalidArgument("dilated_sample: " + z.shape().str() + " not divisible by dilation " +
                              std::to_string(s));
    }
    if (m < 0 || m >= dil.count()) {
        throw InvalidArgument("dilated_sample: view index out of range");
    }
    const auto off = dil.offset(m);
    const int h = z.height() / s;
    const int w = z.width() / s;
    Latent out(z.channels(), h, w);
    for (int c = 0; c < z.channels(); ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                out.at(c, y, x) = z.at(c, off.top + y * s, off.left + x * s);
            }
        }
    }
    return out;
}

std::vector<Latent> dilated_sample(const Latent& z, const DilationSet& dil) {
    std::vector<Latent> out;
    out.reserve(dil.count());
    for (int m = 0; m < dil.count(); ++m) {
        out.push_back(dilated_sample_one(z, dil, m));
    }
    return out;
}

void dilated_scatter(Latent& canvas, const Latent& sample, const DilationSet& dil, int m) {
    const int s = dil.dilation;
    if (m < 0 || m >= dil.count()) {
        throw InvalidArgument("dilated_reconstruct: view index out of range");
    }
    if (sample.channels() != canvas.channels() || sample.height() * s != canvas.height() ||
        sample.width() * s != canvas.width()) {
        throw InvalidArgument("dilated_reconstruct: sample " + sample.shape().str() + " does not match canvas " +
                              canvas.shape().str() + " at dilation " + std::to_string(s));
    }
    const auto off = dil.offset(m);
    for (int c = 0; c < sample.channels(); ++c) {
        for (int y = 0; y < sample.height(); ++y) {
            for (int x = 0; x < sample.width(); ++x) {
                canvas.at(c, off.top + y * s, off.left + x * s) = sample.at(c, y, x);
            }
        }
    }
}

Latent dilated_reconstruct(const std::vector<Latent>& samples, const DilationSet& dil, int H, int W) {
    if (static_cast<int>(samples.size()) != dil.count()) {
        throw InvalidArgument("dilated_reconstruct: expected " + std::to_string(dil.count()) + " samples, got " +
                              std::to_string(samples.size()));
    }
    if (H % dil.dilation != 0 || W % dil.dilation != 0) {
        throw InvalidArgument("dilated_reconstruct: canvas not divisible by dilation");
    }
    Latent canvas(samples.front().channels(), H, W);
    for (int m = 0; m < dil.count(); ++m) {
        dilated_scatter(canvas, samples[m], dil, m);
    }
    return canvas;
}

}  // namespace progfuse
