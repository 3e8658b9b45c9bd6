#pragma once

#include <cstdint>
#include <vector>

#include "progfuse/latent.hpp"
#include "progfuse/rng.hpp"

namespace progfuse {

struct CropPosition {
    int top = 0;
    int left = 0;
    bool operator==(const CropPosition&) const = default;
};

/// Overlapping crop grid over an H x W canvas (local sampling geometry).
struct CropSet {
    int canvas_h = 0;
    int canvas_w = 0;
    int patch_h = 0;
    int patch_w = 0;
    int stride_h = 0;
    int stride_w = 0;
    int jitter_max_h = 0;
    int jitter_max_w = 0;
    std::vector<CropPosition> crops;  // row-major, canonical accumulation order

    std::size_t size() const noexcept { return crops.size(); }
};

/// The s*s interleaved views of dilated sampling (global sampling geometry).
struct DilationSet {
    int dilation = 1;

    explicit DilationSet(int s);
    int count() const noexcept { return dilation * dilation; }
    // Offset (row, col) of view m, row-major over offsets.
    CropPosition offset(int m) const noexcept { return {m / dilation, m % dilation}; }
};

// Row-major grid at the given strides; the last row/column is clamped to
// H - h / W - w so the union always covers the canvas. Jitter bounds default
// to floor(h/16), floor(w/16).
CropSet plan_crops(int H, int W, int h, int w, int stride_h, int stride_w);

// Perturbs each crop by independent uniform integer offsets in
// [-jitter_max, +jitter_max], two draws per crop in crop order, then clamps
// into the canvas. A coordinate that sits on the canvas border in the
// unjittered plan stays on that border so coverage is preserved.
CropSet jitter_crops(const CropSet& crops, RngStream& rng);

std::vector<Latent> extract_crops(const Latent& z, const CropSet& crops);
Latent extract_crop(const Latent& z, CropPosition pos, int h, int w);

/// Streaming overlap-average reconstruction: patches are added one at a time
/// in canonical order into double-precision sum and hit-count canvases.
class LocalAccumulator {
public:
    LocalAccumulator(int channels, int H, int W);

    void add(const Latent& patch, CropPosition pos);
    // sum / count per cell. Throws CoverageViolation if a cell was never hit.
    Latent finish() const;

private:
    int m_channels;
    int m_height;
    int m_width;
    std::vector<double> m_sum;
    std::vector<std::uint32_t> m_count;  // per spatial cell
};

Latent reconstruct_local(const std::vector<Latent>& patches, const CropSet& crops, int H, int W);

std::vector<Latent> dilated_sample(const Latent& z, const DilationSet& dil);
Latent dilated_sample_one(const Latent& z, const DilationSet& dil, int m);

// Writes one view back into its interleaved cells of `canvas`.
void dilated_scatter(Latent& canvas, const Latent& sample, const DilationSet& dil, int m);

Latent dilated_reconstruct(const std::vector<Latent>& samples, const DilationSet& dil, int H, int W);

}  // namespace progfuse
