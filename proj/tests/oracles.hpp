#pragma once

// Independent reference computations used only by the tests. Nothing here
// calls the engine routine it is used to check.

#include <cstdint>
#include <vector>

#include "progfuse/backend.hpp"
#include "progfuse/latent.hpp"
#include "progfuse/patching.hpp"
#include "progfuse/pipeline.hpp"
#include "progfuse/schedule.hpp"

namespace oracle {

using progfuse::Latent;

// Keys cubic, a = -0.5, written in expanded piecewise form.
double keys_cubic(double x);

// Direct evaluation of the bicubic convolution sum over every source index
// (out-of-range indices replicate the edge), half-pixel centers.
Latent bicubic_bruteforce(const Latent& z, int H, int W);

// Full 2-D convolution with the outer-product kernel, replicate padding.
Latent conv2d_direct(const Latent& z, const std::vector<double>& taps);

// alpha_bar_t = prod_{i<=t} (1 - beta_i), recomputed term by term.
std::vector<double> alpha_bar_product(const std::vector<double>& betas_1_based);

// Per-cell mean over every patch that covers the cell.
Latent covering_mean(const std::vector<Latent>& patches, const std::vector<progfuse::CropPosition>& crops, int H,
                     int W);

// Number of crops by scanning every candidate top-left corner.
std::size_t enumerate_crop_count(int H, int W, int h, int w, int dh, int dw);
// Number of dilated views by scanning offsets that start a full view.
std::size_t enumerate_dilated_count(int H, int W, int s);

struct ReferenceRun {
    Latent phase1;
    std::vector<Latent> steps;  // canvas after each step of the last phase
    Latent final;
};

// Plain MultiDiffusion, straight-line: phase-1 sampling, one bicubic jump to
// S x base, forward diffusion, then per step every crop is denoised alone
// (batch of one) and the stepped crops are averaged. Uses the engine's
// documented RNG substreams and crop-jitter rule.
ReferenceRun reference_multidiffusion(progfuse::Denoiser& backend, const progfuse::PipelineConfig& config, int S);

// Scalar recurrence for phase 1 with a zero denoiser: z <- z * sqrt(abar_prev / abar_t).
Latent zero_denoiser_chain(const Latent& z_T, const progfuse::NoiseSchedule& schedule);

// Frame validator written against the protocol text, independent of the
// engine's validate_frame. Returns an empty string when valid.
std::string check_frame(const std::vector<std::uint8_t>& bytes);

}  // namespace oracle
