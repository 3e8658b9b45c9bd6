#pragma once

#include <vector>

#include "progfuse/latent.hpp"
#include "progfuse/rng.hpp"

namespace progfuse {

/// Normalized, symmetric 1-D Gaussian taps, applied separably.
struct GaussianKernel {
    int size = 1;
    double sigma = 1.0;
    std::vector<double> weights{1.0};

    static GaussianKernel make(int size, double sigma);
    // Kernel used for dilation factor s: size 4s - 3.
    static GaussianKernel for_dilation(int dilation, double sigma);
};

// Bicubic resampling (a = -0.5, half-pixel centers, edge replicate), each
// channel independently. Output is not clamped.
Latent upsample_bicubic(const Latent& z, int new_height, int new_width);

// Bicubic convolution weight for a = -0.5.
double cubic_weight(double x);

// Separable blur per channel with replicate padding.
Latent gaussian_filter(const Latent& z, const GaussianKernel& kernel);

// I.i.d. standard normal samples, drawn in row-major channel-plane order.
Latent randn(Shape shape, RngStream& rng);

}  // namespace progfuse
