#include "progfuse/ops.hpp"

#include <algorithm>
#include <cmath>

#include "progfuse/errors.hpp"

namespace progfuse {

namespace {

constexpr double kCubicA = -0.5;

struct Taps {
    int index[4];
    double weight[4];
};

// Source taps for each destination coordinate along one axis.
std::vector<Taps> bicubic_taps(int src_len, int dst_len) {
    std::vector<Taps> taps(dst_len);
    const double scale = static_cast<double>(src_len) / static_cast<double>(dst_len);
    for (int d = 0; d < dst_len; ++d) {
        const double src = (d + 0.5) * scale - 0.5;
        const double base = std::floor(src);
        const double frac = src - base;
        for (int k = 0; k < 4; ++k) {
            const int idx = static_cast<int>(base) - 1 + k;
            taps[d].index[k] = std::clamp(idx, 0, src_len - 1);
            taps[d].weight[k] = cubic_weight(frac - (k - 1));
        }
    }
    return taps;
}

}  // namespace

double cubic_weight(double x) {
    x = std::abs(x);
    if (x <= 1.0) {
        return ((kCubicA + 2.0) * x - (kCubicA + 3.0)) * x * x + 1.0;
    }
    if (x < 2.0) {
        return ((kCubicA * x - 5.0 * kCubicA) * x + 8.0 * kCubicA) * x - 4.0 * kCubicA;
    }
    return 0.0;
}

GaussianKernel GaussianKernel::make(int size, double sigma) {
    if (size <= 0 || size % 2 == 0) {
        throw InvalidArgument("gaussian kernel size must be odd and positive, got " + std::to_string(size));
    }
    if (!(sigma > 0.0)) {
        throw InvalidArgument("gaussian kernel sigma must be positive");
    }
    GaussianKernel k;
    k.size = size;
    k.sigma = sigma;
    k.weights.assign(size, 0.0);
    const int half = size / 2;
    double total = 0.0;
    for (int i = 0; i < size; ++i) {
        const double x = i - half;
        k.weights[i] = std::exp(-(x * x) / (2.0 * sigma * sigma));
        total += k.weights[i];
    }
    for (double& w : k.weights) {
        w /= total;
    }
    // exp() is even but the normalizing division can leave the halves a ulp apart.
    for (int i = 0; i < half; ++i) {
        k.weights[size - 1 - i] = k.weights[i];
    }
    return k;
}

GaussianKernel GaussianKernel::for_dilation(int dilation, double sigma) {
    if (dilation < 1) {
        throw InvalidArgument("dilation factor must be >= 1");
    }
    return make(4 * dilation - 3, sigma);
}

Latent upsample_bicubic(const Latent& z, int new_height, int new_width) {
    if (new_height <= 0 || new_width <= 0) {
        throw InvalidArgument("upsample_bicubic: target dimensions must be positive");
    }
    if (new_height < z.height() || new_width < z.width()) {
        throw InvalidArgument("upsample_bicubic: target " + std::to_string(new_height) + "x" +
                              std::to_string(new_width) + " is smaller than source " + z.shape().str());
    }
    if (new_height == z.height() && new_width == z.width()) {
        return z;
    }

    const auto row_taps = bicubic_taps(z.height(), new_height);
    const auto col_taps = bicubic_taps(z.width(), new_width);
    Latent out(z.channels(), new_height, new_width);
    // Horizontal pass into a double buffer, then vertical.
    std::vector<double> tmp(static_cast<std::size_t>(z.height()) * new_width);
    for (int c = 0; c < z.channels(); ++c) {
        for (int y = 0; y < z.height(); ++y) {
            for (int x = 0; x < new_width; ++x) {
                const Taps& t = col_taps[x];
                double acc = 0.0;
                for (int k = 0; k < 4; ++k) {
                    acc += t.weight[k] * z.at(c, y, t.index[k]);
                }
                tmp[static_cast<std::size_t>(y) * new_width + x] = acc;
            }
        }
        for (int y = 0; y < new_height; ++y) {
            const Taps& t = row_taps[y];
            for (int x = 0; x < new_width; ++x) {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k) {
                    acc += t.weight[k] * tmp[static_cast<std::size_t>(t.index[k]) * new_width + x];
                }
                out.at(c, y, x) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

Latent gaussian_filter(const Latent& z, const GaussianKernel& kernel) {
    if (kernel.size <= 0 || kernel.size % 2 == 0 || static_cast<int>(kernel.weights.size()) != kernel.size) {
        throw InvalidArgument("gaussian_filter: kernel size must be odd, got " + std::to_string(kernel.size));
    }
    if (kernel.size == 1) {
        return z;
    }
    const int half = kernel.size / 2;
    const int h = z.height();
    const int w = z.width();
    Latent out(z.shape());
    std::vector<double> tmp(static_cast<std::size_t>(h) * w);
    for (int c = 0; c < z.channels(); ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int k = 0; k < kernel.size; ++k) {
                    const int sx = std::clamp(x + k - half, 0, w - 1);
                    acc += kernel.weights[k] * z.at(c, y, sx);
                }
                tmp[static_cast<std::size_t>(y) * w + x] = acc;
            }
        }
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int k = 0; k < kernel.size; ++k) {
                    const int sy = std::clamp(y + k - half, 0, h - 1);
                    acc += kernel.weights[k] * tmp[static_cast<std::size_t>(sy) * w + x];
                }
                out.at(c, y, x) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

Latent randn(Shape shape, RngStream& rng) {
    Latent out(shape);
    for (float& v : out.data()) {
        v = static_cast<float>(rng.normal());
    }
    return out;
}

}  // namespace progfuse
