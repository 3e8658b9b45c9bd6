#include "progfuse/latent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "progfuse/errors.hpp"

namespace progfuse {

std::string Shape::str() const {
    return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
}

Latent::Latent(int channels, int height, int width, float fill) : Latent(Shape{channels, height, width}, fill) {}

Latent::Latent(Shape shape, float fill) : m_shape(shape) {
    if (shape.channels <= 0 || shape.height <= 0 || shape.width <= 0) {
        throw InvalidArgument("latent dimensions must be positive, got " + shape.str());
    }
    m_data.assign(shape.size(), fill);
}

Latent::Latent(Shape shape, std::vector<float> data) : m_shape(shape), m_data(std::move(data)) {
    if (shape.channels <= 0 || shape.height <= 0 || shape.width <= 0) {
        throw InvalidArgument("latent dimensions must be positive, got " + shape.str());
    }
    if (m_data.size() != shape.size()) {
        throw InvalidArgument("latent data length " + std::to_string(m_data.size()) + " does not match shape " +
                              shape.str());
    }
}

bool Latent::all_finite() const noexcept {
    return std::all_of(m_data.begin(), m_data.end(), [](float v) { return std::isfinite(v); });
}

float Latent::min_value() const noexcept {
    return m_data.empty() ? std::numeric_limits<float>::quiet_NaN() : *std::min_element(m_data.begin(), m_data.end());
}

float Latent::max_value() const noexcept {
    return m_data.empty() ? std::numeric_limits<float>::quiet_NaN() : *std::max_element(m_data.begin(), m_data.end());
}

double max_abs_diff(const Latent& a, const Latent& b) {
    require_same_shape(a, b, "max_abs_diff");
    double worst = 0.0;
    auto da = a.data();
    auto db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i) {
        worst = std::max(worst, std::abs(static_cast<double>(da[i]) - static_cast<double>(db[i])));
    }
    return worst;
}

void require_same_shape(const Latent& a, const Latent& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw InvalidArgument(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    }
}

}  // namespace progfuse
