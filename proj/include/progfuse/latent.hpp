#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace progfuse {

struct Shape {
    int channels = 0;
    int height = 0;
    int width = 0;

    std::size_t size() const noexcept {
        return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
               static_cast<std::size_t>(width);
    }
    std::size_t plane_size() const noexcept {
        return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

/// A channels x height x width grid of float32 values, stored as row-major
/// channel planes. The unit of all algorithmic work in the engine.
class Latent {
public:
    Latent() = default;
    Latent(int channels, int height, int width, float fill = 0.0f);
    explicit Latent(Shape shape, float fill = 0.0f);
    Latent(Shape shape, std::vector<float> data);

    const Shape& shape() const noexcept { return m_shape; }
    int channels() const noexcept { return m_shape.channels; }
    int height() const noexcept { return m_shape.height; }
    int width() const noexcept { return m_shape.width; }
    std::size_t size() const noexcept { return m_data.size(); }
    bool empty() const noexcept { return m_data.empty(); }

    float& at(int c, int y, int x) noexcept { return m_data[index(c, y, x)]; }
    float at(int c, int y, int x) const noexcept { return m_data[index(c, y, x)]; }

    std::span<float> data() noexcept { return m_data; }
    std::span<const float> data() const noexcept { return m_data; }
    std::span<float> plane(int c) noexcept {
        return std::span<float>(m_data).subspan(c * m_shape.plane_size(), m_shape.plane_size());
    }
    std::span<const float> plane(int c) const noexcept {
        return std::span<const float>(m_data).subspan(c * m_shape.plane_size(), m_shape.plane_size());
    }
    const std::vector<float>& values() const noexcept { return m_data; }

    bool all_finite() const noexcept;
    float min_value() const noexcept;
    float max_value() const noexcept;

    bool operator==(const Latent&) const = default;

private:
    std::size_t index(int c, int y, int x) const noexcept {
        return (static_cast<std::size_t>(c) * m_shape.height + static_cast<std::size_t>(y)) * m_shape.width +
               static_cast<std::size_t>(x);
    }

    Shape m_shape;
    std::vector<float> m_data;
};

// Largest elementwise |a - b|. Shapes must match.
double max_abs_diff(const Latent& a, const Latent& b);

// Throws InvalidArgument naming `what` when the shapes differ.
void require_same_shape(const Latent& a, const Latent& b, const char* what);

}  // namespace progfuse
