#pragma once
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace pelage {

/// Base error for every failure raised by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Row-major per-pixel field with a validity mask.
template <typename Value>
struct Field {
    int width = 0;
    int height = 0;
    std::vector<Value> values;
    std::vector<unsigned char> valid;  // 1 = valid

    Field() = default;
    Field(int w, int h, const Value& fill = Value{}, bool all_valid = false)
        : width(w), height(h),
          values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill),
          valid(values.size(), all_valid ? 1 : 0) {
        if (w < 0 || h < 0) throw Error("negative field dimensions");
    }

    [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
    [[nodiscard]] std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
               static_cast<std::size_t>(x);
    }
    [[nodiscard]] bool in_bounds(int x, int y) const noexcept {
        return x >= 0 && y >= 0 && x < width && y < height;
    }
    [[nodiscard]] bool is_valid(int x, int y) const noexcept {
        return in_bounds(x, y) && valid[index(x, y)] != 0;
    }
    Value& at(int x, int y) { return values[index(x, y)]; }
    const Value& at(int x, int y) const { return values[index(x, y)]; }

    [[nodiscard]] std::size_t valid_count() const noexcept {
        std::size_t n = 0;
        for (auto v : valid) n += v != 0;
        return n;
    }

    template <typename Other>
    [[nodiscard]] bool same_shape(const Field<Other>& o) const noexcept {
        return width == o.width && height == o.height;
    }
};

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Vec2&) const = default;
};

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    bool operator==(const Vec3&) const = default;
};

/// Symmetric 2x2 tensor [[g11, g12], [g12, g22]].
struct Metric2 {
    double g11 = 1.0;
    double g12 = 0.0;
    double g22 = 1.0;

    [[nodiscard]] double det() const noexcept { return g11 * g22 - g12 * g12; }
    bool operator==(const Metric2&) const = default;
};

struct Rgb8 {
    unsigned char r = 0, g = 0, b = 0;
    bool operator==(const Rgb8&) const = default;
};

struct Rgba8 {
    unsigned char r = 0, g = 0, b = 0, a = 0;
    bool operator==(const Rgba8&) const = default;
};

using NormalField = Field<Vec3>;
using GradientField = Field<Vec2>;  // (p, q) = (dz/dx, dz/dy)
using MetricField = Field<Metric2>;
using UVField = Field<Vec2>;
using MaskField = Field<unsigned char>;  // value unused, validity = foreground

/// Plain raster image without validity semantics.
template <typename Pixel>
struct Image {
    int width = 0;
    int height = 0;
    std::vector<Pixel> pixels;

    Image() = default;
    Image(int w, int h, const Pixel& fill = Pixel{})
        : width(w), height(h),
          pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

    Pixel& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    const Pixel& at(int x, int y) const {
        return pixels[static_cast<std::size_t>(y) * width + x];
    }
};

using RgbImage = Image<Rgb8>;
using RgbaImage = Image<Rgba8>;

}  // namespace pelage
