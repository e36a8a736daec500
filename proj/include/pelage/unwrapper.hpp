#pragma once
// Canonical texture synthesis: triangulate the solved UV samples and fill
// each texel by barycentric blending of its containing triangle's colours.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "pelage/delaunay.hpp"
#include "pelage/field.hpp"

namespace pelage::unwrap {

struct UVSample {
    Vec2 uv;
    Rgb8 color;
    Vec2 source;  // pixel in the original image
};

using UVSampleSet = std::vector<UVSample>;

struct TriangleMesh {
    std::vector<delaunay::Triangle> triangles;  // indices into the sample set
    std::vector<unsigned char> accepted;

    [[nodiscard]] std::size_t accepted_count() const noexcept {
        return static_cast<std::size_t>(std::count(accepted.begin(), accepted.end(), 1));
    }
};

/// Maps UV to texel coordinates: texel = (uv - origin) * scale.
struct TexelMapping {
    Vec2 origin;
    double scale = 1.0;

    [[nodiscard]] Vec2 to_texel(Vec2 uv) const { return {(uv.x - origin.x) * scale, (uv.y - origin.y) * scale}; }
};

struct UnwrappedTexture {
    int width = 0;
    int height = 0;
    std::vector<Rgb8> pixels;
    std::vector<unsigned char> coverage;
    TexelMapping mapping;

    [[nodiscard]] std::size_t covered() const noexcept {
        return static_cast<std::size_t>(std::count(coverage.begin(), coverage.end(), 1));
    }
    [[nodiscard]] RgbaImage to_rgba() const {
        RgbaImage out(width, height);
        for (std::size_t i = 0; i < pixels.size(); ++i)
            if (coverage[i]) out.pixels[i] = {pixels[i].r, pixels[i].g, pixels[i].b, 255};
        return out;
    }
};

inline constexpr Rgb8 kUncoveredColor{0, 0, 0};
inline constexpr double kMinTriangleArea = 1e-12;

/// One sample per valid UV pixel on the stride grid.
[[nodiscard]] inline UVSampleSet build_samples(const RgbImage& image, const UVField& uv, int stride = 1) {
    if (image.width != uv.width || image.height != uv.height)
        throw Error("build_samples: image and UV field sizes differ");
    if (stride < 1) throw Error("build_samples: stride must be >= 1");
    UVSampleSet out;
    for (int y = 0; y < uv.height; y += stride)
        for (int x = 0; x < uv.width; x += stride)
            if (uv.is_valid(x, y))
                out.push_back({uv.at(x, y), image.at(x, y), {double(x), double(y)}});
    if (out.size() < 3) throw Error("insufficient samples");
    return out;
}

[[nodiscard]] inline double triangle_area(Vec2 a, Vec2 b, Vec2 c) {
    return 0.5 * ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x));
}

[[nodiscard]] inline TriangleMesh delaunay(const UVSampleSet& samples) {
    if (samples.size() < 3) throw Error("insufficient samples");
    std::vector<Vec2> pts;
    pts.reserve(samples.size());
    for (const auto& s : samples) {
        if (!std::isfinite(s.uv.x) || !std::isfinite(s.uv.y)) throw Error("delaunay: non-finite UV");
        pts.push_back(s.uv);
    }
    TriangleMesh mesh;
    mesh.triangles = delaunay::triangulate(pts);
    mesh.accepted.resize(mesh.triangles.size());
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        mesh.accepted[t] = triangle_area(pts[tri[0]], pts[tri[1]], pts[tri[2]]) > kMinTriangleArea;
    }
    return mesh;
}

struct FilterThresholds {
    double max_edge_uv = 8.0;
    double max_source_edge_px = 8.0;
};

/// Rejects triangles bridging folds or occlusions: any UV edge or source-pixel
/// edge longer than its threshold.
[[nodiscard]] inline TriangleMesh filter_triangles(TriangleMesh mesh, const UVSampleSet& samples,
                                                   FilterThresholds limits = {}) {
    auto dist = [](Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); };
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        if (!mesh.accepted[t]) continue;
        const auto& tri = mesh.triangles[t];
        for (int k = 0; k < 3; ++k) {
            const UVSample& a = samples[tri[k]];
            const UVSample& b = samples[tri[(k + 1) % 3]];
            if (dist(a.uv, b.uv) > limits.max_edge_uv ||
                dist(a.source, b.source) > limits.max_source_edge_px) {
                mesh.accepted[t] = 0;
                break;
            }
        }
    }
    return mesh;
}

/// Fits the UV bounding box of accepted vertices into width x height texels,
/// preserving aspect ratio; texel centres sit on integer coordinates.
[[nodiscard]] inline TexelMapping fit_mapping(const TriangleMesh& mesh, const UVSampleSet& samples,
                                              int width, int height) {
    double umin = std::numeric_limits<double>::infinity(), vmin = umin;
    double umax = -umin, vmax = -umin;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        if (!mesh.accepted[t]) continue;
        for (int i : mesh.triangles[t]) {
            umin = std::min(umin, samples[i].uv.x);
            umax = std::max(umax, samples[i].uv.x);
            vmin = std::min(vmin, samples[i].uv.y);
            vmax = std::max(vmax, samples[i].uv.y);
        }
    }
    const double su = umax > umin ? (width - 1) / (umax - umin) : std::numeric_limits<double>::infinity();
    const double sv = vmax > vmin ? (height - 1) / (vmax - vmin) : std::numeric_limits<double>::infinity();
    double scale = std::min(su, sv);
    if (!std::isfinite(scale) || scale <= 0.0) scale = 1.0;
    return {{umin, vmin}, scale};
}

/// Rasterizes accepted triangles under an explicit UV-to-texel mapping. Where
/// triangles overlap (shared edges, folds), the first in mesh order wins.
[[nodiscard]] inline UnwrappedTexture rasterize_with(const TriangleMesh& mesh, const UVSampleSet& samples,
                                                     int width, int height, TexelMapping mapping) {
    if (width < 1 || height < 1) throw Error("rasterize: output size must be positive");
    UnwrappedTexture tex{width, height,
                         std::vector<Rgb8>(static_cast<std::size_t>(width) * height, kUncoveredColor),
                         std::vector<unsigned char>(static_cast<std::size_t>(width) * height, 0), mapping};
    constexpr double tol = 1e-9;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        if (!mesh.accepted[t]) continue;
        const auto& tri = mesh.triangles[t];
        std::array<Vec2, 3> p;
        for (int k = 0; k < 3; ++k) p[k] = mapping.to_texel(samples[tri[k]].uv);
        const double area2 = (p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[1].y - p[0].y) * (p[2].x - p[0].x);
        if (std::abs(area2) <= 0.0) continue;
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min({p[0].x, p[1].x, p[2].x}) - tol)));
        const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max({p[0].x, p[1].x, p[2].x}) + tol)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min({p[0].y, p[1].y, p[2].y}) - tol)));
        const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max({p[0].y, p[1].y, p[2].y}) + tol)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const std::size_t idx = static_cast<std::size_t>(y) * width + x;
                if (tex.coverage[idx]) continue;
                std::array<double, 3> w;
                for (int k = 0; k < 3; ++k) {
                    const Vec2& a = p[(k + 1) % 3];
                    const Vec2& b = p[(k + 2) % 3];
                    w[k] = ((b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x)) / area2;
                }
                if (w[0] < -tol || w[1] < -tol || w[2] < -tol) continue;
                double sum = 0.0;
                for (auto& wk : w) sum += (wk = std::max(wk, 0.0));
                double r = 0.0, g = 0.0, b = 0.0;
                for (int k = 0; k < 3; ++k) {
                    const Rgb8& c = samples[tri[k]].color;
                    r += w[k] / sum * c.r;
                    g += w[k] / sum * c.g;
                    b += w[k] / sum * c.b;
                }
                auto q = [](double v) {
                    return static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L));
                };
                tex.pixels[idx] = {q(r), q(g), q(b)};
                tex.coverage[idx] = 1;
            }
        }
    }
    return tex;
}

[[nodiscard]] inline UnwrappedTexture rasterize(const TriangleMesh& mesh, const UVSampleSet& samples,
                                                int width, int height) {
    if (mesh.accepted_count() == 0) throw Error("rasterize: no accepted triangles");
    return rasterize_with(mesh, samples, width, height, fit_mapping(mesh, samples, width, height));
}

/// Output size at one texel per UV unit (UV is in source-pixel units).
[[nodiscard]] inline std::array<int, 2> natural_size(const UVSampleSet& samples) {
    double umin = std::numeric_limits<double>::infinity(), vmin = umin, umax = -umin, vmax = -umin;
    for (const auto& s : samples) {
        umin = std::min(umin, s.uv.x);
        umax = std::max(umax, s.uv.x);
        vmin = std::min(vmin, s.uv.y);
        vmax = std::max(vmax, s.uv.y);
    }
    return {static_cast<int>(std::ceil(umax - umin)) + 1, static_cast<int>(std::ceil(vmax - vmin)) + 1};
}

struct UnwrapOptions {
    int stride = 1;
    FilterThresholds filter;
    int width = 0;  // both 0: one texel per UV unit
    int height = 0;
};

/// build_samples -> delaunay -> filter_triangles -> rasterize.
[[nodiscard]] inline UnwrappedTexture unwrap_image(const RgbImage& image, const UVField& uv,
                                                   const UnwrapOptions& opts = {}) {
    const auto samples = build_samples(image, uv, opts.stride);
    const auto mesh = filter_triangles(delaunay(samples), samples, opts.filter);
    if (opts.width > 0 && opts.height > 0) return rasterize(mesh, samples, opts.width, opts.height);
    if (mesh.accepted_count() == 0) throw Error("rasterize: no accepted triangles");
    const auto size = natural_size(samples);
    TexelMapping mapping = fit_mapping(mesh, samples, size[0], size[1]);
    mapping.scale = 1.0;
    return rasterize_with(mesh, samples, size[0], size[1], mapping);
}

}  // namespace pelage::unwrap
