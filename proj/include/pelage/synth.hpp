#pragma once
// Synthetic developable-surface scenes with exact isometric ground truth.
//
// A scene is a textured surface viewed orthographically along -z. The pattern
// lives in the canonical (u, v) plane; each pixel shows the pattern at its
// ground-truth UV, so unwrapping with the true map recovers the pattern
// undistorted.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "pelage/field.hpp"
#include "pelage/geometry.hpp"

namespace pelage::synth {

enum class SurfaceKind { flat, cylinder, sine_sheet };
enum class PatternKind { checkerboard, dot_grid, random_dots };

struct Dot {
    Vec2 center;
    double radius = 1.0;
};

struct Pattern {
    PatternKind kind = PatternKind::checkerboard;
    double cell = 8.0;        // checkerboard cell size (UV units)
    double pitch = 8.0;       // dot grid spacing
    double dot_radius = 2.0;  // dot grid radius
    std::vector<Dot> dots;    // random_dots
    Rgb8 light{232, 232, 232};
    Rgb8 dark{24, 24, 24};

    [[nodiscard]] static Pattern checkerboard(double cell) {
        Pattern p;
        p.cell = cell;
        return p;
    }
    [[nodiscard]] static Pattern dot_grid(double pitch, double radius) {
        Pattern p;
        p.kind = PatternKind::dot_grid;
        p.pitch = pitch;
        p.dot_radius = radius;
        p.light = {196, 170, 128};
        p.dark = {48, 36, 30};
        return p;
    }
    /// Seeded random spots covering [origin, origin + extent].
    [[nodiscard]] static Pattern random_dots(std::uint64_t seed, Vec2 origin, Vec2 extent,
                                             double density = 0.011, double rmin = 2.0,
                                             double rmax = 4.0) {
        Pattern p;
        p.kind = PatternKind::random_dots;
        p.light = {196, 170, 128};
        p.dark = {48, 36, 30};
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> ux(origin.x, origin.x + extent.x);
        std::uniform_real_distribution<double> uy(origin.y, origin.y + extent.y);
        std::uniform_real_distribution<double> ur(rmin, rmax);
        const auto count = static_cast<std::size_t>(density * extent.x * extent.y);
        for (std::size_t i = 0; i < count; ++i) {
            const double x = ux(rng), y = uy(rng), r = ur(rng);
            p.dots.push_back({{x, y}, r});
        }
        p.index_dots();
        return p;
    }

    /// True where the pattern is dark at (u, v).
    [[nodiscard]] bool dark_at(double u, double v) const {
        switch (kind) {
            case PatternKind::checkerboard: {
                const auto iu = static_cast<long long>(std::floor(u / cell));
                const auto iv = static_cast<long long>(std::floor(v / cell));
                return ((iu + iv) & 1LL) != 0;
            }
            case PatternKind::dot_grid: {
                const double du = u - pitch * std::round(u / pitch);
                const double dv = v - pitch * std::round(v / pitch);
                return du * du + dv * dv <= dot_radius * dot_radius;
            }
            case PatternKind::random_dots: {
                const long long bx = static_cast<long long>(std::floor(u / bucket_));
                const long long by = static_cast<long long>(std::floor(v / bucket_));
                for (long long dy = -1; dy <= 1; ++dy)
                    for (long long dx = -1; dx <= 1; ++dx) {
                        const auto it = buckets_.find(key(bx + dx, by + dy));
                        if (it == buckets_.end()) continue;
                        for (auto i : it->second) {
                            const Dot& d = dots[i];
                            const double eu = u - d.center.x, ev = v - d.center.y;
                            if (eu * eu + ev * ev <= d.radius * d.radius) return true;
                        }
                    }
                return false;
            }
        }
        return false;
    }

    void index_dots() {
        double rmax = 1.0;
        for (const auto& d : dots) rmax = std::max(rmax, d.radius);
        bucket_ = 2.0 * rmax;
        buckets_.clear();
        for (std::size_t i = 0; i < dots.size(); ++i)
            buckets_[key(static_cast<long long>(std::floor(dots[i].center.x / bucket_)),
                         static_cast<long long>(std::floor(dots[i].center.y / bucket_)))]
                .push_back(i);
    }

private:
    static std::uint64_t key(long long x, long long y) {
        return (static_cast<std::uint64_t>(x) << 32) ^ static_cast<std::uint64_t>(y & 0xffffffffLL);
    }
    double bucket_ = 1.0;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets_;
};

struct SurfaceSpec {
    SurfaceKind kind = SurfaceKind::flat;
    int width = 64;
    int height = 64;
    double radius = 0.0;          // cylinder, pixels
    double band_fraction = 0.8;   // cylinder: foreground where |x - axis| < band * radius
    double amplitude = 0.0;       // sine sheet, pixels
    double wavelength = 32.0;     // sine sheet, pixels
    double phase = 0.0;           // sine: wave phase; cylinder: rotation about the axis (radians)
    Vec2 pattern_offset;          // canonical-plane shift of the visible window
    Pattern pattern = Pattern::checkerboard(8.0);
    std::string identity_id;
    std::uint64_t pose_seed = 0;
    double tau = geometry::kDefaultTau;
    int supersample = 4;

    void validate() const {
        if (width < 1 || height < 1) throw Error("scene size must be positive");
        if (supersample < 1) throw Error("supersample must be >= 1");
        const double half = 0.5 * width;
        switch (kind) {
            case SurfaceKind::flat: break;
            case SurfaceKind::cylinder:
                if (!(radius > 0.5 * half)) throw Error("cylinder radius must exceed half the image half-width");
                if (!(band_fraction > 0.0 && band_fraction < 1.0))
                    throw Error("cylinder band fraction must lie in (0, 1)");
                break;
            case SurfaceKind::sine_sheet:
                if (!(wavelength > 0.0)) throw Error("sine wavelength must be positive");
                if (!(amplitude >= 0.0)) throw Error("sine amplitude must be non-negative");
                if (!(2.0 * std::numbers::pi * amplitude / wavelength < tau))
                    throw Error("sine sheet slope exceeds the clipping bound");
                break;
        }
    }
};

struct SyntheticScene {
    RgbImage image;
    NormalField normals;
    MaskField mask;
    UVField gt_uv;
    SurfaceSpec spec;
};

inline constexpr Rgb8 kSceneBackground{110, 110, 110};

namespace detail {

/// Horizontal profile of a surface that is constant along y.
class Profile {
public:
    explicit Profile(const SurfaceSpec& s) : s_(s), axis_(0.5 * (s.width - 1)) {
        if (s.kind == SurfaceKind::sine_sheet && s.amplitude > 0.0) build_arclength();
    }

    [[nodiscard]] double axis() const { return axis_; }

    [[nodiscard]] bool foreground(double x) const {
        if (s_.kind != SurfaceKind::cylinder) return true;
        return std::abs(x - axis_) < s_.band_fraction * s_.radius;
    }

    [[nodiscard]] Vec3 normal(double x) const {
        const double X = x - axis_;
        switch (s_.kind) {
            case SurfaceKind::cylinder:
                return {X / s_.radius, 0.0, std::sqrt(s_.radius * s_.radius - X * X) / s_.radius};
            case SurfaceKind::sine_sheet: {
                if (s_.amplitude == 0.0) break;
                const double zp = slope(X);
                const double norm = std::sqrt(1.0 + zp * zp);
                return {-zp / norm, 0.0, 1.0 / norm};
            }
            case SurfaceKind::flat: break;
        }
        return {0.0, 0.0, 1.0};
    }

    /// Canonical u of image column x (before pattern offset).
    [[nodiscard]] double u(double x) const {
        const double X = x - axis_;
        switch (s_.kind) {
            case SurfaceKind::cylinder: {
                const double s = std::clamp(X / s_.radius, -1.0, 1.0);
                return axis_ + s_.radius * (std::asin(s) + s_.phase);
            }
            case SurfaceKind::sine_sheet:
                if (s_.amplitude == 0.0) break;
                return axis_ + arclength(X);
            case SurfaceKind::flat: break;
        }
        return x;
    }

private:
    [[nodiscard]] double slope(double X) const {
        const double k = 2.0 * std::numbers::pi / s_.wavelength;
        return s_.amplitude * k * std::cos(k * X + s_.phase);
    }

    static constexpr double kStep = 1.0 / 64.0;

    // Trapezoid-accumulated arc length of z(X) from X = 0, tabulated on kStep.
    void build_arclength() {
        lo_ = -axis_ - 2.0;
        const double hi = s_.width - axis_ + 2.0;
        const auto n = static_cast<std::size_t>(std::ceil((hi - lo_) / kStep)) + 1;
        lo_ = -kStep * std::ceil(-lo_ / kStep);  // X = 0 falls on a node
        table_.assign(n + 2, 0.0);
        const auto zero = static_cast<std::size_t>(std::llround(-lo_ / kStep));
        auto speed = [&](double X) { const double d = slope(X); return std::sqrt(1.0 + d * d); };
        for (std::size_t i = zero + 1; i < table_.size(); ++i) {
            const double a = lo_ + (i - 1) * kStep, b = lo_ + i * kStep;
            table_[i] = table_[i - 1] + 0.5 * kStep * (speed(a) + speed(b));
        }
        for (std::size_t i = zero; i-- > 0;) {
            const double a = lo_ + i * kStep, b = lo_ + (i + 1) * kStep;
            table_[i] = table_[i + 1] - 0.5 * kStep * (speed(a) + speed(b));
        }
    }

    [[nodiscard]] double arclength(double X) const {
        const double t = (X - lo_) / kStep;
        const auto i = static_cast<std::size_t>(std::clamp(std::floor(t), 0.0, double(table_.size() - 2)));
        const double f = t - static_cast<double>(i);
        return table_[i] + f * (table_[i + 1] - table_[i]);
    }

    const SurfaceSpec& s_;
    double axis_;
    double lo_ = 0.0;
    std::vector<double> table_;
};

inline Rgb8 shade(const Pattern& p, double dark_fraction) {
    auto mix = [&](unsigned char l, unsigned char d) {
        return static_cast<unsigned char>(std::lround(l + dark_fraction * (double(d) - double(l))));
    };
    return {mix(p.light.r, p.dark.r), mix(p.light.g, p.dark.g), mix(p.light.b, p.dark.b)};
}

}  // namespace detail

[[nodiscard]] inline SyntheticScene generate_scene(const SurfaceSpec& spec) {
    spec.validate();
    const int w = spec.width, h = spec.height;
    SyntheticScene scene{RgbImage(w, h, kSceneBackground), NormalField(w, h), MaskField(w, h),
                         UVField(w, h), spec};
    const detail::Profile profile(scene.spec);
    const int ss = spec.supersample;
    for (int x = 0; x < w; ++x) {
        if (!profile.foreground(x)) continue;
        const Vec3 n = profile.normal(x);
        const double u = profile.u(x) + spec.pattern_offset.x;
        std::vector<double> sub_u(ss);
        for (int i = 0; i < ss; ++i) {
            double xs = x + (i + 0.5) / ss - 0.5;
            if (!profile.foreground(xs)) xs = x;  // stay on the visible surface
            sub_u[i] = profile.u(xs) + spec.pattern_offset.x;
        }
        for (int y = 0; y < h; ++y) {
            const std::size_t idx = scene.mask.index(x, y);
            scene.mask.valid[idx] = 1;
            scene.mask.values[idx] = 255;
            scene.normals.values[idx] = n;
            scene.normals.valid[idx] = 1;
            scene.gt_uv.values[idx] = {u, y + spec.pattern_offset.y};
            scene.gt_uv.valid[idx] = 1;
            int dark = 0;
            for (int j = 0; j < ss; ++j) {
                const double v = y + (j + 0.5) / ss - 0.5 + spec.pattern_offset.y;
                for (int i = 0; i < ss; ++i) dark += spec.pattern.dark_at(sub_u[i], v);
            }
            scene.image.at(x, y) = detail::shade(spec.pattern, double(dark) / (ss * ss));
        }
    }
    return scene;
}

/// The pattern rendered straight into a UV window (texel (i, j) = origin + (i, j)).
[[nodiscard]] inline RgbImage render_canonical(const Pattern& pattern, Vec2 origin, int width, int height,
                                               int supersample = 4) {
    RgbImage out(width, height);
    const int ss = supersample;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            int dark = 0;
            for (int j = 0; j < ss; ++j)
                for (int i = 0; i < ss; ++i)
                    dark += pattern.dark_at(origin.x + x + (i + 0.5) / ss - 0.5,
                                            origin.y + y + (j + 0.5) / ss - 0.5);
            out.at(x, y) = detail::shade(pattern, double(dark) / (ss * ss));
        }
    return out;
}

/// Segmented view of a scene: background pixels transparent.
[[nodiscard]] inline RgbaImage segmented(const RgbImage& image, const MaskField& mask) {
    RgbaImage out(image.width, image.height);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            if (mask.is_valid(x, y)) {
                const Rgb8& c = image.at(x, y);
                out.at(x, y) = {c.r, c.g, c.b, 255};
            }
    return out;
}

struct ReidScene {
    std::string id;
    std::string identity;
    SyntheticScene scene;
};

/// Per-pose sampling ranges. Cylinder radius is drawn from
/// base.radius * [radius_min, radius_max] (at least 0.3 * width), rotation
/// from [-phase, phase] radians, window shift from [-offset, offset] pixels.
struct PoseVariation {
    double radius_min = 0.8;
    double radius_max = 1.3;
    double phase = 0.3;
    double offset = 6.0;
};

/// `individuals` distinct random-spot patterns, each rendered under
/// `poses_per_individual` seeded deformations of `base`.
[[nodiscard]] inline std::vector<ReidScene> generate_reid_set(int individuals, int poses_per_individual,
                                                              const SurfaceSpec& base, std::uint64_t seed,
                                                              const PoseVariation& variation = {}) {
    if (individuals < 2 || poses_per_individual < 2)
        throw Error("reid set needs at least 2 individuals and 2 poses");
    if (!(variation.radius_min > 0.0 && variation.radius_min <= variation.radius_max) || variation.phase < 0.0 ||
        variation.offset < 0.0)
        throw Error("invalid pose variation ranges");
    std::vector<ReidScene> out;
    const double w = base.width, h = base.height;
    for (int i = 0; i < individuals; ++i) {
        char ident[32];
        std::snprintf(ident, sizeof ident, "ind%02d", i);
        std::seed_seq pattern_seq{seed, std::uint64_t(i), std::uint64_t(0x5157)};
        const std::uint64_t pattern_seed = std::mt19937_64(pattern_seq)();
        // Canonical window wide enough for arc-length growth plus offsets.
        const Pattern pattern = Pattern::random_dots(pattern_seed, {-w, -h}, {4.0 * w, 3.0 * h});
        for (int j = 0; j < poses_per_individual; ++j) {
            std::seed_seq pose_seq{seed, std::uint64_t(i), std::uint64_t(j), std::uint64_t(0x9053)};
            std::mt19937_64 rng(pose_seq);
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            SurfaceSpec spec = base;
            spec.pattern = pattern;
            spec.identity_id = ident;
            spec.pose_seed = rng();
            switch (base.kind) {
                case SurfaceKind::cylinder:
                    spec.radius = std::max(0.3 * w, base.radius * (variation.radius_min +
                                                                   (variation.radius_max - variation.radius_min) *
                                                                       unit(rng)));
                    spec.phase = variation.phase * (2.0 * unit(rng) - 1.0);
                    break;
                case SurfaceKind::sine_sheet:
                    spec.amplitude = base.amplitude * (0.6 + 0.4 * unit(rng));
                    spec.wavelength = base.wavelength * (0.85 + 0.3 * unit(rng));
                    spec.phase = 2.0 * std::numbers::pi * unit(rng);
                    break;
                case SurfaceKind::flat: break;
            }
            spec.pattern_offset = {variation.offset * (2.0 * unit(rng) - 1.0),
                                   variation.offset * (2.0 * unit(rng) - 1.0)};
            char id[48];
            std::snprintf(id, sizeof id, "%s_p%d", ident, j);
            out.push_back({id, ident, generate_scene(spec)});
        }
    }
    return out;
}

}  // namespace pelage::synth
