#pragma once
// Surface normals to clipped depth slopes and the induced first fundamental form.

#include <algorithm>
#include <cmath>

#include "pelage/field.hpp"

namespace pelage::geometry {

inline constexpr double kDefaultTau = 10.0;

/// Orthographic slopes p = -n1/n3, q = -n2/n3, each clamped to [-tau, tau].
/// Pixels with n3 <= 0 or a non-finite normal become invalid.
[[nodiscard]] inline GradientField depth_gradients(const NormalField& normals,
                                                   double tau = kDefaultTau) {
    if (!(tau > 0.0)) throw Error("clipping bound tau must be positive");
    GradientField out(normals.width, normals.height);
    std::size_t kept = 0;
    for (std::size_t i = 0; i < normals.size(); ++i) {
        if (!normals.valid[i]) continue;
        const Vec3& n = normals.values[i];
        if (!(n.z > 0.0) || !std::isfinite(n.x) || !std::isfinite(n.y) || !std::isfinite(n.z))
            continue;
        out.values[i] = {std::clamp(-n.x / n.z, -tau, tau), std::clamp(-n.y / n.z, -tau, tau)};
        out.valid[i] = 1;
        ++kept;
    }
    if (kept == 0) throw Error("no valid foreground normals");
    return out;
}

/// Re-applies the clamp; a no-op on fields produced by depth_gradients with the same tau.
[[nodiscard]] inline GradientField clip_gradients(GradientField grads, double tau) {
    for (auto& g : grads.values) {
        g.x = std::clamp(g.x, -tau, tau);
        g.y = std::clamp(g.y, -tau, tau);
    }
    return grads;
}

/// First fundamental form of the graph surface (x, y, z(x, y)) in pixel units.
[[nodiscard]] inline Metric2 metric_from_slope(double p, double q) noexcept {
    return {1.0 + p * p, p * q, 1.0 + q * q};
}

[[nodiscard]] inline MetricField metric_from_gradients(const GradientField& grads) {
    MetricField out(grads.width, grads.height);
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!grads.valid[i]) continue;
        out.values[i] = metric_from_slope(grads.values[i].x, grads.values[i].y);
        out.valid[i] = 1;
    }
    return out;
}

[[nodiscard]] inline MetricField metric_from_normals(const NormalField& normals,
                                                     double tau = kDefaultTau) {
    return metric_from_gradients(depth_gradients(normals, tau));
}

/// Analytic metric of a vertical cylinder of the given radius seen head-on,
/// at horizontal offset x from its axis.
[[nodiscard]] inline Metric2 metric_for_cylinder(double radius, double x) {
    if (!(std::abs(x) < radius)) throw Error("cylinder offset outside the visible band");
    return {radius * radius / (radius * radius - x * x), 0.0, 1.0};
}

/// Uniform metric field, all pixels valid.
[[nodiscard]] inline MetricField uniform_metric(int width, int height, Metric2 g = {}) {
    return MetricField(width, height, g, true);
}

}  // namespace pelage::geometry
