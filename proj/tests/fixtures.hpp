#pragma once
// Analytic surfaces shared by the unit and acceptance tests.

#include <cmath>

#include "pelage/geometry.hpp"
#include "pelage/field.hpp"

namespace fixtures {

using namespace pelage;

struct AnalyticCase {
    MetricField metric;
    UVField reference;  // exact isometric unwrap
};

inline AnalyticCase flat(int w, int h) {
    AnalyticCase c{geometry::uniform_metric(w, h), UVField(w, h)};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            c.reference.at(x, y) = {double(x), double(y)};
            c.reference.valid[c.reference.index(x, y)] = 1;
        }
    return c;
}

/// Vertical cylinder of radius r centred in a w x h image; foreground is the
/// central `band` fraction of the visible half, u = r asin(X / r), v = y.
inline AnalyticCase cylinder(int w, int h, double r, double band) {
    AnalyticCase c{MetricField(w, h), UVField(w, h)};
    const double cx = 0.5 * (w - 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double X = x - cx;
            if (std::abs(X) >= band * r) continue;
            c.metric.at(x, y) = geometry::metric_for_cylinder(r, X);
            c.metric.valid[c.metric.index(x, y)] = 1;
            c.reference.at(x, y) = {r * std::asin(X / r), double(y)};
            c.reference.valid[c.reference.index(x, y)] = 1;
        }
    return c;
}

/// Sheet z = a sin(2 pi x / L) with reference u = arclength from x = 0.
inline AnalyticCase sine(int w, int h, double a, double wavelength) {
    AnalyticCase c{MetricField(w, h), UVField(w, h)};
    const double k = 2.0 * 3.14159265358979323846 / wavelength;
    auto slope = [&](double x) { return a * k * std::cos(k * x); };
    auto arclength = [&](double x) {
        const int n = 2000;
        double s = 0;
        for (int i = 0; i < n; ++i) {
            const double t0 = x * i / n, t1 = x * (i + 1) / n;
            const double f0 = std::sqrt(1 + slope(t0) * slope(t0)), f1 = std::sqrt(1 + slope(t1) * slope(t1));
            const double tm = 0.5 * (t0 + t1), fm = std::sqrt(1 + slope(tm) * slope(tm));
            s += (t1 - t0) * (f0 + 4 * fm + f1) / 6.0;
        }
        return s;
    };
    for (int x = 0; x < w; ++x) {
        const double p = slope(x), u = arclength(x);
        for (int y = 0; y < h; ++y) {
            c.metric.at(x, y) = geometry::metric_from_slope(p, 0.0);
            c.metric.valid[c.metric.index(x, y)] = 1;
            c.reference.at(x, y) = {u, double(y)};
            c.reference.valid[c.reference.index(x, y)] = 1;
        }
    }
    return c;
}

/// Metric of a sheet sheared in its own plane: (x, y) -> (x + s y, y).
inline MetricField shear(int w, int h, double s) {
    return geometry::uniform_metric(w, h, {1.0, s, 1.0 + s * s});
}

}  // namespace fixtures
