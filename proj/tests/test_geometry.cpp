#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "pelage/geometry.hpp"

using namespace pelage;

namespace {

NormalField single(Vec3 n) {
    NormalField f(1, 1);
    f.at(0, 0) = n;
    f.valid[0] = 1;
    return f;
}

Vec3 random_unit_normal(std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    for (;;) {
        Vec3 n{g(rng), g(rng), std::abs(g(rng))};
        const double len = std::sqrt(n.x * n.x + n.y * n.y + n.z * n.z);
        if (len < 1e-6 || n.z / len < 1e-6) continue;
        return {n.x / len, n.y / len, n.z / len};
    }
}

Metric2 metric_of(Vec3 n, double tau = geometry::kDefaultTau) {
    return geometry::metric_from_normals(single(n), tau).at(0, 0);
}

}  // namespace

TEST(DepthGradients, FrontoParallelIsZero) {
    const auto g = geometry::depth_gradients(single({0, 0, 1}));
    EXPECT_EQ(g.at(0, 0).x, 0.0);
    EXPECT_EQ(g.at(0, 0).y, 0.0);
}

TEST(DepthGradients, FortyFiveDegrees) {
    const double h = std::sqrt(2.0) / 2.0;
    const auto g = geometry::depth_gradients(single({-h, 0, h}));
    EXPECT_NEAR(g.at(0, 0).x, 1.0, 1e-12);
    EXPECT_EQ(g.at(0, 0).y, 0.0);
}

TEST(DepthGradients, ClampsAtTau) {
    const auto g = geometry::depth_gradients(single({0.99995, 0, 0.01}), 10.0);
    EXPECT_EQ(g.at(0, 0).x, -10.0);
    EXPECT_EQ(g.at(0, 0).y, 0.0);
}

TEST(DepthGradients, BackFacingBecomesInvalid) {
    NormalField f(2, 1);
    f.at(0, 0) = {0, 0, 1};
    f.at(1, 0) = {0, 0.6, -0.8};
    f.valid = {1, 1};
    const auto g = geometry::depth_gradients(f);
    EXPECT_TRUE(g.is_valid(0, 0));
    EXPECT_FALSE(g.is_valid(1, 0));
}

TEST(DepthGradients, AllInvalidThrows) {
    NormalField f(3, 3);
    try {
        (void)geometry::depth_gradients(f);
        FAIL();
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "no valid foreground normals");
    }
}

TEST(DepthGradients, RejectsNonPositiveTau) {
    EXPECT_THROW((void)geometry::depth_gradients(single({0, 0, 1}), 0.0), Error);
}

TEST(DepthGradients, ReclippingIsIdempotent) {
    std::mt19937_64 rng(3);
    NormalField f(50, 50);
    for (std::size_t i = 0; i < f.size(); ++i) {
        f.values[i] = random_unit_normal(rng);
        f.valid[i] = 1;
    }
    const auto g = geometry::depth_gradients(f, 2.0);
    const auto again = geometry::clip_gradients(g, 2.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        EXPECT_EQ(g.values[i].x, again.values[i].x);
        EXPECT_EQ(g.values[i].y, again.values[i].y);
        EXPECT_LE(std::abs(g.values[i].x), 2.0);
        EXPECT_LE(std::abs(g.values[i].y), 2.0);
    }
}

TEST(MetricFromGradients, Substitution) {
    const auto a = geometry::metric_from_slope(0, 0);
    EXPECT_EQ(a.g11, 1.0);
    EXPECT_EQ(a.g12, 0.0);
    EXPECT_EQ(a.g22, 1.0);
    const auto b = geometry::metric_from_slope(1, 0);
    EXPECT_EQ(b.g11, 2.0);
    EXPECT_EQ(b.g12, 0.0);
    EXPECT_EQ(b.g22, 1.0);
    const auto c = geometry::metric_from_slope(1, 1);
    EXPECT_EQ(c.g11, 2.0);
    EXPECT_EQ(c.g12, 1.0);
    EXPECT_EQ(c.g22, 2.0);
    EXPECT_EQ(c.det(), 3.0);
}

TEST(MetricFromGradients, InvalidStaysInvalid) {
    GradientField g(2, 1);
    g.valid = {1, 0};
    const auto m = geometry::metric_from_gradients(g);
    EXPECT_TRUE(m.is_valid(0, 0));
    EXPECT_FALSE(m.is_valid(1, 0));
}

TEST(CylinderMetric, Apex) {
    const auto m = geometry::metric_for_cylinder(100, 0);
    EXPECT_EQ(m.g11, 1.0);
    EXPECT_EQ(m.g12, 0.0);
    EXPECT_EQ(m.g22, 1.0);
}

TEST(CylinderMetric, Offset60) {
    EXPECT_DOUBLE_EQ(geometry::metric_for_cylinder(100, 60).g11, 10000.0 / 6400.0);
}

TEST(CylinderMetric, OutsideBandThrows) {
    EXPECT_THROW((void)geometry::metric_for_cylinder(100, 100), Error);
    EXPECT_THROW((void)geometry::metric_for_cylinder(100, -120), Error);
}

TEST(CylinderMetric, ClippedPipelineCapsNearLimb) {
    const double r = 100, x = 99.999;
    const Vec3 n{x / r, 0, std::sqrt(r * r - x * x) / r};
    const auto clipped = metric_of(n, 10.0);
    EXPECT_NEAR(clipped.g11, 101.0, 1e-9);
    EXPECT_GT(geometry::metric_for_cylinder(r, x).g11, 101.0);
}

TEST(CylinderMetric, MatchesNormalPipelineInsideClipRange) {
    const double r = 100;
    for (double x = -95; x <= 95; x += 5) {
        const Vec3 n{x / r, 0, std::sqrt(r * r - x * x) / r};
        const auto a = metric_of(n);
        const auto b = geometry::metric_for_cylinder(r, x);
        EXPECT_NEAR(a.g11, b.g11, 1e-9 * b.g11);
        EXPECT_NEAR(a.g22, 1.0, 1e-12);
    }
}

TEST(MetricProperties, SpdAndBoundedOverRandomNormals) {
    std::mt19937_64 rng(11);
    const double tau = geometry::kDefaultTau;
    for (int i = 0; i < 20000; ++i) {
        const auto m = metric_of(random_unit_normal(rng), tau);
        ASSERT_GT(m.g11, 0.0);
        ASSERT_GT(m.g22, 0.0);
        ASSERT_GT(m.det(), 0.0);
        ASSERT_LE(m.g11, 1 + tau * tau);
        ASSERT_LE(m.g22, 1 + tau * tau);
    }
}

TEST(MetricProperties, UnclippedEqualsAnalyticForm) {
    std::mt19937_64 rng(12);
    const double tau = geometry::kDefaultTau;
    int checked = 0;
    for (int i = 0; i < 20000; ++i) {
        const Vec3 n = random_unit_normal(rng);
        if (!(std::abs(n.x) < tau * n.z && std::abs(n.y) < tau * n.z)) continue;
        const auto m = metric_of(n, tau);
        // Closed form: G = I + (n1, n2)(n1, n2)^T / n3^2.
        const double s = 1.0 / (n.z * n.z);
        ASSERT_NEAR(m.g11, 1 + n.x * n.x * s, 1e-9 * m.g11);
        ASSERT_NEAR(m.g12, n.x * n.y * s, 1e-9 * m.g11);
        ASSERT_NEAR(m.g22, 1 + n.y * n.y * s, 1e-9 * m.g22);
        ++checked;
    }
    EXPECT_GT(checked, 10000);
}

TEST(MetricProperties, RotationAboutViewAxisConjugates) {
    std::mt19937_64 rng(13);
    const double angles[] = {std::numbers::pi / 2, std::numbers::pi, 0.7318};
    int checked = 0;
    for (int i = 0; i < 10000; ++i) {
        const Vec3 n = random_unit_normal(rng);
        if (n.z < 0.2) continue;  // keep clipping inactive
        const auto g = metric_of(n);
        for (double t : angles) {
            const double c = std::cos(t), s = std::sin(t);
            const auto h = metric_of({c * n.x - s * n.y, s * n.x + c * n.y, n.z});
            // R G R^T
            const double a = g.g11, b = g.g12, d = g.g22;
            const double r11 = c * c * a - 2 * c * s * b + s * s * d;
            const double r12 = c * s * a + (c * c - s * s) * b - c * s * d;
            const double r22 = s * s * a + 2 * c * s * b + c * c * d;
            ASSERT_NEAR(h.g11, r11, 1e-6);
            ASSERT_NEAR(h.g12, r12, 1e-6);
            ASSERT_NEAR(h.g22, r22, 1e-6);
        }
        ++checked;
    }
    EXPECT_GT(checked, 5000);
}
