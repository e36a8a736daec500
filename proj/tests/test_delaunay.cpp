#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "pelage/delaunay.hpp"

using namespace pelage;

namespace {

// Long-double in-circle with a relative tie tolerance, independent of the library predicates.
int incircle_oracle(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
    using L = long double;
    const L adx = L(a.x) - d.x, ady = L(a.y) - d.y, bdx = L(b.x) - d.x, bdy = L(b.y) - d.y;
    const L cdx = L(c.x) - d.x, cdy = L(c.y) - d.y;
    const L al = adx * adx + ady * ady, bl = bdx * bdx + bdy * bdy, cl = cdx * cdx + cdy * cdy;
    const L det = al * (bdx * cdy - cdx * bdy) + bl * (cdx * ady - adx * cdy) + cl * (adx * bdy - bdx * ady);
    const L perm = al * (std::abs(bdx * cdy) + std::abs(cdx * bdy)) + bl * (std::abs(cdx * ady) + std::abs(adx * cdy)) +
                   cl * (std::abs(adx * bdy) + std::abs(bdx * ady));
    const L tol = 1e-9L * perm;
    if (det > tol) return 1;
    if (det < -tol) return -1;
    return 0;
}

long double signed_area(Vec2 a, Vec2 b, Vec2 c) {
    return 0.5L * ((static_cast<long double>(b.x) - a.x) * (static_cast<long double>(c.y) - a.y) -
                   (static_cast<long double>(b.y) - a.y) * (static_cast<long double>(c.x) - a.x));
}

// Empty circumcircle over all (triangle, point) pairs, positive orientation,
// and total area equal to the convex hull area.
void audit(const std::vector<Vec2>& pts, const std::vector<delaunay::Triangle>& tris) {
    ASSERT_FALSE(tris.empty());
    long double area = 0;
    for (const auto& t : tris) {
        const long double a = signed_area(pts[t[0]], pts[t[1]], pts[t[2]]);
        ASSERT_GT(a, 0.0L);
        area += a;
        for (std::size_t p = 0; p < pts.size(); ++p) {
            if (static_cast<int>(p) == t[0] || static_cast<int>(p) == t[1] || static_cast<int>(p) == t[2]) continue;
            ASSERT_LE(incircle_oracle(pts[t[0]], pts[t[1]], pts[t[2]], pts[p]), 0)
                << "point " << p << " inside circumcircle of (" << t[0] << "," << t[1] << "," << t[2] << ")";
        }
    }
    // Andrew monotone chain hull.
    std::vector<Vec2> s = pts;
    std::sort(s.begin(), s.end(), [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
    s.erase(std::unique(s.begin(), s.end()), s.end());
    std::vector<Vec2> hull(2 * s.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        while (k >= 2 && signed_area(hull[k - 2], hull[k - 1], s[i]) <= 0) --k;
        hull[k++] = s[i];
    }
    for (std::size_t i = s.size() - 1, lo = k + 1; i-- > 0;) {
        while (k >= lo && signed_area(hull[k - 2], hull[k - 1], s[i]) <= 0) --k;
        hull[k++] = s[i];
    }
    long double hull_area = 0;
    for (std::size_t i = 1; i + 1 < k; ++i) hull_area += signed_area(hull[0], hull[i], hull[i + 1]);
    EXPECT_NEAR(static_cast<double>(area), static_cast<double>(hull_area), 1e-9 * static_cast<double>(hull_area));
}

std::vector<Vec2> random_points(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(0.0, 100.0);
    std::vector<Vec2> p(n);
    for (auto& v : p) v = {u(rng), u(rng)};
    return p;
}

}  // namespace

TEST(Delaunay, ThreePointsOneTriangle) {
    const std::vector<Vec2> p{{0, 0}, {1, 0}, {0, 1}};
    const auto t = delaunay::triangulate(p);
    ASSERT_EQ(t.size(), 1u);
    EXPECT_GT(signed_area(p[t[0][0]], p[t[0][1]], p[t[0][2]]), 0);
}

TEST(Delaunay, UnitSquareTwoTrianglesSharedDiagonal) {
    const std::vector<Vec2> p{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    const auto t = delaunay::triangulate(p);
    ASSERT_EQ(t.size(), 2u);
    std::set<int> a(t[0].begin(), t[0].end()), b(t[1].begin(), t[1].end());
    std::vector<int> shared;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(shared));
    EXPECT_EQ(shared.size(), 2u);
    audit(p, t);
}

TEST(Delaunay, CollinearAndTooFewPointsThrow) {
    const std::vector<Vec2> line{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
    EXPECT_THROW((void)delaunay::triangulate(line), Error);
    const std::vector<Vec2> dup{{0, 0}, {0, 0}, {1, 1}};
    EXPECT_THROW((void)delaunay::triangulate(dup), Error);
}

TEST(Delaunay, DuplicatesAreDropped) {
    const std::vector<Vec2> p{{0, 0}, {1, 0}, {0, 1}, {1, 0}};
    EXPECT_EQ(delaunay::triangulate(p).size(), 1u);
}

TEST(Delaunay, RandomSetsPassEmptyCircumcircleAudit) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        auto pts = random_points(rng, 200);
        if (trial % 4 == 0) {
            // Replace half the points with a lattice: many cocircular quadruples.
            for (int i = 0; i < 100; ++i) pts[i] = {5.0 * (i % 10), 5.0 * (i / 10)};
        }
        if (trial % 4 == 1) {
            // Points on a circle plus its centre.
            for (int i = 0; i < 60; ++i) {
                const double a = 2 * 3.14159265358979323846 * i / 60;
                pts[i] = {50 + 30 * std::cos(a), 50 + 30 * std::sin(a)};
            }
        }
        const auto t = delaunay::triangulate(pts);
        audit(pts, t);
        if (HasFatalFailure()) return;
    }
}

TEST(Delaunay, PureLatticeCountsMatchEuler) {
    std::vector<Vec2> p;
    for (int y = 0; y < 15; ++y)
        for (int x = 0; x < 15; ++x) p.push_back({double(x), double(y)});
    const auto t = delaunay::triangulate(p);
    EXPECT_EQ(t.size(), 2u * 14 * 14);
    audit(p, t);
}

TEST(Delaunay, OutputIndependentOfInputOrder) {
    std::mt19937_64 rng(5);
    auto pts = random_points(rng, 150);
    for (int i = 0; i < 64; ++i) pts[i] = {double(i % 8), double(i / 8)};
    auto as_set = [](const std::vector<Vec2>& p, const std::vector<delaunay::Triangle>& tris) {
        std::set<std::array<std::pair<double, double>, 3>> s;
        for (const auto& t : tris) {
            std::array<std::pair<double, double>, 3> k;
            for (int i = 0; i < 3; ++i) k[i] = {p[t[i]].x, p[t[i]].y};
            std::sort(k.begin(), k.end());
            s.insert(k);
        }
        return s;
    };
    const auto base = as_set(pts, delaunay::triangulate(pts));
    for (int r = 0; r < 5; ++r) {
        std::shuffle(pts.begin(), pts.end(), rng);
        EXPECT_EQ(as_set(pts, delaunay::triangulate(pts)), base);
    }
}
