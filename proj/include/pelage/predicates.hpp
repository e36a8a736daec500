#pragma once
// Orientation and in-circle tests: floating-point filter with an exact
// rational fallback when the filter cannot certify the sign.

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <limits>

#include "pelage/field.hpp"

namespace pelage::predicates {

namespace detail {
using Exact = boost::multiprecision::cpp_rational;
inline constexpr double kEps = std::numeric_limits<double>::epsilon() * 0.5;
inline constexpr double kOrientBound = (3.0 + 16.0 * kEps) * kEps;
inline constexpr double kInCircleBound = (10.0 + 96.0 * kEps) * kEps;

inline int sign_of(const Exact& v) { return v > 0 ? 1 : (v < 0 ? -1 : 0); }
}  // namespace detail

/// +1 if a, b, c wind counter-clockwise, -1 if clockwise, 0 if collinear.
[[nodiscard]] inline int orient2d(Vec2 a, Vec2 b, Vec2 c) {
    const double left = (a.x - c.x) * (b.y - c.y);
    const double right = (a.y - c.y) * (b.x - c.x);
    const double det = left - right;
    const double bound = detail::kOrientBound * (std::abs(left) + std::abs(right));
    if (det > bound) return 1;
    if (-det > bound) return -1;
    using detail::Exact;
    const Exact e = (Exact(a.x) - Exact(c.x)) * (Exact(b.y) - Exact(c.y)) -
                    (Exact(a.y) - Exact(c.y)) * (Exact(b.x) - Exact(c.x));
    return detail::sign_of(e);
}

/// +1 if d lies strictly inside the circle through a, b, c (counter-clockwise),
/// -1 if strictly outside, 0 if cocircular.
[[nodiscard]] inline int incircle(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
    const double adx = a.x - d.x, ady = a.y - d.y;
    const double bdx = b.x - d.x, bdy = b.y - d.y;
    const double cdx = c.x - d.x, cdy = c.y - d.y;
    const double alift = adx * adx + ady * ady;
    const double blift = bdx * bdx + bdy * bdy;
    const double clift = cdx * cdx + cdy * cdy;
    const double det = alift * (bdx * cdy - cdx * bdy) + blift * (cdx * ady - adx * cdy) +
                       clift * (adx * bdy - bdx * ady);
    const double permanent = alift * (std::abs(bdx * cdy) + std::abs(cdx * bdy)) +
                             blift * (std::abs(cdx * ady) + std::abs(adx * cdy)) +
                             clift * (std::abs(adx * bdy) + std::abs(bdx * ady));
    const double bound = detail::kInCircleBound * permanent;
    if (det > bound) return 1;
    if (-det > bound) return -1;
    using detail::Exact;
    const Exact eadx = Exact(a.x) - Exact(d.x), eady = Exact(a.y) - Exact(d.y);
    const Exact ebdx = Exact(b.x) - Exact(d.x), ebdy = Exact(b.y) - Exact(d.y);
    const Exact ecdx = Exact(c.x) - Exact(d.x), ecdy = Exact(c.y) - Exact(d.y);
    const Exact e = (eadx * eadx + eady * eady) * (ebdx * ecdy - ecdx * ebdy) +
                    (ebdx * ebdx + ebdy * ebdy) * (ecdx * eady - eadx * ecdy) +
                    (ecdx * ecdx + ecdy * ecdy) * (eadx * ebdy - ebdx * eady);
    return detail::sign_of(e);
}

}  // namespace pelage::predicates
