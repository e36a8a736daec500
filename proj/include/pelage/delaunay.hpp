#pragma once
// Incremental Delaunay triangulation (Bowyer-Watson cavities over a
// triangulation closed by ghost triangles at a vertex at infinity).
//
// Points are inserted in lexicographic (x, y) order. A triangle joins the
// cavity only if the new point is strictly inside its circumcircle, so
// cocircular configurations keep the earlier triangulation and the result
// depends only on the sorted order, not on the caller's ordering.

#include <algorithm>
#include <array>
#include <numeric>
#include <span>
#include <unordered_map>
#include <vector>

#include "pelage/field.hpp"
#include "pelage/predicates.hpp"

namespace pelage::delaunay {

using Triangle = std::array<int, 3>;  // counter-clockwise indices into the input points

namespace detail {

inline constexpr int kInfinite = -1;

struct Tri {
    std::array<int, 3> v{};
    std::array<int, 3> nb{-1, -1, -1};  // nb[i] lies across the edge opposite v[i]
    bool alive = true;

    [[nodiscard]] bool ghost() const noexcept { return v[2] == kInfinite; }
};

inline bool lex_less(Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); }

class Builder {
public:
    explicit Builder(std::span<const Vec2> pts) : pts_(pts) {}

    std::vector<Triangle> run() {
        std::vector<int> order(pts_.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return lex_less(pts_[a], pts_[b]); });
        order.erase(std::unique(order.begin(), order.end(),
                                [&](int a, int b) { return pts_[a] == pts_[b]; }),
                    order.end());
        if (order.size() < 3) throw Error("delaunay: fewer than 3 distinct points");

        std::size_t third = 2;
        while (third < order.size() &&
               predicates::orient2d(pts_[order[0]], pts_[order[1]], pts_[order[third]]) == 0)
            ++third;
        if (third == order.size()) throw Error("delaunay: all points are collinear");
        seed(order[0], order[1], order[third]);
        for (std::size_t i = 2; i < order.size(); ++i)
            if (i != third) insert(order[i]);

        std::vector<int> rank(pts_.size(), 0);
        for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = static_cast<int>(i);
        std::vector<Triangle> out;
        for (const Tri& t : tris_) {
            if (!t.alive || t.ghost()) continue;
            Triangle tri = t.v;
            const auto first = std::min_element(tri.begin(), tri.end(), [&](int a, int b) {
                return rank[a] < rank[b];
            });
            std::rotate(tri.begin(), first, tri.end());
            out.push_back(tri);
        }
        std::sort(out.begin(), out.end(), [&](const Triangle& a, const Triangle& b) {
            for (int k = 0; k < 3; ++k)
                if (rank[a[k]] != rank[b[k]]) return rank[a[k]] < rank[b[k]];
            return false;
        });
        return out;
    }

private:
    [[nodiscard]] const Vec2& p(int i) const { return pts_[static_cast<std::size_t>(i)]; }

    int make(std::array<int, 3> v, std::array<int, 3> nb) {
        // Keep the vertex at infinity in slot 2 so ghosts are easy to spot.
        for (int r = 0; r < 2 && (v[0] == kInfinite || v[1] == kInfinite); ++r) {
            std::rotate(v.begin(), v.begin() + 1, v.end());
            std::rotate(nb.begin(), nb.begin() + 1, nb.end());
        }
        Tri t{v, nb, true};
        if (!free_.empty()) {
            const int id = free_.back();
            free_.pop_back();
            tris_[id] = t;
            return id;
        }
        tris_.push_back(t);
        stamp_.push_back(0);
        return static_cast<int>(tris_.size()) - 1;
    }

    void seed(int a, int b, int c) {
        if (predicates::orient2d(p(a), p(b), p(c)) < 0) std::swap(b, c);
        const int t0 = make({a, b, c}, {-1, -1, -1});
        const int ga = make({c, b, kInfinite}, {-1, -1, t0});
        const int gb = make({a, c, kInfinite}, {-1, -1, t0});
        const int gc = make({b, a, kInfinite}, {-1, -1, t0});
        tris_[t0].nb = {ga, gb, gc};
        // Ghost (x, y, inf): slot 0 is across (y, inf), slot 1 across (inf, x).
        tris_[ga].nb[0] = gc;  // (b, inf)
        tris_[ga].nb[1] = gb;  // (inf, c)
        tris_[gb].nb[0] = ga;  // (c, inf)
        tris_[gb].nb[1] = gc;  // (inf, a)
        tris_[gc].nb[0] = gb;  // (a, inf)
        tris_[gc].nb[1] = ga;  // (inf, b)
        last_ = t0;
    }

    [[nodiscard]] bool conflict(int id, int pi) const {
        const Tri& t = tris_[id];
        const Vec2& q = p(pi);
        if (!t.ghost()) return predicates::incircle(p(t.v[0]), p(t.v[1]), p(t.v[2]), q) > 0;
        const Vec2& x = p(t.v[0]);
        const Vec2& y = p(t.v[1]);
        const int o = predicates::orient2d(x, y, q);
        if (o != 0) return o > 0;
        // Collinear with the hull edge: conflict only strictly inside the segment.
        if (x.x != y.x) return (q.x > std::min(x.x, y.x)) && (q.x < std::max(x.x, y.x));
        return (q.y > std::min(x.y, y.y)) && (q.y < std::max(x.y, y.y));
    }

    int locate(int pi) const {
        int id = last_;
        if (!tris_[id].alive) id = first_alive();
        if (tris_[id].ghost()) id = tris_[id].nb[2];
        const Vec2& q = p(pi);
        const std::size_t limit = 4 * tris_.size() + 16;
        for (std::size_t step = 0; step < limit; ++step) {
            const Tri& t = tris_[id];
            if (t.ghost()) return id;
            int next = -1;
            for (int i = 0; i < 3; ++i) {
                if (predicates::orient2d(p(t.v[(i + 1) % 3]), p(t.v[(i + 2) % 3]), q) < 0) {
                    next = t.nb[i];
                    break;
                }
            }
            if (next < 0) return id;
            id = next;
        }
        return -1;
    }

    [[nodiscard]] int first_alive() const {
        for (std::size_t i = 0; i < tris_.size(); ++i)
            if (tris_[i].alive) return static_cast<int>(i);
        return -1;
    }

    void insert(int pi) {
        int start = locate(pi);
        if (start < 0 || !conflict(start, pi)) {
            start = -1;
            for (std::size_t i = 0; i < tris_.size() && start < 0; ++i)
                if (tris_[i].alive && conflict(static_cast<int>(i), pi)) start = static_cast<int>(i);
            if (start < 0) throw Error("delaunay: failed to locate insertion point");
        }

        ++epoch_;
        struct Edge {
            int a, b, outside, outside_slot;
        };
        std::vector<int> cavity{start};
        std::vector<Edge> boundary;
        stamp_[start] = epoch_;
        for (std::size_t k = 0; k < cavity.size(); ++k) {
            const int id = cavity[k];
            for (int i = 0; i < 3; ++i) {
                const int nb = tris_[id].nb[i];
                if (stamp_[nb] == epoch_) continue;
                if (stamp_[nb] != -epoch_ && conflict(nb, pi)) {
                    stamp_[nb] = epoch_;
                    cavity.push_back(nb);
                    continue;
                }
                stamp_[nb] = -epoch_;
                const Tri& t = tris_[id];
                const int a = t.v[(i + 1) % 3];
                const int b = t.v[(i + 2) % 3];
                int slot = 0;
                while (tris_[nb].nb[slot] != id) ++slot;
                boundary.push_back({a, b, nb, slot});
            }
        }
        for (int id : cavity) {
            tris_[id].alive = false;
            free_.push_back(id);
        }
        std::unordered_map<int, int> by_start, by_end;
        std::vector<int> created;
        created.reserve(boundary.size());
        for (const Edge& e : boundary) {
            const int id = make({e.a, e.b, pi}, {-1, -1, e.outside});
            tris_[e.outside].nb[e.outside_slot] = id;
            by_start[e.a] = id;
            by_end[e.b] = id;
            created.push_back(id);
        }
        for (std::size_t k = 0; k < boundary.size(); ++k) {
            const Edge& e = boundary[k];
            Tri& t = tris_[created[k]];
            // Neighbours across (b, p) and (p, a) in the unrotated triangle (a, b, p).
            const int across_bp = by_start.at(e.b);
            const int across_pa = by_end.at(e.a);
            for (int i = 0; i < 3; ++i) {
                if (t.v[i] == e.a) t.nb[i] = across_bp;
                else if (t.v[i] == e.b) t.nb[i] = across_pa;
            }
            if (!t.ghost()) last_ = created[k];
        }
    }

    std::span<const Vec2> pts_;
    std::vector<Tri> tris_;
    std::vector<int> stamp_;
    std::vector<int> free_;
    int epoch_ = 0;
    int last_ = 0;
};

}  // namespace detail

/// Delaunay triangulation of `points`. Exact duplicates are dropped (the
/// first in lexicographic order is kept). Triangles are counter-clockwise and
/// returned in a canonical order that does not depend on input order.
[[nodiscard]] inline std::vector<Triangle> triangulate(std::span<const Vec2> points) {
    return detail::Builder(points).run();
}

}  // namespace pelage::delaunay
