#pragma once
// Desk-scale keypoint matcher and pairwise similarity matrices.
//
// Detection is Harris on alpha-masked luminance; the descriptor is the
// zero-mean, unit-norm 11x11 luminance patch. Pairs are mutual nearest
// neighbours that pass a ratio test in both directions.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pelage/field.hpp"
#include "pelage/parallel.hpp"

namespace pelage::match {

inline constexpr int kPatchRadius = 5;
inline constexpr int kPatchSize = 2 * kPatchRadius + 1;
inline constexpr int kDescriptorSize = kPatchSize * kPatchSize;

struct Keypoint {
    Vec2 position;
    double response = 0.0;
    std::vector<double> descriptor;  // kDescriptorSize entries
};

struct DetectorOptions {
    double harris_k = 0.04;
    int window_radius = 2;             // 5x5 structure-tensor window
    double relative_threshold = 0.01;  // fraction of the strongest response
    double absolute_threshold = 1e-6;
    int nms_radius = 2;
    int max_keypoints = 1000;
};

/// Number of detect_and_describe calls made by this process.
inline std::atomic<long long>& detector_invocations() {
    static std::atomic<long long> count{0};
    return count;
}

namespace detail {

inline double luminance(const Rgba8& p) { return (0.299 * p.r + 0.587 * p.g + 0.114 * p.b) / 255.0; }

/// opaque_box(x, y, r): every pixel of the (2r+1)^2 box around (x, y) is opaque.
class OpaqueTable {
public:
    explicit OpaqueTable(const RgbaImage& img) : w_(img.width), h_(img.height) {
        sum_.assign(static_cast<std::size_t>(w_ + 1) * (h_ + 1), 0);
        for (int y = 0; y < h_; ++y)
            for (int x = 0; x < w_; ++x)
                at(x + 1, y + 1) = at(x, y + 1) + at(x + 1, y) - at(x, y) + (img.at(x, y).a == 255 ? 1 : 0);
    }
    [[nodiscard]] bool opaque_box(int x, int y, int r) const {
        if (x - r < 0 || y - r < 0 || x + r >= w_ || y + r >= h_) return false;
        const int x0 = x - r, y0 = y - r, x1 = x + r + 1, y1 = y + r + 1;
        const long long n = cat(x1, y1) - cat(x0, y1) - cat(x1, y0) + cat(x0, y0);
        return n == static_cast<long long>(2 * r + 1) * (2 * r + 1);
    }

private:
    long long& at(int x, int y) { return sum_[static_cast<std::size_t>(y) * (w_ + 1) + x]; }
    [[nodiscard]] long long cat(int x, int y) const { return sum_[static_cast<std::size_t>(y) * (w_ + 1) + x]; }
    int w_, h_;
    std::vector<long long> sum_;
};

}  // namespace detail

/// Harris corners whose full descriptor patch is opaque, with descriptors.
[[nodiscard]] inline std::vector<Keypoint> detect_and_describe(const RgbaImage& image,
                                                               const DetectorOptions& opts = {}) {
    ++detector_invocations();
    const int w = image.width, h = image.height;
    std::vector<Keypoint> out;
    if (w < kPatchSize || h < kPatchSize) return out;

    const detail::OpaqueTable opaque(image);
    std::vector<double> lum(static_cast<std::size_t>(w) * h, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (image.at(x, y).a == 255) lum[static_cast<std::size_t>(y) * w + x] = detail::luminance(image.at(x, y));
    auto L = [&](int x, int y) { return lum[static_cast<std::size_t>(y) * w + x]; };

    // Sobel products, defined where the 3x3 neighbourhood is inside the image.
    std::vector<double> ixx(lum.size(), 0.0), iyy(lum.size(), 0.0), ixy(lum.size(), 0.0);
    for (int y = 1; y + 1 < h; ++y)
        for (int x = 1; x + 1 < w; ++x) {
            const double gx = (L(x + 1, y - 1) + 2 * L(x + 1, y) + L(x + 1, y + 1)) -
                              (L(x - 1, y - 1) + 2 * L(x - 1, y) + L(x - 1, y + 1));
            const double gy = (L(x - 1, y + 1) + 2 * L(x, y + 1) + L(x + 1, y + 1)) -
                              (L(x - 1, y - 1) + 2 * L(x, y - 1) + L(x + 1, y - 1));
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            ixx[i] = gx * gx / 64.0;
            iyy[i] = gy * gy / 64.0;
            ixy[i] = gx * gy / 64.0;
        }

    const int wr = opts.window_radius;
    std::vector<double> response(lum.size(), 0.0);
    std::vector<unsigned char> eligible(lum.size(), 0);
    double peak = 0.0;
    for (int y = kPatchRadius; y + kPatchRadius < h; ++y)
        for (int x = kPatchRadius; x + kPatchRadius < w; ++x) {
            if (!opaque.opaque_box(x, y, std::max(kPatchRadius, wr + 1))) continue;
            double a = 0, b = 0, c = 0;
            for (int dy = -wr; dy <= wr; ++dy)
                for (int dx = -wr; dx <= wr; ++dx) {
                    const std::size_t j = static_cast<std::size_t>(y + dy) * w + (x + dx);
                    a += ixx[j];
                    b += iyy[j];
                    c += ixy[j];
                }
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const double r = a * b - c * c - opts.harris_k * (a + b) * (a + b);
            response[i] = r;
            eligible[i] = 1;
            peak = std::max(peak, r);
        }
    const double threshold = std::max(opts.absolute_threshold, opts.relative_threshold * peak);

    const int nr = opts.nms_radius;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (!eligible[i] || !(response[i] > threshold)) continue;
            bool is_max = true;
            for (int dy = -nr; dy <= nr && is_max; ++dy)
                for (int dx = -nr; dx <= nr; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    const int xx = x + dx, yy = y + dy;
                    if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
                    const std::size_t j = static_cast<std::size_t>(yy) * w + xx;
                    if (!eligible[j]) continue;
                    // Plateaus resolve to the first pixel in scan order.
                    const bool earlier = dy < 0 || (dy == 0 && dx < 0);
                    if (response[j] > response[i] || (earlier && response[j] == response[i])) {
                        is_max = false;
                        break;
                    }
                }
            if (!is_max) continue;

            Keypoint kp;
            kp.position = {double(x), double(y)};
            kp.response = response[i];
            kp.descriptor.resize(kDescriptorSize);
            double mean = 0.0;
            for (int dy = -kPatchRadius, k = 0; dy <= kPatchRadius; ++dy)
                for (int dx = -kPatchRadius; dx <= kPatchRadius; ++dx, ++k) {
                    kp.descriptor[k] = L(x + dx, y + dy);
                    mean += kp.descriptor[k];
                }
            mean /= kDescriptorSize;
            double norm = 0.0;
            for (double& d : kp.descriptor) {
                d -= mean;
                norm += d * d;
            }
            norm = std::sqrt(norm);
            if (norm < 1e-9) continue;
            for (double& d : kp.descriptor) d /= norm;
            out.push_back(std::move(kp));
        }

    if (static_cast<int>(out.size()) > opts.max_keypoints) {
        std::stable_sort(out.begin(), out.end(),
                         [](const Keypoint& a, const Keypoint& b) { return a.response > b.response; });
        out.resize(static_cast<std::size_t>(opts.max_keypoints));
    }
    return out;
}

struct Match {
    int index_a = -1;
    int index_b = -1;
    Vec2 a;
    Vec2 b;
    double score = 0.0;
};

using MatchSet = std::vector<Match>;

[[nodiscard]] inline double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Mutual nearest neighbours (by descriptor distance) passing the ratio test
/// from both sides. Score = correlation clamped to [0, 1].
[[nodiscard]] inline MatchSet match(const std::vector<Keypoint>& a, const std::vector<Keypoint>& b,
                                    double ratio = 0.8) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw Error("match: ratio must lie in (0, 1]");
    MatchSet out;
    if (a.empty() || b.empty()) return out;
    const std::size_t na = a.size(), nb = b.size();
    std::vector<double> dist(na * nb);
    for (std::size_t i = 0; i < na; ++i)
        for (std::size_t j = 0; j < nb; ++j)
            dist[i * nb + j] = std::sqrt(std::max(0.0, 2.0 - 2.0 * correlation(a[i].descriptor, b[j].descriptor)));

    struct Best {
        int index = -1;
        double d1 = INFINITY;
        double d2 = INFINITY;
    };
    auto consider = [](Best& best, int k, double d) {
        if (d < best.d1) {
            best.d2 = best.d1;
            best.d1 = d;
            best.index = k;
        } else if (d < best.d2) {
            best.d2 = d;
        }
    };
    std::vector<Best> best_a(na), best_b(nb);
    for (std::size_t i = 0; i < na; ++i)
        for (std::size_t j = 0; j < nb; ++j) {
            const double d = dist[i * nb + j];
            consider(best_a[i], static_cast<int>(j), d);
            consider(best_b[j], static_cast<int>(i), d);
        }
    auto passes = [ratio](const Best& best) { return std::isinf(best.d2) || best.d1 < ratio * best.d2; };
    for (std::size_t i = 0; i < na; ++i) {
        const int j = best_a[i].index;
        if (best_b[static_cast<std::size_t>(j)].index != static_cast<int>(i)) continue;
        if (!passes(best_a[i]) || !passes(best_b[static_cast<std::size_t>(j)])) continue;
        const double c = correlation(a[i].descriptor, b[static_cast<std::size_t>(j)].descriptor);
        out.push_back({static_cast<int>(i), j, a[i].position, b[static_cast<std::size_t>(j)].position,
                       std::clamp(c, 0.0, 1.0)});
    }
    return out;
}

/// Area under the descending score-vs-rank curve (unit rank spacing).
[[nodiscard]] inline double similarity_from_matches(const MatchSet& matches) {
    std::vector<double> scores;
    scores.reserve(matches.size());
    for (const auto& m : matches) scores.push_back(m.score);
    std::sort(scores.begin(), scores.end(), std::greater<>());
    double s = 0.0;
    for (double v : scores) s += v;
    return s;
}

struct SimilarityMatrix {
    std::vector<std::string> ids;
    std::vector<double> values;  // row = query, column = database entry
    bool symmetric = false;

    SimilarityMatrix() = default;
    explicit SimilarityMatrix(std::vector<std::string> names, bool sym = false)
        : ids(std::move(names)), values(ids.size() * ids.size(), 0.0), symmetric(sym) {}

    [[nodiscard]] std::size_t size() const noexcept { return ids.size(); }
    double& at(std::size_t q, std::size_t d) { return values[q * ids.size() + d]; }
    [[nodiscard]] double at(std::size_t q, std::size_t d) const { return values[q * ids.size() + d]; }
    [[nodiscard]] std::optional<std::size_t> find(const std::string& id) const {
        for (std::size_t i = 0; i < ids.size(); ++i)
            if (ids[i] == id) return i;
        return std::nullopt;
    }
};

struct MatcherOptions {
    DetectorOptions detector;
    double ratio = 0.8;
    int threads = 1;
};

/// Symmetric builtin similarity over `images` (same order as `ids`).
[[nodiscard]] inline SimilarityMatrix builtin_similarity(const std::vector<std::string>& ids,
                                                         const std::vector<RgbaImage>& images,
                                                         const MatcherOptions& opts = {}) {
    if (ids.size() != images.size()) throw Error("builtin_similarity: ids and images differ in count");
    std::vector<std::vector<Keypoint>> keypoints(images.size());
    parallel_for(images.size(), opts.threads,
                 [&](std::size_t i) { keypoints[i] = detect_and_describe(images[i], opts.detector); });
    SimilarityMatrix m(ids, true);
    const std::size_t n = ids.size();
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    parallel_for(pairs.size(), opts.threads, [&](std::size_t k) {
        const auto [i, j] = pairs[k];
        const double s = similarity_from_matches(match(keypoints[i], keypoints[j], opts.ratio));
        m.at(i, j) = s;
        m.at(j, i) = s;
    });
    return m;
}

/// Parses `query_id,database_id,score` rows for the ordered pairs of `ids`.
/// A `# symmetric` line lets (d, q) stand in for a missing (q, d).
[[nodiscard]] inline SimilarityMatrix parse_external_scores(std::istream& in, const std::vector<std::string>& ids) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (!index.emplace(ids[i], i).second) throw Error("duplicate id in dataset: " + ids[i]);

    const std::size_t n = ids.size();
    std::vector<double> value(n * n, 0.0);
    std::vector<unsigned char> seen(n * n, 0);
    bool symmetric = false, header = false;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        if (line[first] == '#') {
            std::string directive = line.substr(first + 1);
            directive.erase(0, directive.find_first_not_of(" \t"));
            directive.erase(directive.find_last_not_of(" \t") + 1);
            if (directive == "symmetric") symmetric = true;
            continue;
        }
        if (!header) {
            if (line != "query_id,database_id,score")
                throw Error("score file: expected header 'query_id,database_id,score', got '" + line + "'");
            header = true;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        if (cells.size() != 3) throw Error("score file line " + std::to_string(line_no) + ": expected 3 fields");
        const auto q = index.find(cells[0]);
        const auto d = index.find(cells[1]);
        if (q == index.end()) throw Error("score file line " + std::to_string(line_no) + ": unknown id '" + cells[0] + "'");
        if (d == index.end()) throw Error("score file line " + std::to_string(line_no) + ": unknown id '" + cells[1] + "'");
        double score = 0.0;
        const char* begin = cells[2].data();
        const char* end = begin + cells[2].size();
        const auto res = std::from_chars(begin, end, score);
        if (res.ec != std::errc{} || res.ptr != end || !std::isfinite(score) || score < 0.0)
            throw Error("score file line " + std::to_string(line_no) + ": invalid score '" + cells[2] + "'");
        const std::size_t k = q->second * n + d->second;
        if (seen[k]) throw Error("score file: duplicate pair (" + cells[0] + ", " + cells[1] + ")");
        seen[k] = 1;
        value[k] = score;
    }
    if (!header) throw Error("score file: missing header");

    SimilarityMatrix m(ids, symmetric);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            if (seen[i * n + j]) {
                m.at(i, j) = value[i * n + j];
            } else if (symmetric && seen[j * n + i]) {
                m.at(i, j) = value[j * n + i];
            } else {
                throw Error("score file: missing score for pair (" + ids[i] + ", " + ids[j] + ")");
            }
        }
    if (symmetric)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (m.at(i, j) != m.at(j, i))
                    throw Error("score file declared symmetric but (" + ids[i] + ", " + ids[j] + ") differs from its transpose");
    return m;
}

[[nodiscard]] inline SimilarityMatrix read_external_scores(const std::string& path, const std::vector<std::string>& ids) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open score file: " + path);
    return parse_external_scores(in, ids);
}

/// Side-by-side rendering of two images with one line per match.
[[nodiscard]] inline RgbImage draw_matches(const RgbaImage& a, const RgbaImage& b, const MatchSet& matches) {
    const int gap = 4;
    const int w = a.width + gap + b.width, h = std::max(a.height, b.height);
    RgbImage out(w, h, Rgb8{40, 40, 40});
    auto blit = [&](const RgbaImage& img, int ox) {
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                const Rgba8 p = img.at(x, y);
                if (p.a) out.at(ox + x, y) = {p.r, p.g, p.b};
            }
    };
    blit(a, 0);
    blit(b, a.width + gap);
    for (const auto& m : matches) {
        const double x0 = m.a.x, y0 = m.a.y, x1 = m.b.x + a.width + gap, y1 = m.b.y;
        const int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
        const auto g = static_cast<unsigned char>(std::lround(255.0 * m.score));
        for (int s = 0; s <= steps; ++s) {
            const double t = double(s) / steps;
            const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
            const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
            if (x >= 0 && y >= 0 && x < w && y < h) out.at(x, y) = {255, g, 0};
        }
    }
    return out;
}

}  // namespace pelage::match
