#pragma once
// Isometric UV solve: find g(x, y) -> (u, v) with J^T J = G at every valid pixel.
//
// Two independent routes share the objective ||J^T J - G||_F^2:
//   * solve_uv_network: Fourier-feature MLP, exact network Jacobian, Adam.
//   * solve_uv_grid:    per-pixel unknowns, finite-difference Jacobian,
//                       damped Gauss-Newton.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pelage/coordinate_net.hpp"
#include "pelage/field.hpp"

namespace pelage::uv {

using net::CoordinateNet;
using net::CoordinateNetConfig;
using net::Mat2;

struct SolveReport {
    std::vector<double> pretrain_loss;  // per epoch
    std::vector<double> train_loss;     // per epoch (network) or per accepted step (grid)
    double final_residual = 0.0;
    int pretrain_epochs_run = 0;
    int train_epochs_run = 0;
};

struct UVSolution {
    UVField uv;
    SolveReport report;
};

// ---------------------------------------------------------------------------
// Finite-difference Jacobian and the residual
// ---------------------------------------------------------------------------

/// One axis of the finite-difference stencil: d(uv)/d(axis) ~= sum w_i * uv(pixel_i).
struct Stencil {
    std::size_t plus = 0;
    std::size_t minus = 0;
    double weight = 1.0;  // 0.5 for central, 1 for one-sided
};

/// Central differences where both neighbours are valid, one-sided otherwise.
/// Returns nullopt if neither neighbour along the axis is valid.
template <typename V>
[[nodiscard]] std::optional<Stencil> fd_stencil(const Field<V>& f, int x, int y, int dx, int dy) {
    const bool fwd = f.is_valid(x + dx, y + dy);
    const bool bwd = f.is_valid(x - dx, y - dy);
    if (fwd && bwd) return Stencil{f.index(x + dx, y + dy), f.index(x - dx, y - dy), 0.5};
    if (fwd) return Stencil{f.index(x + dx, y + dy), f.index(x, y), 1.0};
    if (bwd) return Stencil{f.index(x, y), f.index(x - dx, y - dy), 1.0};
    return std::nullopt;
}

[[nodiscard]] inline std::optional<Mat2> fd_jacobian(const UVField& uv, int x, int y) {
    if (!uv.is_valid(x, y)) return std::nullopt;
    const auto sx = fd_stencil(uv, x, y, 1, 0);
    const auto sy = fd_stencil(uv, x, y, 0, 1);
    if (!sx || !sy) return std::nullopt;
    Mat2 j;
    const Vec2& xp = uv.values[sx->plus];
    const Vec2& xm = uv.values[sx->minus];
    const Vec2& yp = uv.values[sy->plus];
    const Vec2& ym = uv.values[sy->minus];
    j << sx->weight * (xp.x - xm.x), sy->weight * (yp.x - ym.x),
         sx->weight * (xp.y - xm.y), sy->weight * (yp.y - ym.y);
    return j;
}

[[nodiscard]] inline double metric_mismatch(const Mat2& j, const Metric2& g) noexcept {
    const Mat2 jtj = j.transpose() * j;
    const double a11 = jtj(0, 0) - g.g11;
    const double a12 = jtj(0, 1) - g.g12;
    const double a22 = jtj(1, 1) - g.g22;
    return a11 * a11 + 2.0 * a12 * a12 + a22 * a22;
}

/// Mean of ||J^T J - G||_F^2 over pixels valid in both fields that have a
/// finite-difference Jacobian.
[[nodiscard]] inline double isometry_residual(const UVField& uv, const MetricField& metric) {
    if (!uv.same_shape(metric)) throw Error("isometry_residual: dimension mismatch");
    double sum = 0.0;
    std::size_t count = 0;
    for (int y = 0; y < uv.height; ++y) {
        for (int x = 0; x < uv.width; ++x) {
            if (!metric.is_valid(x, y)) continue;
            const auto j = fd_jacobian(uv, x, y);
            if (!j) continue;
            sum += metric_mismatch(*j, metric.at(x, y));
            ++count;
        }
    }
    if (count == 0) throw Error("isometry_residual: no differentiable pixels");
    return sum / static_cast<double>(count);
}

/// isometry_residual, or NaN when no pixel has a finite-difference Jacobian.
[[nodiscard]] inline double residual_or_nan(const UVField& uv, const MetricField& metric) {
    for (int y = 0; y < uv.height; ++y)
        for (int x = 0; x < uv.width; ++x)
            if (metric.is_valid(x, y) && fd_jacobian(uv, x, y)) return isometry_residual(uv, metric);
    return std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------------------
// Gauge handling
// ---------------------------------------------------------------------------

/// Translates valid UVs so their bounding box starts at (0, 0).
inline void normalize_uv(UVField& uv) {
    double umin = std::numeric_limits<double>::infinity();
    double vmin = umin;
    for (std::size_t i = 0; i < uv.size(); ++i) {
        if (!uv.valid[i]) continue;
        umin = std::min(umin, uv.values[i].x);
        vmin = std::min(vmin, uv.values[i].y);
    }
    if (!std::isfinite(umin)) return;
    for (std::size_t i = 0; i < uv.size(); ++i) {
        if (!uv.valid[i]) continue;
        uv.values[i].x -= umin;
        uv.values[i].y -= vmin;
    }
}

/// Identity map on the valid pixels of `like`.
template <typename V>
[[nodiscard]] UVField identity_uv(const Field<V>& like) {
    UVField uv(like.width, like.height);
    for (int y = 0; y < like.height; ++y)
        for (int x = 0; x < like.width; ++x)
            if (like.is_valid(x, y)) {
                uv.at(x, y) = {static_cast<double>(x), static_cast<double>(y)};
                uv.valid[uv.index(x, y)] = 1;
            }
    return uv;
}

struct RigidTransform {
    Mat2 rotation = Mat2::Identity();  // may include a reflection (det = -1)
    Eigen::Vector2d translation = Eigen::Vector2d::Zero();

    [[nodiscard]] Vec2 apply(Vec2 p) const {
        const Eigen::Vector2d q = rotation * Eigen::Vector2d(p.x, p.y) + translation;
        return {q.x(), q.y()};
    }
};

struct Alignment {
    UVField aligned;
    RigidTransform transform;
    double rmse = 0.0;
    bool degenerate = false;  // candidate points (nearly) collinear
};

/// Closed-form orthogonal Procrustes (no scaling) of candidate onto reference.
[[nodiscard]] inline Alignment procrustes_align(const UVField& candidate, const UVField& reference,
                                                bool allow_reflection = true) {
    if (!candidate.same_shape(reference) || candidate.valid != reference.valid)
        throw Error("procrustes_align: validity masks differ");
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < candidate.size(); ++i)
        if (candidate.valid[i]) idx.push_back(i);
    if (idx.size() < 3) throw Error("procrustes_align: fewer than 3 valid pixels");

    Eigen::Vector2d cc = Eigen::Vector2d::Zero(), rc = Eigen::Vector2d::Zero();
    for (auto i : idx) {
        cc += Eigen::Vector2d(candidate.values[i].x, candidate.values[i].y);
        rc += Eigen::Vector2d(reference.values[i].x, reference.values[i].y);
    }
    cc /= static_cast<double>(idx.size());
    rc /= static_cast<double>(idx.size());

    Mat2 h = Mat2::Zero();
    for (auto i : idx) {
        const Eigen::Vector2d a = Eigen::Vector2d(candidate.values[i].x, candidate.values[i].y) - cc;
        const Eigen::Vector2d b = Eigen::Vector2d(reference.values[i].x, reference.values[i].y) - rc;
        h += a * b.transpose();
    }
    Eigen::JacobiSVD<Mat2> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat2 d = Mat2::Identity();
    if (!allow_reflection && (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0)
        d(1, 1) = -1.0;

    Alignment out;
    out.transform.rotation = svd.matrixV() * d * svd.matrixU().transpose();
    out.transform.translation = rc - out.transform.rotation * cc;
    const auto sv = svd.singularValues();
    out.degenerate = sv(0) <= 0.0 || sv(1) <= 1e-12 * sv(0);

    out.aligned = candidate;
    double sse = 0.0;
    for (auto i : idx) {
        const Vec2 p = out.transform.apply(candidate.values[i]);
        out.aligned.values[i] = p;
        const double du = p.x - reference.values[i].x;
        const double dv = p.y - reference.values[i].y;
        sse += du * du + dv * dv;
    }
    out.rmse = std::sqrt(sse / static_cast<double>(idx.size()));
    return out;
}

// ---------------------------------------------------------------------------
// Network route
// ---------------------------------------------------------------------------

namespace detail {

struct Sample {
    Vec2 pixel;
    Metric2 metric;
};

inline std::vector<Sample> collect_samples(const MetricField& metric) {
    std::vector<Sample> out;
    for (int y = 0; y < metric.height; ++y)
        for (int x = 0; x < metric.width; ++x)
            if (metric.is_valid(x, y))
                out.push_back({{static_cast<double>(x), static_cast<double>(y)}, metric.at(x, y)});
    if (out.empty()) throw Error("no valid pixels in metric field");
    return out;
}

enum class Objective { identity, isometry };

}  // namespace detail

/// Called after every epoch with (network, phase: 0 = pretrain / 1 = train, epoch, mean loss).
using EpochCallback = std::function<void(const CoordinateNet&, int, int, double)>;

namespace detail {

/// Runs `epochs` epochs of Adam over shuffled minibatches; returns per-epoch mean loss.
inline std::vector<double> run_phase(CoordinateNet& net, const std::vector<Sample>& samples,
                                     Objective objective, int epochs, std::mt19937_64& rng,
                                     const EpochCallback& on_epoch = {}) {
    const auto& cfg = net.config();
    net::AdamOptimizer adam(net, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    const bool tangents = true;
    const int batch_size = objective == Objective::identity
                               ? net::pretrain_batch(cfg, samples.size())
                               : std::max(1, cfg.batch_size);
    const double out_scale = net.normalization().output_scale;
    const double jw = cfg.pretrain_jacobian_weight;

    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<Vec2> pts;
    CoordinateNet::Batch batch;
    CoordinateNet::Gradients grads;
    std::uniform_real_distribution<double> jitter(-0.5, 0.5);
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(std::max(epochs, 0)));

    const long long warmup_steps = static_cast<long long>(cfg.warmup_epochs) *
                                   ((static_cast<long long>(samples.size()) + batch_size - 1) / batch_size);
    long long step = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        const double lr0 = objective == Objective::identity ? cfg.pretrain_lr : cfg.lr_initial;
        const double epoch_lr = net::cosine_lr(lr0, cfg.lr_final_ratio, epoch, epochs);
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t end = std::min(order.size(), start + batch_size);
            const int n = static_cast<int>(end - start);
            pts.resize(n);
            for (int i = 0; i < n; ++i) {
                pts[i] = samples[order[start + i]].pixel;
                if (cfg.jitter) {
                    pts[i].x += jitter(rng);
                    pts[i].y += jitter(rng);
                }
            }
            net.forward_batch(pts, tangents, batch);

            Eigen::MatrixXd out_grad = Eigen::MatrixXd::Zero(2, tangents ? 3 * n : n);
            double batch_loss = 0.0;
            for (int i = 0; i < n; ++i) {
                const Sample& s = samples[order[start + i]];
                if (objective == Objective::identity) {
                    const double du = batch.uv(0, i) - pts[i].x;
                    const double dv = batch.uv(1, i) - pts[i].y;
                    const Mat2 dj = batch.jacobian(i) - Mat2::Identity();
                    batch_loss += du * du + dv * dv + jw * dj.squaredNorm();
                    out_grad(0, i) = 2.0 * out_scale * du / n;
                    out_grad(1, i) = 2.0 * out_scale * dv / n;
                    out_grad.col(n + i) = (2.0 * jw * batch.jac_scale / n) * dj.col(0);
                    out_grad.col(2 * n + i) = (2.0 * jw * batch.jac_scale / n) * dj.col(1);
                } else {
                    const Mat2 j = batch.jacobian(i);
                    Mat2 a = j.transpose() * j;
                    a(0, 0) -= s.metric.g11;
                    a(0, 1) -= s.metric.g12;
                    a(1, 0) -= s.metric.g12;
                    a(1, 1) -= s.metric.g22;
                    batch_loss += a.squaredNorm();
                    const Mat2 dj = (4.0 * batch.jac_scale / n) * (j * a);
                    out_grad.col(n + i) = dj.col(0);
                    out_grad.col(2 * n + i) = dj.col(1);
                }
            }
            if (!std::isfinite(batch_loss)) {
                std::ostringstream msg;
                msg << "non-finite loss in "
                    << (objective == Objective::identity ? "pretraining" : "isometry training")
                    << " at epoch " << epoch << ", lr " << epoch_lr;
                throw Error(msg.str());
            }
            epoch_loss += batch_loss;
            for (auto& g : grads) {
                g.weight.setZero();
                g.bias.setZero();
            }
            net.backward(batch, std::move(out_grad), grads);
            const double lr = step < warmup_steps
                                  ? epoch_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps)
                                  : epoch_lr;
            adam.step(net, grads, lr);
            ++step;
        }
        trace.push_back(epoch_loss / static_cast<double>(samples.size()));
        if (on_epoch) on_epoch(net, objective == Objective::identity ? 0 : 1, epoch, trace.back());
    }
    return trace;
}

}  // namespace detail

struct PretrainResult {
    CoordinateNet net;
    std::vector<double> loss;
};

/// Fits the identity map g(x, y) = (x, y) on the valid pixels.
[[nodiscard]] inline PretrainResult pretrain(const MetricField& metric,
                                             const CoordinateNetConfig& config,
                                             const EpochCallback& on_epoch = {}) {
    const auto samples = detail::collect_samples(metric);
    CoordinateNet net(config, net::Normalization::for_grid(metric.width, metric.height));
    std::mt19937_64 rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
    auto loss = detail::run_phase(net, samples, detail::Objective::identity,
                                  config.pretrain_epochs, rng, on_epoch);
    return {std::move(net), std::move(loss)};
}

/// Evaluates the network on every valid pixel of `like`.
template <typename V>
[[nodiscard]] UVField evaluate_network(const CoordinateNet& net, const Field<V>& like) {
    UVField uv(like.width, like.height);
    std::vector<Vec2> pts;
    std::vector<std::size_t> where;
    for (int y = 0; y < like.height; ++y)
        for (int x = 0; x < like.width; ++x)
            if (like.is_valid(x, y)) {
                pts.push_back({static_cast<double>(x), static_cast<double>(y)});
                where.push_back(like.index(x, y));
            }
    CoordinateNet::Batch batch;
    constexpr std::size_t chunk = 1024;
    for (std::size_t start = 0; start < pts.size(); start += chunk) {
        const std::size_t n = std::min(chunk, pts.size() - start);
        net.forward_batch(std::span<const Vec2>(pts).subspan(start, n), false, batch);
        for (std::size_t i = 0; i < n; ++i) {
            uv.values[where[start + i]] = {batch.uv(0, static_cast<Eigen::Index>(i)),
                                           batch.uv(1, static_cast<Eigen::Index>(i))};
            uv.valid[where[start + i]] = 1;
        }
    }
    return uv;
}

struct NetworkSolution {
    UVField uv;
    SolveReport report;
    CoordinateNet net;
};

/// Pretrains to the identity, then minimizes the isometry loss through the
/// network Jacobian. Output is translated so the UV bounding box starts at 0.
[[nodiscard]] inline NetworkSolution solve_uv_network(const MetricField& metric,
                                                      const CoordinateNetConfig& config,
                                                      const EpochCallback& on_epoch = {}) {
    const auto samples = detail::collect_samples(metric);
    auto pre = pretrain(metric, config, on_epoch);
    std::mt19937_64 rng(config.seed ^ 0xD1B54A32D192ED03ULL);
    auto train = detail::run_phase(pre.net, samples, detail::Objective::isometry,
                                   config.train_epochs, rng, on_epoch);

    NetworkSolution out{evaluate_network(pre.net, metric), {}, std::move(pre.net)};
    normalize_uv(out.uv);
    out.report.pretrain_loss = std::move(pre.loss);
    out.report.train_loss = std::move(train);
    out.report.pretrain_epochs_run = config.pretrain_epochs;
    out.report.train_epochs_run = config.train_epochs;
    out.report.final_residual = residual_or_nan(out.uv, metric);
    return out;
}

// ---------------------------------------------------------------------------
// Grid route
// ---------------------------------------------------------------------------

struct GridSolverOptions {
    int iterations = 50;
    double regularization = 1e-8;  // Tikhonov term on the step, pins the rigid gauge
    double initial_damping = 1e-3;
    double tolerance = 1e-14;      // stop when the relative decrease falls below this
    int max_damping_escalations = 30;
};

namespace detail {

struct GridProblem {
    const MetricField& metric;
    UVField uv;
    std::vector<int> unknown;        // per pixel: unknown index or -1
    std::vector<std::size_t> pixels; // unknown -> pixel index
    std::size_t residual_pixels = 0;

    /// Stacked residuals [A11, sqrt2*A12, A22] per differentiable pixel and,
    /// optionally, their sparse Jacobian w.r.t. (u, v) of every unknown.
    double evaluate(Eigen::VectorXd* r, Eigen::SparseMatrix<double>* jac) {
        std::vector<Eigen::Triplet<double>> trips;
        std::vector<double> res;
        residual_pixels = 0;
        const double s2 = std::sqrt(2.0);
        double sum = 0.0;
        for (int y = 0; y < uv.height; ++y) {
            for (int x = 0; x < uv.width; ++x) {
                if (!uv.is_valid(x, y)) continue;
                const auto sx = fd_stencil(uv, x, y, 1, 0);
                const auto sy = fd_stencil(uv, x, y, 0, 1);
                if (!sx || !sy) continue;
                const Vec2& xp = uv.values[sx->plus];
                const Vec2& xm = uv.values[sx->minus];
                const Vec2& yp = uv.values[sy->plus];
                const Vec2& ym = uv.values[sy->minus];
                const Eigen::Vector2d a(sx->weight * (xp.x - xm.x), sx->weight * (xp.y - xm.y));
                const Eigen::Vector2d b(sy->weight * (yp.x - ym.x), sy->weight * (yp.y - ym.y));
                const Metric2& g = metric.at(x, y);
                const double r11 = a.dot(a) - g.g11;
                const double r12 = s2 * (a.dot(b) - g.g12);
                const double r22 = b.dot(b) - g.g22;
                sum += r11 * r11 + r12 * r12 + r22 * r22;
                const int row = static_cast<int>(res.size());
                res.insert(res.end(), {r11, r12, r22});
                ++residual_pixels;
                if (!jac) continue;
                // d a / d uv(plus) = +w, d a / d uv(minus) = -w (per component).
                auto emit = [&](const Stencil& st, const Eigen::Vector2d& coef11,
                                const Eigen::Vector2d& coef12, const Eigen::Vector2d& coef22) {
                    for (int side = 0; side < 2; ++side) {
                        const std::size_t pix = side == 0 ? st.plus : st.minus;
                        const double w = side == 0 ? st.weight : -st.weight;
                        const int k = unknown[pix];
                        for (int c = 0; c < 2; ++c) {
                            const int col = 2 * k + c;
                            if (coef11(c) != 0.0) trips.emplace_back(row, col, w * coef11(c));
                            if (coef12(c) != 0.0) trips.emplace_back(row + 1, col, w * coef12(c));
                            if (coef22(c) != 0.0) trips.emplace_back(row + 2, col, w * coef22(c));
                        }
                    }
                };
                const Eigen::Vector2d zero = Eigen::Vector2d::Zero();
                emit(*sx, 2.0 * a, s2 * b, zero);
                emit(*sy, zero, s2 * a, 2.0 * b);
            }
        }
        if (r) *r = Eigen::Map<Eigen::VectorXd>(res.data(), static_cast<Eigen::Index>(res.size()));
        if (jac) {
            jac->resize(static_cast<Eigen::Index>(res.size()),
                        static_cast<Eigen::Index>(2 * pixels.size()));
            jac->setFromTriplets(trips.begin(), trips.end());
        }
        return sum;
    }
};

}  // namespace detail

/// Damped Gauss-Newton on per-pixel (u, v), initialized at the identity map.
[[nodiscard]] inline UVSolution solve_uv_grid(const MetricField& metric,
                                              const GridSolverOptions& opts = {}) {
    if (opts.iterations < 1) throw Error("solve_uv_grid: iterations must be >= 1");
    detail::GridProblem prob{metric, identity_uv(metric), {}, {}, 0};
    prob.unknown.assign(metric.size(), -1);
    for (std::size_t i = 0; i < metric.size(); ++i) {
        if (!metric.valid[i]) continue;
        prob.unknown[i] = static_cast<int>(prob.pixels.size());
        prob.pixels.push_back(i);
    }
    if (prob.pixels.empty()) throw Error("no valid pixels in metric field");

    Eigen::VectorXd r;
    Eigen::SparseMatrix<double> jac;
    double cost = prob.evaluate(&r, &jac);
    if (prob.residual_pixels == 0) throw Error("solve_uv_grid: no differentiable pixels");
    const auto npix = static_cast<double>(prob.residual_pixels);

    SolveReport report;
    report.train_loss.push_back(cost / npix);
    double damping = opts.initial_damping;
    const auto nunk = static_cast<Eigen::Index>(2 * prob.pixels.size());
    Eigen::SparseMatrix<double> eye(nunk, nunk);
    eye.setIdentity();
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;

    for (int it = 0; it < opts.iterations && cost > 0.0; ++it) {
        const Eigen::SparseMatrix<double> jtj = jac.transpose() * jac;
        const Eigen::VectorXd grad = jac.transpose() * r;
        bool accepted = false;
        for (int esc = 0; esc < opts.max_damping_escalations; ++esc) {
            const Eigen::SparseMatrix<double> lhs = jtj + (damping + opts.regularization) * eye;
            ldlt.compute(lhs);
            if (ldlt.info() != Eigen::Success) {
                damping *= 10.0;
                continue;
            }
            const Eigen::VectorXd step = ldlt.solve(-grad);
            UVField trial = prob.uv;
            for (std::size_t k = 0; k < prob.pixels.size(); ++k) {
                trial.values[prob.pixels[k]].x += step(static_cast<Eigen::Index>(2 * k));
                trial.values[prob.pixels[k]].y += step(static_cast<Eigen::Index>(2 * k + 1));
            }
            std::swap(trial, prob.uv);
            const double trial_cost = prob.evaluate(nullptr, nullptr);
            if (std::isfinite(trial_cost) && trial_cost <= cost) {
                accepted = true;
                damping = std::max(damping / 3.0, 1e-12);
                const double prev = cost;
                cost = prob.evaluate(&r, &jac);
                report.train_loss.push_back(cost / npix);
                ++report.train_epochs_run;
                if (prev - cost <= opts.tolerance * prev) it = opts.iterations;
                break;
            }
            std::swap(trial, prob.uv);
            damping *= 4.0;
        }
        if (!accepted) {
            if (ldlt.info() != Eigen::Success)
                throw Error("solve_uv_grid: singular normal equations after damping escalation");
            break;  // no descent direction left at any damping: converged
        }
    }

    UVSolution out{std::move(prob.uv), std::move(report)};
    normalize_uv(out.uv);
    out.report.final_residual = isometry_residual(out.uv, metric);
    return out;
}

}  // namespace pelage::uv
