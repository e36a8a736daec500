#pragma once
// Fourier-feature coordinate MLP with exact input Jacobians.
//
// Every activation is carried together with its two tangents (derivatives
// with respect to pixel x and pixel y). A batch of B samples is stored as a
// matrix with 3B columns laid out [values | d/dx | d/dy], so one GEMM per
// layer propagates all three, and the ReLU mask of the value block gates
// every block. Backpropagating a loss that depends on the tangents therefore
// costs the same as ordinary backprop on a 3x wider batch.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "pelage/field.hpp"

namespace pelage::net {

struct CoordinateNetConfig {
    int fourier_bands = 6;
    double fourier_sigma = 1.0;
    int hidden_width = 64;
    int hidden_layers = 6;
    int pretrain_epochs = 100;
    int train_epochs = 300;
    double lr_initial = 1e-5;      // isometry training phase
    double pretrain_lr = 5e-4;     // identity pretraining phase
    double lr_final_ratio = 0.01;  // cosine floor = lr_initial * ratio
    double pretrain_jacobian_weight = 10.0;  // weight of |J - I|^2 in the pretraining loss
    int warmup_epochs = 5;         // linear ramp at the start of each phase
    int batch_size = 256;          // isometry training phase
    int pretrain_batch_size = 0;   // 0: one step per 256 samples, capped at 16
    bool jitter = true;            // sample uniformly inside each pixel, not at its centre
    std::uint64_t seed = 20250101;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    [[nodiscard]] int encoding_size() const noexcept { return 2 + 4 * fourier_bands; }
};

using Mat2 = Eigen::Matrix2d;

/// Affine map between pixel coordinates and the network's normalized space:
/// s = (x - input_center) / input_scale, uv = output_center + output_scale * o.
struct Normalization {
    Vec2 input_center;
    double input_scale = 1.0;
    Vec2 output_center;
    double output_scale = 1.0;

    /// Maps the pixel grid of a width x height field onto [-1, 1] along its longer side.
    [[nodiscard]] static Normalization for_grid(int width, int height) {
        const double half = 0.5 * std::max(width - 1, height - 1);
        const double scale = half > 0.0 ? half : 1.0;
        const Vec2 c{0.5 * (width - 1), 0.5 * (height - 1)};
        return {c, scale, c, scale};
    }
};

struct DenseLayer {
    Eigen::MatrixXd weight;
    Eigen::VectorXd bias;
};

class CoordinateNet {
public:
    CoordinateNet() = default;

    CoordinateNet(const CoordinateNetConfig& config, Normalization norm)
        : config_(config), norm_(norm) {
        if (config.fourier_bands < 1) throw Error("fourier_bands must be >= 1");
        if (config.hidden_layers < 1 || config.hidden_width < 1)
            throw Error("network needs at least one hidden layer of positive width");
        std::mt19937_64 rng(config.seed);
        std::normal_distribution<double> gauss(0.0, 1.0);

        freqs_.resize(config.fourier_bands, 2);
        for (int k = 0; k < config.fourier_bands; ++k)
            for (int j = 0; j < 2; ++j) freqs_(k, j) = config.fourier_sigma * gauss(rng);

        int fan_in = config.encoding_size();
        for (int l = 0; l <= config.hidden_layers; ++l) {
            const bool output = l == config.hidden_layers;
            const int fan_out = output ? 2 : config.hidden_width;
            // He initialization for ReLU layers, Glorot-scaled linear head.
            const double stddev = output ? std::sqrt(1.0 / fan_in) : std::sqrt(2.0 / fan_in);
            DenseLayer layer{Eigen::MatrixXd(fan_out, fan_in), Eigen::VectorXd::Zero(fan_out)};
            for (int r = 0; r < fan_out; ++r)
                for (int c = 0; c < fan_in; ++c) layer.weight(r, c) = stddev * gauss(rng);
            layers_.push_back(std::move(layer));
            fan_in = fan_out;
        }
    }

    [[nodiscard]] const CoordinateNetConfig& config() const noexcept { return config_; }
    [[nodiscard]] const Normalization& normalization() const noexcept { return norm_; }
    void set_normalization(const Normalization& n) noexcept { norm_ = n; }
    [[nodiscard]] const Eigen::MatrixXd& frequencies() const noexcept { return freqs_; }
    [[nodiscard]] std::vector<DenseLayer>& layers() noexcept { return layers_; }
    [[nodiscard]] const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

    [[nodiscard]] std::size_t parameter_count() const noexcept {
        std::size_t n = 0;
        for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
        return n;
    }

    /// Encoding of a normalized coordinate: [s, sin(2 pi B_kj s_j), cos(2 pi B_kj s_j)].
    [[nodiscard]] Eigen::VectorXd encode(Vec2 s) const {
        const int bands = config_.fourier_bands;
        Eigen::VectorXd e(config_.encoding_size());
        e(0) = s.x;
        e(1) = s.y;
        for (int k = 0; k < bands; ++k) {
            for (int j = 0; j < 2; ++j) {
                const double a = 2.0 * std::numbers::pi * freqs_(k, j) * (j == 0 ? s.x : s.y);
                e(2 + 2 * k + j) = std::sin(a);
                e(2 + 2 * bands + 2 * k + j) = std::cos(a);
            }
        }
        return e;
    }

    /// Pixel-space forward pass.
    [[nodiscard]] Vec2 forward(Vec2 pixel) const {
        Batch batch;
        const std::array<Vec2, 1> pts{pixel};
        forward_batch(pts, false, batch);
        return {batch.uv(0, 0), batch.uv(1, 0)};
    }

    struct Evaluation {
        Vec2 uv;
        Mat2 jacobian;  // rows (u, v), columns (x, y), in pixel units
    };

    [[nodiscard]] Evaluation forward_with_jacobian(Vec2 pixel) const {
        Batch batch;
        const std::array<Vec2, 1> pts{pixel};
        forward_batch(pts, true, batch);
        return {{batch.uv(0, 0), batch.uv(1, 0)}, batch.jacobian(0)};
    }

    /// Cached activations of one batch. `acts[l]` is the input of layer l.
    struct Batch {
        int size = 0;
        bool tangents = false;
        std::vector<Eigen::MatrixXd> acts;
        std::vector<Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>> masks;
        Eigen::MatrixXd out;  // 2 x (B or 3B), normalized output space
        Eigen::MatrixXd uv;   // 2 x B, pixel units
        double jac_scale = 1.0;

        [[nodiscard]] Mat2 jacobian(int i) const {
            Mat2 j;
            j.col(0) = jac_scale * out.col(size + i);
            j.col(1) = jac_scale * out.col(2 * size + i);
            return j;
        }
    };

    void forward_batch(std::span<const Vec2> pixels, bool with_tangents, Batch& batch) const {
        const int n = static_cast<int>(pixels.size());
        const int cols = with_tangents ? 3 * n : n;
        const int bands = config_.fourier_bands;
        batch.size = n;
        batch.tangents = with_tangents;
        batch.acts.resize(layers_.size());
        batch.masks.resize(layers_.size() - 1);

        Eigen::MatrixXd& x0 = batch.acts[0];
        x0.setZero(config_.encoding_size(), cols);
        const double inv = 1.0 / norm_.input_scale;
        for (int i = 0; i < n; ++i) {
            const double s[2] = {(pixels[i].x - norm_.input_center.x) * inv,
                                 (pixels[i].y - norm_.input_center.y) * inv};
            x0(0, i) = s[0];
            x0(1, i) = s[1];
            if (with_tangents) {
                x0(0, n + i) = inv;
                x0(1, 2 * n + i) = inv;
            }
            for (int k = 0; k < bands; ++k) {
                for (int j = 0; j < 2; ++j) {
                    const double w = 2.0 * std::numbers::pi * freqs_(k, j);
                    const double a = w * s[j];
                    const double sn = std::sin(a);
                    const double cs = std::cos(a);
                    const int rs = 2 + 2 * k + j;
                    const int rc = 2 + 2 * bands + 2 * k + j;
                    x0(rs, i) = sn;
                    x0(rc, i) = cs;
                    if (with_tangents) {
                        const int col = (j == 0 ? n : 2 * n) + i;
                        x0(rs, col) = cs * w * inv;
                        x0(rc, col) = -sn * w * inv;
                    }
                }
            }
        }

        for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
            const DenseLayer& layer = layers_[l];
            Eigen::MatrixXd pre = layer.weight * batch.acts[l];
            pre.leftCols(n).colwise() += layer.bias;
            auto& mask = batch.masks[l];
            mask = pre.leftCols(n).array() > 0.0;
            for (int b = 0; b < cols / n; ++b)
                pre.middleCols(b * n, n) = mask.select(pre.middleCols(b * n, n), 0.0);
            batch.acts[l + 1] = std::move(pre);
        }
        const DenseLayer& head = layers_.back();
        batch.out = head.weight * batch.acts.back();
        batch.out.leftCols(n).colwise() += head.bias;

        batch.uv.resize(2, n);
        for (int i = 0; i < n; ++i) {
            batch.uv(0, i) = norm_.output_center.x + norm_.output_scale * batch.out(0, i);
            batch.uv(1, i) = norm_.output_center.y + norm_.output_scale * batch.out(1, i);
        }
        batch.jac_scale = norm_.output_scale;
    }

    /// Parameter gradients, same shapes as layers().
    using Gradients = std::vector<DenseLayer>;

    /// Backpropagates `out_grad` (gradient w.r.t. Batch::out, same shape) and
    /// accumulates into `grads`.
    void backward(const Batch& batch, Eigen::MatrixXd out_grad, Gradients& grads) const {
        const int n = batch.size;
        const int blocks = batch.tangents ? 3 : 1;
        if (grads.size() != layers_.size()) {
            grads.clear();
            for (const auto& l : layers_)
                grads.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                                 Eigen::VectorXd::Zero(l.bias.size())});
        }
        Eigen::MatrixXd upstream = std::move(out_grad);
        for (std::size_t l = layers_.size(); l-- > 0;) {
            if (l + 1 < layers_.size()) {
                const auto& mask = batch.masks[l];
                for (int b = 0; b < blocks; ++b)
                    upstream.middleCols(b * n, n) = mask.select(upstream.middleCols(b * n, n), 0.0);
            }
            grads[l].weight.noalias() += upstream * batch.acts[l].transpose();
            grads[l].bias += upstream.leftCols(n).rowwise().sum();
            if (l > 0) upstream = layers_[l].weight.transpose() * upstream;
        }
    }

private:
    CoordinateNetConfig config_;
    Normalization norm_;
    Eigen::MatrixXd freqs_;
    std::vector<DenseLayer> layers_;
};

/// Adam with externally scheduled step size.
class AdamOptimizer {
public:
    AdamOptimizer(const CoordinateNet& net, double beta1, double beta2, double eps)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& l : net.layers()) {
            m_.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                          Eigen::VectorXd::Zero(l.bias.size())});
            v_.push_back(m_.back());
        }
    }

    void step(CoordinateNet& net, const CoordinateNet::Gradients& grads, double lr) {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        auto& layers = net.layers();
        for (std::size_t l = 0; l < layers.size(); ++l) {
            update(layers[l].weight.array(), grads[l].weight.array(), m_[l].weight.array(),
                   v_[l].weight.array(), lr, c1, c2);
            update(layers[l].bias.array(), grads[l].bias.array(), m_[l].bias.array(),
                   v_[l].bias.array(), lr, c1, c2);
        }
    }

private:
    template <typename P, typename G, typename M>
    void update(P&& param, const G& grad, M&& m, M&& v, double lr, double c1, double c2) const {
        m = beta1_ * m + (1.0 - beta1_) * grad;
        v = beta2_ * v + (1.0 - beta2_) * grad.square();
        param -= lr * (m / c1) / ((v / c2).sqrt() + eps_);
    }

    double beta1_, beta2_, eps_;
    long long t_ = 0;
    std::vector<DenseLayer> m_, v_;
};

/// Minibatch size used while fitting the identity.
[[nodiscard]] inline int pretrain_batch(const CoordinateNetConfig& config, std::size_t samples) {
    if (config.pretrain_batch_size > 0) return config.pretrain_batch_size;
    return static_cast<int>(std::clamp<std::size_t>(samples / 256, 1, 16));
}

/// Cosine annealing from lr0 to lr0 * floor_ratio over `epochs` epochs.
[[nodiscard]] inline double cosine_lr(double lr0, double floor_ratio, int epoch, int epochs) {
    if (epochs <= 1) return lr0;
    const double lr_min = lr0 * floor_ratio;
    const double t = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace pelage::net
