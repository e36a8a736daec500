#pragma once
// Similarity of two equally sized RGB images on luminance.

#include <cmath>
#include <vector>

#include "pelage/field.hpp"

namespace pelage::metrics {

[[nodiscard]] inline std::vector<double> luminance(const RgbImage& img) {
    std::vector<double> out(img.pixels.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const Rgb8& p = img.pixels[i];
        out[i] = 0.299 * p.r + 0.587 * p.g + 0.114 * p.b;
    }
    return out;
}

/// Normalized cross-correlation; 0 when either image is constant.
[[nodiscard]] inline double ncc(const RgbImage& a, const RgbImage& b) {
    if (a.width != b.width || a.height != b.height) throw Error("ncc: image sizes differ");
    const auto la = luminance(a), lb = luminance(b);
    const double n = static_cast<double>(la.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < la.size(); ++i) {
        ma += la[i];
        mb += lb[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < la.size(); ++i) {
        sab += (la[i] - ma) * (lb[i] - mb);
        saa += (la[i] - ma) * (la[i] - ma);
        sbb += (lb[i] - mb) * (lb[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

/// Mean SSIM over 7x7 uniform windows (K1 = 0.01, K2 = 0.03, L = 255).
[[nodiscard]] inline double ssim(const RgbImage& a, const RgbImage& b, int radius = 3) {
    if (a.width != b.width || a.height != b.height) throw Error("ssim: image sizes differ");
    const int w = a.width, h = a.height;
    if (w < 2 * radius + 1 || h < 2 * radius + 1) throw Error("ssim: image smaller than the window");
    const auto la = luminance(a), lb = luminance(b);
    const double c1 = (0.01 * 255) * (0.01 * 255), c2 = (0.03 * 255) * (0.03 * 255);
    const double count = double(2 * radius + 1) * (2 * radius + 1);
    double total = 0.0;
    int windows = 0;
    for (int y = radius; y + radius < h; ++y)
        for (int x = radius; x + radius < w; ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int dy = -radius; dy <= radius; ++dy)
                for (int dx = -radius; dx <= radius; ++dx) {
                    const std::size_t i = static_cast<std::size_t>(y + dy) * w + (x + dx);
                    ma += la[i];
                    mb += lb[i];
                    saa += la[i] * la[i];
                    sbb += lb[i] * lb[i];
                    sab += la[i] * lb[i];
                }
            ma /= count;
            mb /= count;
            const double va = saa / count - ma * ma, vb = sbb / count - mb * mb, cov = sab / count - ma * mb;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++windows;
        }
    return total / windows;
}

}  // namespace pelage::metrics
