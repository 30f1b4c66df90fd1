#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "sr/tensor.hpp"

namespace sr {

// Peak signal-to-noise ratio in dB: 10*log10((2^bits - 1)^2 / MSE), with the
// inputs already expressed in the [0, 2^bits - 1] domain.  Identical images
// return +infinity (serialized downstream as the literal "inf").
inline double psnr(const Tensor& y, const Tensor& y_hat, int bits = 8) {
    if (bits < 1) throw std::invalid_argument("psnr: bits must be at least 1");
    const double m = mse(y, y_hat);  // also rejects extent mismatches
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    const double peak = std::pow(2.0, bits) - 1.0;
    return 10.0 * std::log10(peak * peak / m);
}

// Full-range BT.601 luma: Y = 0.299 R + 0.587 G + 0.114 B, scale-preserving
// (white stays at the input white level).
inline Tensor to_luma(const Tensor& rgb) {
    if (rgb.rank() != 3 || rgb.channels() != 3)
        throw std::invalid_argument("to_luma expects a (3, height, width) image");
    Tensor y({1, rgb.height(), rgb.width()});
    for (int i = 0; i < rgb.height(); ++i)
        for (int j = 0; j < rgb.width(); ++j)
            y(0, i, j) = 0.299 * rgb(0, i, j) + 0.587 * rgb(1, i, j) + 0.114 * rgb(2, i, j);
    return y;
}

// Studio-swing (16-235) BT.601 luma of an RGB image given in [0,1], returned
// in 8-bit units.  This is the Y channel produced by the common MATLAB-lineage
// evaluation scripts, against which the published SR baselines are quoted.
inline Tensor ycbcr_luma(const Tensor& rgb01) {
    if (rgb01.rank() != 3 || rgb01.channels() != 3)
        throw std::invalid_argument("ycbcr_luma expects a (3, height, width) image");
    Tensor y({1, rgb01.height(), rgb01.width()});
    for (int i = 0; i < rgb01.height(); ++i)
        for (int j = 0; j < rgb01.width(); ++j)
            y(0, i, j) = 16.0 + 65.481 * rgb01(0, i, j) + 128.553 * rgb01(1, i, j) +
                         24.966 * rgb01(2, i, j);
    return y;
}

namespace detail {

inline std::vector<double> gaussian_window_1d(int size, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(size));
    const double c = (size - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        w[static_cast<std::size_t>(i)] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
        sum += w[static_cast<std::size_t>(i)];
    }
    for (double& v : w) v /= sum;
    return w;
}

// Valid-region separable filtering of a single-channel image.
inline Tensor filter_valid(const Tensor& img, const std::vector<double>& win) {
    const int k = static_cast<int>(win.size());
    const int h = img.height(), w = img.width();
    const int oh = h - k + 1, ow = w - k + 1;
    Tensor mid({1, oh, w});
    for (int i = 0; i < oh; ++i)
        for (int j = 0; j < w; ++j) {
            double s = 0.0;
            for (int t = 0; t < k; ++t) s += win[static_cast<std::size_t>(t)] * img(0, i + t, j);
            mid(0, i, j) = s;
        }
    Tensor out({1, oh, ow});
    for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
            double s = 0.0;
            for (int t = 0; t < k; ++t) s += win[static_cast<std::size_t>(t)] * mid(0, i, j + t);
            out(0, i, j) = s;
        }
    return out;
}

}  // namespace detail

// Structural similarity between two single-channel images in the [0,255]
// domain: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, L = 255,
// averaged over the valid filter region.
inline double ssim(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || a.channels() != 1 || b.rank() != 3 || b.channels() != 1)
        throw std::invalid_argument("ssim expects single-channel images");
    detail::check_same_shape(a, b, "ssim");
    constexpr int kWindow = 11;
    if (a.height() < kWindow || a.width() < kWindow)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");
    const auto win = detail::gaussian_window_1d(kWindow, 1.5);

    Tensor a2({1, a.height(), a.width()}), b2(a2.dims), ab(a2.dims);
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        a2.data[i] = a.data[i] * a.data[i];
        b2.data[i] = b.data[i] * b.data[i];
        ab.data[i] = a.data[i] * b.data[i];
    }
    const Tensor mu_a = detail::filter_valid(a, win);
    const Tensor mu_b = detail::filter_valid(b, win);
    const Tensor s_a2 = detail::filter_valid(a2, win);
    const Tensor s_b2 = detail::filter_valid(b2, win);
    const Tensor s_ab = detail::filter_valid(ab, win);

    constexpr double kL = 255.0;
    constexpr double c1 = (0.01 * kL) * (0.01 * kL);
    constexpr double c2 = (0.03 * kL) * (0.03 * kL);
    double sum = 0.0;
    for (std::size_t i = 0; i < mu_a.data.size(); ++i) {
        const double ma = mu_a.data[i], mb = mu_b.data[i];
        const double va = s_a2.data[i] - ma * ma;
        const double vb = s_b2.data[i] - mb * mb;
        const double cov = s_ab.data[i] - ma * mb;
        sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return sum / static_cast<double>(mu_a.data.size());
}

// Boundary-to-interior gradient ratio quantifying tile-seam severity.  B is
// the mean absolute difference over pixel pairs straddling a tile boundary
// (columns/rows at multiples of t); A is the same mean over all other adjacent
// pairs; the result is B / (A + 1e-6).  Values near 1 mean the boundaries are
// statistically indistinguishable from the interior.
inline double seam_index(const Tensor& image, int t) {
    if (image.rank() != 3)
        throw std::invalid_argument("seam_index expects a (channels, height, width) image");
    if (t < 1) throw std::invalid_argument("seam_index: tile size must be positive");
    const int h = image.height(), w = image.width();
    if (t >= h || t >= w)
        throw std::invalid_argument("seam_index: tile size " + std::to_string(t) +
                                    " must be smaller than both image extents (" +
                                    std::to_string(h) + "x" + std::to_string(w) + ")");
    double boundary_sum = 0.0, interior_sum = 0.0;
    std::size_t boundary_n = 0, interior_n = 0;
    for (int c = 0; c < image.channels(); ++c) {
        // Horizontal neighbours (p at column j-1, q at column j).
        for (int i = 0; i < h; ++i)
            for (int j = 1; j < w; ++j) {
                const double d = std::abs(image(c, i, j) - image(c, i, j - 1));
                if (j % t == 0) {
                    boundary_sum += d;
                    ++boundary_n;
                } else {
                    interior_sum += d;
                    ++interior_n;
                }
            }
        // Vertical neighbours.
        for (int i = 1; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                const double d = std::abs(image(c, i, j) - image(c, i - 1, j));
                if (i % t == 0) {
                    boundary_sum += d;
                    ++boundary_n;
                } else {
                    interior_sum += d;
                    ++interior_n;
                }
            }
    }
    const double b = boundary_sum / static_cast<double>(boundary_n);
    const double a = interior_sum / static_cast<double>(interior_n);
    return b / (a + 1e-6);
}

}  // namespace sr
