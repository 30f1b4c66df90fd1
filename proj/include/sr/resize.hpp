#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "sr/tensor.hpp"

namespace sr {

namespace detail {

// Keys cubic-convolution kernel with a = -0.5 (Catmull-Rom).
inline double cubic_kernel(double x) {
    x = std::abs(x);
    if (x <= 1.0) return (1.5 * x - 2.5) * x * x + 1.0;
    if (x < 2.0) return ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0;
    return 0.0;
}

// Precomputed resampling row: the contributing source indices (edge-clamped)
// and their normalized weights for one output position.
struct ResampleRow {
    int first = 0;
    std::vector<double> weights;
};

// Center-aligned sampling: output pixel i maps to source coordinate
// (i + 0.5)/scale - 0.5.  When minifying, the kernel is widened by 1/scale and
// scaled accordingly (antialiasing), matching the convention under which the
// standard SR baselines are quoted.
inline std::vector<ResampleRow> resample_plan(int in_len, int out_len,
                                              double scale) {
    const double kscale = scale < 1.0 ? scale : 1.0;
    const double support = 2.0 / kscale;
    std::vector<ResampleRow> plan(static_cast<std::size_t>(out_len));
    for (int i = 0; i < out_len; ++i) {
        const double center = (i + 0.5) / scale - 0.5;
        const int first = static_cast<int>(std::floor(center - support)) + 1;
        const int last = static_cast<int>(std::floor(center + support));
        ResampleRow row;
        row.first = first;
        row.weights.resize(static_cast<std::size_t>(last - first + 1));
        double sum = 0.0;
        for (int s = first; s <= last; ++s) {
            const double w = kscale * cubic_kernel(kscale * (center - s));
            row.weights[static_cast<std::size_t>(s - first)] = w;
            sum += w;
        }
        if (sum != 0.0)
            for (double& w : row.weights) w /= sum;
        plan[static_cast<std::size_t>(i)] = std::move(row);
    }
    return plan;
}

inline int scaled_extent(int in_len, double scale) {
    // ceil(in*scale), guarded against dust just below an exact integer
    // product (e.g. 33 * (1.0/3)).
    return static_cast<int>(std::ceil(in_len * scale - 1e-9));
}

}  // namespace detail

// Separable cubic-convolution resampling of a (channels, height, width) image.
// Border samples are edge-clamped; each output weight row is normalized so
// constant images stay constant.
inline Tensor bicubic_resize(const Tensor& image, double scale) {
    if (image.rank() != 3)
        throw std::invalid_argument("bicubic_resize expects a (channels, height, width) image");
    if (!(scale > 0.0)) throw std::invalid_argument("bicubic_resize: scale must be positive");
    const int c_n = image.channels(), h = image.height(), w = image.width();
    const int out_h = detail::scaled_extent(h, scale);
    const int out_w = detail::scaled_extent(w, scale);
    if (out_h < 1 || out_w < 1)
        throw std::invalid_argument("bicubic_resize: output extent would be smaller than one pixel");

    const auto rows = detail::resample_plan(h, out_h, scale);
    const auto cols = detail::resample_plan(w, out_w, scale);

    // Vertical pass: (c, h, w) -> (c, out_h, w).
    Tensor mid({c_n, out_h, w});
    for (int c = 0; c < c_n; ++c)
        for (int i = 0; i < out_h; ++i) {
            const auto& row = rows[static_cast<std::size_t>(i)];
            for (int j = 0; j < w; ++j) {
                double acc = 0.0;
                for (std::size_t s = 0; s < row.weights.size(); ++s) {
                    const int src = std::clamp(row.first + static_cast<int>(s), 0, h - 1);
                    acc += row.weights[s] * image(c, src, j);
                }
                mid(c, i, j) = acc;
            }
        }

    // Horizontal pass: (c, out_h, w) -> (c, out_h, out_w).
    Tensor out({c_n, out_h, out_w});
    for (int c = 0; c < c_n; ++c)
        for (int i = 0; i < out_h; ++i)
            for (int j = 0; j < out_w; ++j) {
                const auto& col = cols[static_cast<std::size_t>(j)];
                double acc = 0.0;
                for (std::size_t s = 0; s < col.weights.size(); ++s) {
                    const int src = std::clamp(col.first + static_cast<int>(s), 0, w - 1);
                    acc += col.weights[s] * mid(c, i, src);
                }
                out(c, i, j) = acc;
            }
    return out;
}

// Crops trailing rows/columns so both extents are multiples of the scale
// factor, the standard preparation before a degrade-and-restore evaluation.
inline Tensor modcrop(const Tensor& image, int scale) {
    if (image.rank() != 3)
        throw std::invalid_argument("modcrop expects a (channels, height, width) image");
    if (scale < 1) throw std::invalid_argument("modcrop: scale must be at least 1");
    const int h = image.height() - image.height() % scale;
    const int w = image.width() - image.width() % scale;
    if (h < 1 || w < 1) throw std::invalid_argument("modcrop: image smaller than the scale factor");
    Tensor out({image.channels(), h, w});
    for (int c = 0; c < image.channels(); ++c)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) out(c, i, j) = image(c, i, j);
    return out;
}

}  // namespace sr
