#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "sr/tensor.hpp"

namespace sr {

enum class PadMode { mirror, zero };

// Per-side spatial padding amounts for a (channels, height, width) tensor.
struct PadSpec {
    int top = 0;
    int bottom = 0;
    int left = 0;
    int right = 0;
    PadMode mode = PadMode::mirror;
};

// Padding that makes a valid convolution return an output of extent h (resp.
// w): the padded extent is s*h + k - 1, i.e. the total pad along an axis is
// (s - 1)*h + k - 1.  Odd totals put the extra row/column on the bottom/right.
inline PadSpec same_pad_spec(int h, int w, const ConvKernel& k,
                             PadMode mode = PadMode::mirror) {
    if (h < 1 || w < 1)
        throw std::invalid_argument("same_pad_spec: extents must be positive");
    const int pad_h = (k.stride_h - 1) * h + k.kh() - 1;
    const int pad_w = (k.stride_w - 1) * w + k.kw() - 1;
    PadSpec s;
    s.top = pad_h / 2;
    s.bottom = pad_h - s.top;
    s.left = pad_w / 2;
    s.right = pad_w - s.left;
    s.mode = mode;
    if (mode == PadMode::mirror) {
        if (s.top > h || s.bottom > h)
            throw std::invalid_argument(
                "same_pad_spec: mirror pad of " + std::to_string(s.bottom) +
                " exceeds height " + std::to_string(h));
        if (s.left > w || s.right > w)
            throw std::invalid_argument(
                "same_pad_spec: mirror pad of " + std::to_string(s.right) +
                " exceeds width " + std::to_string(w));
    }
    return s;
}

namespace detail {

// Maps a padded-axis offset q (which may run past either end) to a source
// index under edge-inclusive mirroring: ..., src[1], src[0] | src[0..n-1] |
// src[n-1], src[n-2], ...  Requires the overhang to be at most n.
inline int mirror_index(int q, int n) {
    if (q < 0) return -q - 1;
    if (q >= n) return 2 * n - 1 - q;
    return q;
}

inline void check_pad_legal(const Tensor& t, const PadSpec& s) {
    if (t.rank() != 3)
        throw std::invalid_argument("pad expects a (channels, height, width) tensor");
    if (s.top < 0 || s.bottom < 0 || s.left < 0 || s.right < 0)
        throw std::invalid_argument("pad: negative pad amount");
    if (s.mode == PadMode::mirror) {
        const int h = t.height(), w = t.width();
        if (s.top > h || s.bottom > h || s.left > w || s.right > w)
            throw std::invalid_argument(
                "pad: mirror pad exceeds the source extent (pad " +
                std::to_string(std::max({s.top, s.bottom, s.left, s.right})) +
                ", extents " + std::to_string(h) + "x" + std::to_string(w) + ")");
    }
}

}  // namespace detail

inline Tensor pad(const Tensor& t, const PadSpec& s) {
    detail::check_pad_legal(t, s);
    const int c_n = t.channels(), h = t.height(), w = t.width();
    Tensor out({c_n, h + s.top + s.bottom, w + s.left + s.right});
    const int oh = out.height(), ow = out.width();
    for (int c = 0; c < c_n; ++c) {
        for (int i = 0; i < oh; ++i) {
            const int qi = i - s.top;
            const bool row_in = qi >= 0 && qi < h;
            if (s.mode == PadMode::zero && !row_in) continue;
            const int si = s.mode == PadMode::mirror ? detail::mirror_index(qi, h) : qi;
            for (int j = 0; j < ow; ++j) {
                const int qj = j - s.left;
                if (s.mode == PadMode::zero) {
                    if (qj < 0 || qj >= w) continue;
                    out(c, i, j) = t(c, si, qj);
                } else {
                    out(c, i, j) = t(c, si, detail::mirror_index(qj, w));
                }
            }
        }
    }
    return out;
}

// Adjoint of pad: folds a gradient on the padded tensor back onto the source.
// Mirrored positions accumulate into the cell they were copied from; zero
// padding simply crops.
inline Tensor pad_backward(const Tensor& grad_padded, const PadSpec& s,
                           const std::vector<int>& src_dims) {
    if (src_dims.size() != 3)
        throw std::invalid_argument("pad_backward expects (channels, height, width) source dims");
    const int c_n = src_dims[0], h = src_dims[1], w = src_dims[2];
    if (grad_padded.dims !=
        std::vector<int>{c_n, h + s.top + s.bottom, w + s.left + s.right})
        throw std::invalid_argument("pad_backward: padded gradient shape does not match the pad spec");
    Tensor g({c_n, h, w});
    const int oh = grad_padded.height(), ow = grad_padded.width();
    for (int c = 0; c < c_n; ++c) {
        for (int i = 0; i < oh; ++i) {
            const int qi = i - s.top;
            const bool row_in = qi >= 0 && qi < h;
            if (s.mode == PadMode::zero && !row_in) continue;
            const int si = s.mode == PadMode::mirror ? detail::mirror_index(qi, h) : qi;
            for (int j = 0; j < ow; ++j) {
                const int qj = j - s.left;
                if (s.mode == PadMode::zero) {
                    if (qj < 0 || qj >= w) continue;
                    g(c, si, qj) += grad_padded(c, i, j);
                } else {
                    g(c, si, detail::mirror_index(qj, w)) += grad_padded(c, i, j);
                }
            }
        }
    }
    return g;
}

}  // namespace sr
