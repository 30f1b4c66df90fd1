#pragma once

// Reference implementations used as test oracles.  These are written for
// obviousness, not speed, and deliberately share no code with the library.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "sr/rng.hpp"
#include "sr/tensor.hpp"

namespace oracle {

// Direct-loop valid cross-correlation, indexing the flat arrays explicitly.
inline sr::Tensor conv_reference(const sr::Tensor& input, const sr::ConvKernel& k) {
    const int c_out = k.out_channels(), c_in = k.in_channels();
    const int kh = k.kh(), kw = k.kw();
    const int h = input.height(), w = input.width();
    const int out_h = (h - kh) / k.stride_h + 1;
    const int out_w = (w - kw) / k.stride_w + 1;
    sr::Tensor out({c_out, out_h, out_w});
    const double* wt = k.weights.data.data();
    const double* in = input.data.data();
    for (int o = 0; o < c_out; ++o)
        for (int y = 0; y < out_h; ++y)
            for (int x = 0; x < out_w; ++x) {
                double s = k.bias[o];
                for (int c = 0; c < c_in; ++c)
                    for (int i = 0; i < kh; ++i)
                        for (int j = 0; j < kw; ++j)
                            s += wt[((static_cast<std::size_t>(o) * c_in + c) * kh + i) * kw + j] *
                                 in[(static_cast<std::size_t>(c) * h + y * k.stride_h + i) * w +
                                    x * k.stride_w + j];
                out(o, y, x) = s;
            }
    return out;
}

inline void fill_uniform(sr::Tensor& t, sr::Rng& rng, double lo = -1.0,
                         double hi = 1.0) {
    for (double& v : t.data) v = lo + (hi - lo) * rng.next_unit();
}

inline void fill_uniform(std::vector<double>& v, sr::Rng& rng, double lo = -1.0,
                         double hi = 1.0) {
    for (double& x : v) x = lo + (hi - lo) * rng.next_unit();
}

// Central finite difference of f around x with step eps.
inline double central_diff(const std::function<double(double)>& f, double x,
                           double eps = 1e-6) {
    return (f(x + eps) - f(x - eps)) / (2.0 * eps);
}

// Relative error robust to tiny magnitudes.
inline double rel_err(double got, double want) {
    return std::abs(got - want) / std::max({std::abs(got), std::abs(want), 1e-8});
}

}  // namespace oracle
