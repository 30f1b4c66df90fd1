#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef SR_USE_CBLAS
#include <cblas.h>
#endif

namespace sr {

// Dense row-major tensor of doubles.  Images are (channels, height, width);
// convolution weights are (out_channels, in_channels, kh, kw).
struct Tensor {
    std::vector<int> dims;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> d) : dims(std::move(d)) {
        data.assign(numel_of(dims), 0.0);
    }
    Tensor(std::vector<int> d, std::vector<double> v)
        : dims(std::move(d)), data(std::move(v)) {
        if (data.size() != numel_of(dims))
            throw std::invalid_argument("tensor data size does not match dims");
    }

    static std::size_t numel_of(const std::vector<int>& d) {
        std::size_t n = 1;
        for (int e : d) {
            if (e <= 0) throw std::invalid_argument("tensor extent must be positive");
            n *= static_cast<std::size_t>(e);
        }
        return n;
    }

    std::size_t numel() const { return data.size(); }
    int rank() const { return static_cast<int>(dims.size()); }

    int channels() const { return dims.at(dims.size() - 3); }
    int height() const { return dims.at(dims.size() - 2); }
    int width() const { return dims.at(dims.size() - 1); }

    // (c, h, w) accessors for rank-3 tensors.
    double& operator()(int c, int h, int w) {
        return data[(static_cast<std::size_t>(c) * dims[1] + h) * dims[2] + w];
    }
    double operator()(int c, int h, int w) const {
        return data[(static_cast<std::size_t>(c) * dims[1] + h) * dims[2] + w];
    }

    bool same_shape(const Tensor& o) const { return dims == o.dims; }
};

// One convolution layer's parameters: weights (C_out, C_in, kh, kw) plus a
// per-output-channel bias, applied with the given strides and no padding.
struct ConvKernel {
    Tensor weights;
    std::vector<double> bias;
    int stride_h = 1;
    int stride_w = 1;

    ConvKernel() = default;
    ConvKernel(int c_out, int c_in, int kh, int kw, int sh = 1, int sw = 1)
        : weights({c_out, c_in, kh, kw}),
          bias(static_cast<std::size_t>(c_out), 0.0),
          stride_h(sh),
          stride_w(sw) {}

    int out_channels() const { return weights.dims[0]; }
    int in_channels() const { return weights.dims[1]; }
    int kh() const { return weights.dims[2]; }
    int kw() const { return weights.dims[3]; }
};

namespace detail {

// C(M x N) = op(A) * op(B); row-major, alpha 1, beta 0.
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k,
                 const double* a, int lda, const double* b, int ldb, double* c,
                 int ldc) {
#ifdef SR_USE_CBLAS
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, 1.0, a, lda, b,
                ldb, 0.0, c, ldc);
#else
    for (int i = 0; i < m; ++i)
        std::fill(c + static_cast<std::size_t>(i) * ldc,
                  c + static_cast<std::size_t>(i) * ldc + n, 0.0);
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double av = trans_a ? a[static_cast<std::size_t>(p) * lda + i]
                                      : a[static_cast<std::size_t>(i) * lda + p];
            if (av == 0.0) continue;
            const double* brow =
                trans_b ? nullptr : b + static_cast<std::size_t>(p) * ldb;
            double* crow = c + static_cast<std::size_t>(i) * ldc;
            if (trans_b) {
                for (int j = 0; j < n; ++j)
                    crow[j] += av * b[static_cast<std::size_t>(j) * ldb + p];
            } else {
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
#endif
}

inline void check_conv_pre(const Tensor& input, const ConvKernel& k) {
    if (input.rank() != 3)
        throw std::invalid_argument("conv2d_valid expects a (channels, height, width) input");
    if (input.channels() != k.in_channels())
        throw std::invalid_argument(
            "conv2d_valid: input channels (" + std::to_string(input.channels()) +
            ") do not match kernel in_channels (" + std::to_string(k.in_channels()) + ")");
    if (input.height() < k.kh())
        throw std::invalid_argument(
            "conv2d_valid: input height (" + std::to_string(input.height()) +
            ") is smaller than kernel height (" + std::to_string(k.kh()) + ")");
    if (input.width() < k.kw())
        throw std::invalid_argument(
            "conv2d_valid: input width (" + std::to_string(input.width()) +
            ") is smaller than kernel width (" + std::to_string(k.kw()) + ")");
    if (k.stride_h < 1 || k.stride_w < 1)
        throw std::invalid_argument("conv2d_valid: strides must be at least 1");
}

// Unfolds conv input patches into a (C_in*kh*kw) x (H'*W') matrix so the
// convolution becomes one GEMM against the flattened weights.
inline void im2col(const Tensor& input, const ConvKernel& k, int out_h,
                   int out_w, std::vector<double>& cols) {
    const int c_in = input.channels(), h = input.height(), w = input.width();
    const int kh = k.kh(), kw = k.kw();
    const std::size_t n = static_cast<std::size_t>(out_h) * out_w;
    cols.resize(static_cast<std::size_t>(c_in) * kh * kw * n);
    std::size_t r = 0;
    for (int c = 0; c < c_in; ++c) {
        const double* plane = input.data.data() + static_cast<std::size_t>(c) * h * w;
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j, ++r) {
                double* dst = cols.data() + r * n;
                for (int oh = 0; oh < out_h; ++oh) {
                    const double* src =
                        plane + static_cast<std::size_t>(oh * k.stride_h + i) * w + j;
                    if (k.stride_w == 1) {
                        std::copy(src, src + out_w, dst);
                        dst += out_w;
                    } else {
                        for (int ow = 0; ow < out_w; ++ow)
                            *dst++ = src[ow * k.stride_w];
                    }
                }
            }
        }
    }
}

// Scatter-adds a column matrix back onto the input layout (adjoint of im2col).
inline void col2im(const std::vector<double>& cols, const ConvKernel& k,
                   int out_h, int out_w, Tensor& grad_input) {
    const int c_in = grad_input.channels(), w = grad_input.width();
    const int kh = k.kh(), kw = k.kw();
    const std::size_t n = static_cast<std::size_t>(out_h) * out_w;
    std::size_t r = 0;
    for (int c = 0; c < c_in; ++c) {
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j, ++r) {
                const double* src = cols.data() + r * n;
                for (int oh = 0; oh < out_h; ++oh)
                    for (int ow = 0; ow < out_w; ++ow)
                        grad_input(c, oh * k.stride_h + i, ow * k.stride_w + j) +=
                            *src++;
            }
        }
    }
}

}  // namespace detail

// Output extent of a valid convolution along one axis.
inline int conv_out_extent(int in, int kernel, int stride) {
    return (in - kernel) / stride + 1;
}

// Valid cross-correlation: output (C_out, H', W') with
// H' = floor((H - kh)/sh) + 1 and W' = floor((W - kw)/sw) + 1.
inline Tensor conv2d_valid(const Tensor& input, const ConvKernel& k) {
    detail::check_conv_pre(input, k);
    const int out_h = conv_out_extent(input.height(), k.kh(), k.stride_h);
    const int out_w = conv_out_extent(input.width(), k.kw(), k.stride_w);
    const int m = k.out_channels();
    const int kk = k.in_channels() * k.kh() * k.kw();
    const std::size_t n = static_cast<std::size_t>(out_h) * out_w;

    std::vector<double> cols;
    detail::im2col(input, k, out_h, out_w, cols);

    Tensor out({m, out_h, out_w});
    detail::gemm(false, false, m, static_cast<int>(n), kk, k.weights.data.data(),
                 kk, cols.data(), static_cast<int>(n), out.data.data(),
                 static_cast<int>(n));
    for (int o = 0; o < m; ++o) {
        double* row = out.data.data() + static_cast<std::size_t>(o) * n;
        const double b = k.bias[o];
        for (std::size_t i = 0; i < n; ++i) row[i] += b;
    }
    return out;
}

struct ConvGrads {
    Tensor input;             // same shape as the forward input
    Tensor weights;           // same shape as the kernel weights
    std::vector<double> bias; // per output channel
};

// Gradients of a scalar loss through conv2d_valid, given dL/d(output).
inline ConvGrads conv2d_backward(const Tensor& input, const ConvKernel& k,
                                 const Tensor& grad_out) {
    detail::check_conv_pre(input, k);
    const int out_h = conv_out_extent(input.height(), k.kh(), k.stride_h);
    const int out_w = conv_out_extent(input.width(), k.kw(), k.stride_w);
    if (grad_out.dims != std::vector<int>{k.out_channels(), out_h, out_w})
        throw std::invalid_argument("conv2d_backward: grad_out shape does not match the forward output");

    const int m = k.out_channels();
    const int kk = k.in_channels() * k.kh() * k.kw();
    const std::size_t n = static_cast<std::size_t>(out_h) * out_w;

    std::vector<double> cols;
    detail::im2col(input, k, out_h, out_w, cols);

    ConvGrads g;
    g.weights = Tensor(k.weights.dims);
    // dL/dW = dL/dY (M x N) * cols^T (N x K)
    detail::gemm(false, true, m, kk, static_cast<int>(n), grad_out.data.data(),
                 static_cast<int>(n), cols.data(), static_cast<int>(n),
                 g.weights.data.data(), kk);

    g.bias.assign(static_cast<std::size_t>(m), 0.0);
    for (int o = 0; o < m; ++o) {
        const double* row = grad_out.data.data() + static_cast<std::size_t>(o) * n;
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += row[i];
        g.bias[o] = s;
    }

    // dL/d(cols) = W^T (K x M) * dL/dY (M x N), then scatter back to the input.
    std::vector<double> grad_cols(static_cast<std::size_t>(kk) * n);
    detail::gemm(true, false, kk, static_cast<int>(n), m, k.weights.data.data(),
                 kk, grad_out.data.data(), static_cast<int>(n), grad_cols.data(),
                 static_cast<int>(n));
    g.input = Tensor(input.dims);
    detail::col2im(grad_cols, k, out_h, out_w, g.input);
    return g;
}

inline Tensor relu(const Tensor& t) {
    Tensor out = t;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

// dL/d(input) of relu given the pre-activation values; the subgradient at
// exactly zero is taken as zero.
inline Tensor relu_backward(const Tensor& pre, const Tensor& grad_out) {
    if (!pre.same_shape(grad_out))
        throw std::invalid_argument("relu_backward: shapes do not match");
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.data.size(); ++i)
        if (pre.data[i] <= 0.0) g.data[i] = 0.0;
    return g;
}

namespace detail {

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.dims == b.dims) return;
    static const char* axis3[] = {"channels", "height", "width"};
    if (a.rank() == 3 && b.rank() == 3) {
        for (int i = 0; i < 3; ++i)
            if (a.dims[i] != b.dims[i])
                throw std::invalid_argument(
                    std::string(op) + ": " + axis3[i] + " mismatch (" +
                    std::to_string(a.dims[i]) + " vs " + std::to_string(b.dims[i]) + ")");
    }
    throw std::invalid_argument(std::string(op) + ": tensor shapes do not match");
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

// Mean squared error over all elements.
inline double mse(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s / static_cast<double>(a.numel());
}

}  // namespace sr
