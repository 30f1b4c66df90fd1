#pragma once

#include <algorithm>
#include <atomic>
#include <stdexcept>
#include <thread>
#include <vector>

#include "sr/model.hpp"
#include "sr/resize.hpp"
#include "sr/tiling.hpp"

namespace sr {

inline Tensor clamp01(Tensor t) {
    for (double& v : t.data) v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return t;
}

// Crops n pixels from every border.
inline Tensor shave(const Tensor& t, int n) {
    if (n < 0) throw std::invalid_argument("shave: negative border");
    if (t.height() <= 2 * n || t.width() <= 2 * n)
        throw std::invalid_argument("shave: border exceeds image extents");
    Tensor out({t.dims[0], t.height() - 2 * n, t.width() - 2 * n});
    for (int c = 0; c < out.dims[0]; ++c)
        for (int y = 0; y < out.dims[1]; ++y)
            for (int x = 0; x < out.dims[2]; ++x) out(c, y, x) = t(c, y + n, x + n);
    return out;
}

// Degradation model: bicubic downscale by 1/s, upscale back by s, clamp to
// [0, 1].  Extents must be multiples of s so the round trip restores them.
inline Tensor degrade_image(const Tensor& img, int scale) {
    if (scale < 2) throw std::invalid_argument("degrade_image: scale must be at least 2");
    if (img.height() % scale != 0 || img.width() % scale != 0)
        throw std::invalid_argument("degrade_image: extents must be multiples of the scale");
    const Tensor low = bicubic_resize(img, 1.0 / static_cast<double>(scale));
    Tensor up = bicubic_resize(low, static_cast<double>(scale));
    if (up.dims != img.dims) throw std::logic_error("degrade_image: extents not restored");
    return clamp01(std::move(up));
}

// Runs the network tile by tile over an already-upscaled image and merges the
// refined tiles.  Images smaller than one tile are processed whole.  The
// worker count only affects scheduling, never the merged values.
inline Tensor refine_image(const Model& m, const Tensor& img, int tile, int threads = 1) {
    if (tile < 1) throw std::invalid_argument("refine_image: tile must be positive");
    if (img.dims[0] != m.cfg.channels_in)
        throw std::invalid_argument("refine_image: channel count does not match the model");
    if (img.height() < tile || img.width() < tile) return clamp01(forward(m, img));

    auto [tiles, grid] = split_tiles(img, tile);
    const int n = static_cast<int>(tiles.size());
    const int workers = std::max(1, std::min(threads, n));
    if (workers == 1) {
        for (Tensor& t : tiles) t = forward(m, t);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1))
                    tiles[static_cast<std::size_t>(i)] = forward(m, tiles[static_cast<std::size_t>(i)]);
            });
        for (std::thread& t : pool) t.join();
    }
    return clamp01(merge_tiles(tiles, grid));
}

// Full super-resolution pipeline: bicubic pre-upscale by s, then tiled
// network refinement.
inline Tensor upscale_image(const Model& m, const Tensor& img, int scale, int tile,
                            int threads = 1) {
    if (scale < 1) throw std::invalid_argument("upscale_image: scale must be positive");
    Tensor up = clamp01(bicubic_resize(img, static_cast<double>(scale)));
    return refine_image(m, up, tile, threads);
}

// A pass-through network: centered-delta kernels route each input channel
// through the feature and expansion stages, residual blocks and the skip
// conv are zero.  Output bit-equals input for non-negative inputs (ReLU is
// the identity there), regardless of padding content.
inline Model make_identity_model(ModelConfig cfg) {
    cfg.validate();
    if (cfg.feature_width < cfg.channels_in || cfg.expansion_width < cfg.channels_in)
        throw std::invalid_argument("identity model: widths must cover the input channels");
    Model m = build_model(cfg);
    const int k = cfg.kernel_size;
    const int center = (k / 2) * k + k / 2;  // flat offset of the kernel center

    auto zero = [](ConvKernel& kern) {
        for (double& v : kern.weights.data) v = 0.0;
        for (double& v : kern.bias) v = 0.0;
    };
    // Routes output channel o to input channel src(o) with a centered delta.
    auto delta = [&](ConvKernel& kern, auto src) {
        zero(kern);
        const int c_in = kern.weights.dims[1];
        for (int o = 0; o < kern.weights.dims[0]; ++o) {
            const int s = src(o);
            if (s < 0) continue;
            kern.weights.data[(static_cast<std::size_t>(o) * c_in + s) * k * k + center] = 1.0;
        }
    };

    const int ch = cfg.channels_in;
    delta(m.conv0, [&](int o) { return o < ch ? o : -1; });
    for (ResidualBlock& b : m.blocks) {
        zero(b.conv0);
        zero(b.conv1);
    }
    zero(m.conv_skip);  // skip sum passes conv0's activation through
    delta(m.conv_e1, [&](int o) { return o < ch ? o : -1; });
    delta(m.conv_e2, [&](int o) { return o < ch ? o : -1; });
    delta(m.conv_out, [&](int o) { return o; });
    return m;
}

}  // namespace sr
