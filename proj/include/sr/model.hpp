#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sr/padding.hpp"
#include "sr/rng.hpp"
#include "sr/tensor.hpp"

namespace sr {

// Padding policy applied before every convolution.  "valid" (no padding) is
// an ablation mode: it shrinks extents and disables the same-size contract.
enum class PadPolicy { mirror, zero, valid };

inline PadPolicy pad_policy_from_string(const std::string& s) {
    if (s == "mirror") return PadPolicy::mirror;
    if (s == "zero") return PadPolicy::zero;
    if (s == "valid") return PadPolicy::valid;
    throw std::invalid_argument("unknown padding mode \"" + s + "\" (expected mirror, zero or valid)");
}

inline const char* to_string(PadPolicy p) {
    switch (p) {
        case PadPolicy::mirror: return "mirror";
        case PadPolicy::zero: return "zero";
        default: return "valid";
    }
}

struct ModelConfig {
    int tile_size = 33;
    int channels_in = 3;
    int feature_width = 64;
    int expansion_width = 256;
    int n_residual_blocks = 5;
    int kernel_size = 7;
    PadPolicy pad_mode = PadPolicy::mirror;
    std::uint64_t seed = 0;

    void validate() const {
        if (kernel_size < 1 || kernel_size % 2 == 0)
            throw std::invalid_argument("model config: kernel_size must be odd and positive");
        if (n_residual_blocks < 1)
            throw std::invalid_argument("model config: n_residual_blocks must be at least 1");
        if (tile_size < 1 || channels_in < 1 || feature_width < 1 || expansion_width < 1)
            throw std::invalid_argument("model config: extents and widths must be positive");
    }
};

struct ResidualBlock {
    ConvKernel conv0;  // width -> width, followed by ReLU
    ConvKernel conv1;  // width -> width, linear; output is added to the block input
};

// The full stack: conv0 + ReLU, n residual blocks, conv_skip whose output is
// summed with conv0's activation (long skip), conv_e1 + ReLU, conv_e2 + ReLU,
// conv_out (linear).  Channel chain: 3 -> 64 -> (64->64) x 2n -> 64 -> 256 ->
// 256 -> 3 with the default widths.
struct Model {
    ModelConfig cfg;
    ConvKernel conv0;
    std::vector<ResidualBlock> blocks;
    ConvKernel conv_skip;
    ConvKernel conv_e1;
    ConvKernel conv_e2;
    ConvKernel conv_out;

    int conv_layer_count() const { return 2 * static_cast<int>(blocks.size()) + 5; }

    // Canonical (name, kernel) order; also the weight-file and gradient order.
    std::vector<std::pair<std::string, ConvKernel*>> kernels() {
        std::vector<std::pair<std::string, ConvKernel*>> v;
        v.emplace_back("conv0", &conv0);
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            v.emplace_back("block" + std::to_string(i) + ".conv0", &blocks[i].conv0);
            v.emplace_back("block" + std::to_string(i) + ".conv1", &blocks[i].conv1);
        }
        v.emplace_back("conv_skip", &conv_skip);
        v.emplace_back("conv_e1", &conv_e1);
        v.emplace_back("conv_e2", &conv_e2);
        v.emplace_back("conv_out", &conv_out);
        return v;
    }
    std::vector<std::pair<std::string, const ConvKernel*>> kernels() const {
        std::vector<std::pair<std::string, const ConvKernel*>> v;
        for (auto& [name, k] : const_cast<Model*>(this)->kernels()) v.emplace_back(name, k);
        return v;
    }
};

namespace detail {

// Weights are drawn in double but snapped to the 32-bit float grid: the
// weight file stores f32, and keeping parameters exactly on that grid makes
// save -> load -> forward bit-identical to the in-memory model.
inline double snap_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

inline void he_init(ConvKernel& k, Rng& rng) {
    const double fan_in = static_cast<double>(k.in_channels()) * k.kh() * k.kw();
    const double stddev = std::sqrt(2.0 / fan_in);
    for (double& w : k.weights.data) w = snap_f32(stddev * rng.next_normal());
    for (double& b : k.bias) b = 0.0;
}

}  // namespace detail

inline Model build_model(const ModelConfig& cfg) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    const int w = cfg.feature_width, e = cfg.expansion_width, k = cfg.kernel_size;
    m.conv0 = ConvKernel(w, cfg.channels_in, k, k);
    m.blocks.resize(static_cast<std::size_t>(cfg.n_residual_blocks));
    for (ResidualBlock& b : m.blocks) {
        b.conv0 = ConvKernel(w, w, k, k);
        b.conv1 = ConvKernel(w, w, k, k);
    }
    m.conv_skip = ConvKernel(w, w, k, k);
    m.conv_e1 = ConvKernel(e, w, k, k);
    m.conv_e2 = ConvKernel(e, e, k, k);
    m.conv_out = ConvKernel(cfg.channels_in, e, k, k);

    Rng rng(Rng::mix(cfg.seed, 0x6d6f64656cULL));  // independent init stream
    for (auto& [name, kern] : m.kernels()) detail::he_init(*kern, rng);
    return m;
}

namespace detail {

inline Tensor pad_for(const Tensor& x, const ConvKernel& k, PadPolicy policy) {
    if (policy == PadPolicy::valid) return x;
    const PadSpec s = same_pad_spec(x.height(), x.width(), k,
                                    policy == PadPolicy::mirror ? PadMode::mirror
                                                                : PadMode::zero);
    return pad(x, s);
}

inline Tensor center_crop(const Tensor& x, int h, int w) {
    const int dh = (x.height() - h) / 2, dw = (x.width() - w) / 2;
    Tensor out({x.channels(), h, w});
    for (int c = 0; c < x.channels(); ++c)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) out(c, i, j) = x(c, i + dh, j + dw);
    return out;
}

// Adjoint of center_crop: embeds a gradient back into a zero tensor of the
// original extents.
inline Tensor center_embed(const Tensor& g, int h, int w) {
    const int dh = (h - g.height()) / 2, dw = (w - g.width()) / 2;
    Tensor out({g.channels(), h, w});
    for (int c = 0; c < g.channels(); ++c)
        for (int i = 0; i < g.height(); ++i)
            for (int j = 0; j < g.width(); ++j) out(c, i + dh, j + dw) = g(c, i, j);
    return out;
}

// Adds b onto a when shapes match; in valid mode the identity branch must be
// center-cropped down to the conv output's extents first.
inline Tensor skip_add(const Tensor& conv_out, const Tensor& identity, PadPolicy policy) {
    if (policy != PadPolicy::valid) return add(conv_out, identity);
    return add(conv_out, center_crop(identity, conv_out.height(), conv_out.width()));
}

}  // namespace detail

inline Tensor residual_block_forward(const ResidualBlock& b, const Tensor& x,
                                     PadPolicy policy) {
    const Tensor a = relu(conv2d_valid(detail::pad_for(x, b.conv0, policy), b.conv0));
    const Tensor r = conv2d_valid(detail::pad_for(a, b.conv1, policy), b.conv1);
    return detail::skip_add(r, x, policy);
}

// Per-layer intermediates kept for the backward pass.
struct ForwardCache {
    Tensor input;
    Tensor p0, z0, f0;  // conv0: padded input, pre-activation, activation
    struct BlockCache {
        Tensor in;        // block input
        Tensor p1, z1, a1;  // first conv
        Tensor p2, z2;      // second conv (pre-skip output)
    };
    std::vector<BlockCache> blocks;
    Tensor ps, zs, s;       // conv_skip input (padded), output, skip sum
    Tensor pe1, ze1, ae1;   // conv_e1
    Tensor pe2, ze2, ae2;   // conv_e2
    Tensor po, output;      // conv_out
};

using ForwardObserver = std::function<void(const std::string&, const Tensor&)>;

inline ForwardCache forward_train(const Model& m, const Tensor& x,
                                  const ForwardObserver& observe = {}) {
    if (x.rank() != 3 || x.channels() != m.cfg.channels_in)
        throw std::invalid_argument("forward: input must have " +
                                    std::to_string(m.cfg.channels_in) + " channels");
    const PadPolicy pp = m.cfg.pad_mode;
    ForwardCache c;
    c.input = x;
    c.p0 = detail::pad_for(x, m.conv0, pp);
    c.z0 = conv2d_valid(c.p0, m.conv0);
    c.f0 = relu(c.z0);
    if (observe) observe("conv0", c.f0);

    Tensor h = c.f0;
    c.blocks.resize(m.blocks.size());
    for (std::size_t i = 0; i < m.blocks.size(); ++i) {
        ForwardCache::BlockCache& bc = c.blocks[i];
        const ResidualBlock& b = m.blocks[i];
        bc.in = h;
        bc.p1 = detail::pad_for(h, b.conv0, pp);
        bc.z1 = conv2d_valid(bc.p1, b.conv0);
        bc.a1 = relu(bc.z1);
        bc.p2 = detail::pad_for(bc.a1, b.conv1, pp);
        bc.z2 = conv2d_valid(bc.p2, b.conv1);
        h = detail::skip_add(bc.z2, bc.in, pp);
        if (observe) observe("block" + std::to_string(i), h);
    }

    c.ps = detail::pad_for(h, m.conv_skip, pp);
    c.zs = conv2d_valid(c.ps, m.conv_skip);
    c.s = detail::skip_add(c.zs, c.f0, pp);
    if (observe) observe("skip_sum", c.s);

    c.pe1 = detail::pad_for(c.s, m.conv_e1, pp);
    c.ze1 = conv2d_valid(c.pe1, m.conv_e1);
    c.ae1 = relu(c.ze1);
    if (observe) observe("conv_e1", c.ae1);

    c.pe2 = detail::pad_for(c.ae1, m.conv_e2, pp);
    c.ze2 = conv2d_valid(c.pe2, m.conv_e2);
    c.ae2 = relu(c.ze2);
    if (observe) observe("conv_e2", c.ae2);

    c.po = detail::pad_for(c.ae2, m.conv_out, pp);
    c.output = conv2d_valid(c.po, m.conv_out);
    if (observe) observe("conv_out", c.output);
    return c;
}

inline Tensor forward(const Model& m, const Tensor& x,
                      const ForwardObserver& observe = {}) {
    return forward_train(m, x, observe).output;
}

// Gradients for every kernel, aligned with Model::kernels() order.
struct ModelGrads {
    std::vector<Tensor> weights;
    std::vector<std::vector<double>> bias;

    void add(const ModelGrads& o) {
        for (std::size_t i = 0; i < weights.size(); ++i) {
            for (std::size_t j = 0; j < weights[i].data.size(); ++j)
                weights[i].data[j] += o.weights[i].data[j];
            for (std::size_t j = 0; j < bias[i].size(); ++j) bias[i][j] += o.bias[i][j];
        }
    }
    void scale(double f) {
        for (Tensor& w : weights)
            for (double& v : w.data) v *= f;
        for (auto& b : bias)
            for (double& v : b) v *= f;
    }
};

namespace detail {

// Backward through one pad+conv stage: accumulates the kernel's gradients and
// returns the gradient with respect to the stage input.
inline Tensor conv_stage_backward(const Tensor& padded_in, const ConvKernel& k,
                                  const Tensor& grad_out, PadPolicy pp,
                                  const std::vector<int>& in_dims, Tensor& gw,
                                  std::vector<double>& gb) {
    ConvGrads g = conv2d_backward(padded_in, k, grad_out);
    gw = std::move(g.weights);
    gb = std::move(g.bias);
    if (pp == PadPolicy::valid) return std::move(g.input);
    const PadSpec s = same_pad_spec(in_dims[1], in_dims[2], k,
                                    pp == PadPolicy::mirror ? PadMode::mirror
                                                            : PadMode::zero);
    return pad_backward(g.input, s, in_dims);
}

// Gradient of skip_add's identity branch: in valid mode the branch was
// center-cropped, so its gradient embeds back into the larger extents.
inline Tensor skip_branch_grad(const Tensor& grad_sum, const std::vector<int>& branch_dims,
                               PadPolicy pp) {
    if (pp != PadPolicy::valid) return grad_sum;
    return center_embed(grad_sum, branch_dims[1], branch_dims[2]);
}

}  // namespace detail

inline ModelGrads backward(const Model& m, const ForwardCache& c,
                           const Tensor& grad_output) {
    if (grad_output.dims != c.output.dims)
        throw std::invalid_argument("backward: grad_output shape does not match the forward output");
    const PadPolicy pp = m.cfg.pad_mode;
    const std::size_t n_blocks = m.blocks.size();

    ModelGrads g;
    g.weights.resize(2 * n_blocks + 5);
    g.bias.resize(2 * n_blocks + 5);
    // Gradient slots in kernels() order.
    const std::size_t gi_conv0 = 0;
    auto gi_block = [&](std::size_t i, int which) { return 1 + 2 * i + static_cast<std::size_t>(which); };
    const std::size_t gi_skip = 1 + 2 * n_blocks;
    const std::size_t gi_e1 = gi_skip + 1, gi_e2 = gi_skip + 2, gi_out = gi_skip + 3;

    // conv_out (linear).
    Tensor grad = detail::conv_stage_backward(c.po, m.conv_out, grad_output, pp,
                                              c.ae2.dims, g.weights[gi_out], g.bias[gi_out]);
    // conv_e2 + ReLU.
    grad = relu_backward(c.ze2, grad);
    grad = detail::conv_stage_backward(c.pe2, m.conv_e2, grad, pp, c.ae1.dims,
                                       g.weights[gi_e2], g.bias[gi_e2]);
    // conv_e1 + ReLU.
    grad = relu_backward(c.ze1, grad);
    grad = detail::conv_stage_backward(c.pe1, m.conv_e1, grad, pp, c.s.dims,
                                       g.weights[gi_e1], g.bias[gi_e1]);

    // Skip sum: s = conv_skip(blocks_out) + f0.  The conv_skip stage input is
    // the last block's output, whose dims equal that block's z2 (the skip add
    // keeps the conv branch's extents).
    Tensor grad_f0 = detail::skip_branch_grad(grad, c.f0.dims, pp);
    const std::vector<int>& skip_in_dims =
        c.blocks.empty() ? c.f0.dims : c.blocks.back().z2.dims;
    Tensor grad_h = detail::conv_stage_backward(c.ps, m.conv_skip, grad, pp, skip_in_dims,
                                                g.weights[gi_skip], g.bias[gi_skip]);

    // Residual blocks, in reverse.
    for (std::size_t ri = n_blocks; ri-- > 0;) {
        const ForwardCache::BlockCache& bc = c.blocks[ri];
        const ResidualBlock& b = m.blocks[ri];
        // Block output = z2 + identity(in): both branches receive grad_h.
        Tensor grad_ident = detail::skip_branch_grad(grad_h, bc.in.dims, pp);
        Tensor grad_a1 = detail::conv_stage_backward(bc.p2, b.conv1, grad_h, pp, bc.a1.dims,
                                                     g.weights[gi_block(ri, 1)],
                                                     g.bias[gi_block(ri, 1)]);
        Tensor grad_z1 = relu_backward(bc.z1, grad_a1);
        Tensor grad_in = detail::conv_stage_backward(bc.p1, b.conv0, grad_z1, pp, bc.in.dims,
                                                     g.weights[gi_block(ri, 0)],
                                                     g.bias[gi_block(ri, 0)]);
        grad_h = add(grad_in, grad_ident);
    }

    // f0 feeds both the first block and the long skip.
    grad_f0 = add(grad_f0, grad_h);

    // conv0 + ReLU.
    Tensor grad_z0 = relu_backward(c.z0, grad_f0);
    detail::conv_stage_backward(c.p0, m.conv0, grad_z0, pp, c.input.dims,
                                g.weights[gi_conv0], g.bias[gi_conv0]);
    return g;
}

// ---------------------------------------------------------------------------
// Weight file, format SRW1 (bit-exact round trip):
//   magic "SRW1" | u32 LE version (=1) | u32 LE layer count
//   per layer: u32 LE name length, UTF-8 name, u32 LE rank, rank x u32 LE
//   extents, extent-product f32 LE weights, C_out f32 LE biases.
// Parameters live exactly on the f32 grid in memory, so no precision is lost.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>((v >> 8) & 0xff),
                                static_cast<unsigned char>((v >> 16) & 0xff),
                                static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f32(std::ostream& os, float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(os, v);
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("truncated weight file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline float get_f32(std::istream& is) {
    const std::uint32_t v = get_u32(is);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}

struct RawLayer {
    std::string name;
    std::vector<int> dims;
    std::vector<float> weights;
    std::vector<float> bias;
};

inline std::vector<RawLayer> read_raw_layers(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open weight file " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SRW1", 4) != 0)
        throw std::runtime_error("not a weight file: " + path);
    const std::uint32_t version = get_u32(is);
    if (version != 1)
        throw std::runtime_error("unsupported weight file version " + std::to_string(version));
    const std::uint32_t count = get_u32(is);
    std::vector<RawLayer> layers(count);
    for (RawLayer& layer : layers) {
        const std::uint32_t name_len = get_u32(is);
        layer.name.resize(name_len);
        is.read(layer.name.data(), name_len);
        if (!is) throw std::runtime_error("truncated weight file");
        const std::uint32_t rank = get_u32(is);
        layer.dims.resize(rank);
        std::size_t numel = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            layer.dims[r] = static_cast<int>(get_u32(is));
            numel *= static_cast<std::size_t>(layer.dims[r]);
        }
        if (rank == 0 || numel == 0)
            throw std::runtime_error("weight shape mismatch at layer " + layer.name +
                                     ": empty extents");
        layer.weights.resize(numel);
        for (float& w : layer.weights) w = get_f32(is);
        layer.bias.resize(static_cast<std::size_t>(layer.dims[0]));
        for (float& b : layer.bias) b = get_f32(is);
    }
    return layers;
}

inline void load_kernel(ConvKernel& k, const RawLayer& raw) {
    if (raw.dims != k.weights.dims)
        throw std::runtime_error("weight shape mismatch at layer " + raw.name);
    for (std::size_t i = 0; i < raw.weights.size(); ++i)
        k.weights.data[i] = static_cast<double>(raw.weights[i]);
    for (std::size_t i = 0; i < raw.bias.size(); ++i)
        k.bias[i] = static_cast<double>(raw.bias[i]);
}

}  // namespace detail

inline void save_weights(const Model& m, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open weight file " + path + " for writing");
    os.write("SRW1", 4);
    detail::put_u32(os, 1);
    const auto kernels = m.kernels();
    detail::put_u32(os, static_cast<std::uint32_t>(kernels.size()));
    for (const auto& [name, k] : kernels) {
        detail::put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::put_u32(os, static_cast<std::uint32_t>(k->weights.dims.size()));
        for (int d : k->weights.dims) detail::put_u32(os, static_cast<std::uint32_t>(d));
        for (double w : k->weights.data) detail::put_f32(os, static_cast<float>(w));
        for (double b : k->bias) detail::put_f32(os, static_cast<float>(b));
    }
    if (!os) throw std::runtime_error("failed writing weight file " + path);
}

// Loads weights into a model built from cfg; every layer's extents must match.
inline Model load_weights(const std::string& path, const ModelConfig& cfg) {
    const auto raw = detail::read_raw_layers(path);
    Model m = build_model(cfg);
    const auto kernels = m.kernels();
    if (raw.size() != kernels.size())
        throw std::runtime_error("weight shape mismatch: file has " +
                                 std::to_string(raw.size()) + " layers, model expects " +
                                 std::to_string(kernels.size()));
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i].name != kernels[i].first)
            throw std::runtime_error("weight shape mismatch: unexpected layer " + raw[i].name +
                                     " (expected " + kernels[i].first + ")");
        detail::load_kernel(*kernels[i].second, raw[i]);
    }
    return m;
}

// Loads weights reconstructing the architecture from the file itself.
// Tile size and pad mode are not stored in the file; they keep their defaults
// and may be overridden by the caller afterwards.
inline Model load_weights(const std::string& path) {
    const auto raw = detail::read_raw_layers(path);
    if (raw.empty() || raw.front().name != "conv0" || raw.front().dims.size() != 4)
        throw std::runtime_error("weight shape mismatch: file does not start with a conv0 layer");
    ModelConfig cfg;
    cfg.feature_width = raw.front().dims[0];
    cfg.channels_in = raw.front().dims[1];
    cfg.kernel_size = raw.front().dims[2];
    int n_blocks = 0;
    for (const auto& layer : raw)
        if (layer.name.rfind("block", 0) == 0 && layer.name.find(".conv0") != std::string::npos)
            ++n_blocks;
    cfg.n_residual_blocks = n_blocks;
    for (const auto& layer : raw)
        if (layer.name == "conv_e1") cfg.expansion_width = layer.dims[0];
    return load_weights(path, cfg);
}

}  // namespace sr
