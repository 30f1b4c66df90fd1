#include "sr/model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sr/padding.hpp"
#include "sr/rng.hpp"
#include "sr/tensor.hpp"

using sr::ModelConfig;
using sr::PadPolicy;
using sr::Tensor;

namespace {

ModelConfig tiny_cfg(PadPolicy pp = PadPolicy::mirror, std::uint64_t seed = 1) {
    ModelConfig cfg;
    cfg.tile_size = 9;
    cfg.feature_width = 6;
    cfg.expansion_width = 10;
    cfg.n_residual_blocks = 2;
    cfg.kernel_size = 3;
    cfg.pad_mode = pp;
    cfg.seed = seed;
    return cfg;
}

Tensor random_input(int c, int h, int w, std::uint64_t seed) {
    sr::Rng rng(seed);
    Tensor t({c, h, w});
    oracle::fill_uniform(t, rng, 0.0, 1.0);
    return t;
}

void zero_kernel(sr::ConvKernel& k) {
    std::fill(k.weights.data.begin(), k.weights.data.end(), 0.0);
    std::fill(k.bias.begin(), k.bias.end(), 0.0);
}

double probe_loss(const sr::Model& m, const Tensor& x, const Tensor& probe) {
    const Tensor out = sr::forward(m, x);
    double s = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * probe.data[i];
    return s;
}

}  // namespace

TEST(ModelConfig, Validation) {
    ModelConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.kernel_size = 4;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg.kernel_size = 7;
    cfg.n_residual_blocks = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(BuildModel, StackShapeAndLayerCount) {
    const sr::Model m = sr::build_model(ModelConfig{});
    EXPECT_EQ(m.conv_layer_count(), 15);  // conv0 + 5 blocks x 2 + skip + e1 + e2 + out
    EXPECT_EQ(m.conv0.in_channels(), 3);
    EXPECT_EQ(m.conv0.out_channels(), 64);
    EXPECT_EQ(m.conv0.kh(), 7);
    for (const sr::ResidualBlock& b : m.blocks) {
        EXPECT_EQ(b.conv0.in_channels(), 64);
        EXPECT_EQ(b.conv0.out_channels(), 64);
        EXPECT_EQ(b.conv1.in_channels(), 64);
        EXPECT_EQ(b.conv1.out_channels(), 64);
    }
    EXPECT_EQ(m.conv_skip.out_channels(), 64);
    EXPECT_EQ(m.conv_e1.in_channels(), 64);
    EXPECT_EQ(m.conv_e1.out_channels(), 256);
    EXPECT_EQ(m.conv_e2.in_channels(), 256);
    EXPECT_EQ(m.conv_e2.out_channels(), 256);
    EXPECT_EQ(m.conv_out.in_channels(), 256);
    EXPECT_EQ(m.conv_out.out_channels(), 3);

    const sr::Model small = sr::build_model(tiny_cfg());
    EXPECT_EQ(small.conv_layer_count(), 9);  // 2 blocks
}

TEST(BuildModel, SeededDeterminismAndInitScale) {
    ModelConfig cfg = tiny_cfg();
    cfg.seed = 77;
    const sr::Model a = sr::build_model(cfg);
    const sr::Model b = sr::build_model(cfg);
    cfg.seed = 78;
    const sr::Model c = sr::build_model(cfg);
    EXPECT_EQ(a.conv0.weights.data, b.conv0.weights.data);
    EXPECT_EQ(a.blocks[1].conv1.weights.data, b.blocks[1].conv1.weights.data);
    EXPECT_NE(a.conv0.weights.data, c.conv0.weights.data);

    // He scaling: sample std of a big layer ~ sqrt(2/fan_in), biases zero.
    const sr::Model big = sr::build_model(ModelConfig{});
    const auto& w = big.conv_e2.weights.data;  // fan_in = 256*49
    double mean = 0.0;
    for (double v : w) mean += v;
    mean /= static_cast<double>(w.size());
    double var = 0.0;
    for (double v : w) var += (v - mean) * (v - mean);
    var /= static_cast<double>(w.size());
    const double want_std = std::sqrt(2.0 / (256.0 * 49.0));
    EXPECT_NEAR(mean, 0.0, want_std * 0.01);
    EXPECT_NEAR(std::sqrt(var), want_std, want_std * 0.02);
    for (double bias : big.conv_e2.bias) EXPECT_EQ(bias, 0.0);
}

TEST(ResidualBlock, ZeroWeightsGiveBitExactIdentity) {
    sr::Model m = sr::build_model(tiny_cfg());
    const Tensor x = random_input(6, 9, 9, 3);
    for (sr::ResidualBlock& b : m.blocks) {
        sr::ResidualBlock zeroed = b;
        zero_kernel(zeroed.conv0);
        zero_kernel(zeroed.conv1);
        const Tensor out = sr::residual_block_forward(zeroed, x, PadPolicy::mirror);
        EXPECT_EQ(out.data, x.data);  // bit-exact
    }
}

TEST(ResidualBlock, ZeroInputZeroBiasGivesZero) {
    const sr::Model m = sr::build_model(tiny_cfg());
    Tensor zeros({6, 9, 9});
    const Tensor out = sr::residual_block_forward(m.blocks[0], zeros, PadPolicy::mirror);
    for (double v : out.data) EXPECT_EQ(v, 0.0);
}

TEST(ResidualBlock, MatchesCompositionOracle) {
    const sr::Model m = sr::build_model(tiny_cfg(PadPolicy::mirror, 9));
    const Tensor x = random_input(6, 9, 9, 4);
    for (PadPolicy pp : {PadPolicy::mirror, PadPolicy::zero}) {
        const sr::ResidualBlock& b = m.blocks[0];
        const sr::PadMode mode = pp == PadPolicy::mirror ? sr::PadMode::mirror : sr::PadMode::zero;
        const Tensor a1 = sr::relu(sr::conv2d_valid(
            sr::pad(x, sr::same_pad_spec(9, 9, b.conv0, mode)), b.conv0));
        const Tensor want = sr::add(
            sr::conv2d_valid(sr::pad(a1, sr::same_pad_spec(9, 9, b.conv1, mode)), b.conv1), x);
        const Tensor got = sr::residual_block_forward(b, x, pp);
        EXPECT_EQ(got.data, want.data);
    }
}

TEST(Forward, SameSizeContractAtEveryStage) {
    for (PadPolicy pp : {PadPolicy::mirror, PadPolicy::zero}) {
        ModelConfig cfg = tiny_cfg(pp);
        const sr::Model m = sr::build_model(cfg);
        for (auto [h, w] : {std::pair{9, 9}, {14, 11}}) {
            const Tensor x = random_input(3, h, w, 5);
            std::map<std::string, std::pair<int, int>> stages;
            const Tensor out = sr::forward(m, x, [&](const std::string& name, const Tensor& t) {
                stages[name] = {t.height(), t.width()};
            });
            EXPECT_EQ(out.height(), h);
            EXPECT_EQ(out.width(), w);
            ASSERT_GE(stages.size(), 7u);
            for (const auto& [name, hw] : stages) {
                EXPECT_EQ(hw.first, h) << name;
                EXPECT_EQ(hw.second, w) << name;
            }
        }
    }
}

TEST(Forward, ValidModeShrinksExtents) {
    ModelConfig cfg = tiny_cfg(PadPolicy::valid);
    const sr::Model m = sr::build_model(cfg);
    // 9 convs with k=3 take one pixel per side each: 31 - 2*9 = 13.
    const Tensor x = random_input(3, 31, 31, 6);
    const Tensor out = sr::forward(m, x);
    EXPECT_EQ(out.height(), 13);
    EXPECT_EQ(out.width(), 13);
}

TEST(Forward, ZeroModelOutputsZeros) {
    sr::Model m = sr::build_model(tiny_cfg());
    for (auto& [name, k] : m.kernels()) zero_kernel(*k);
    const Tensor out = sr::forward(m, random_input(3, 9, 9, 7));
    for (double v : out.data) EXPECT_EQ(v, 0.0);
}

TEST(Forward, RejectsChannelMismatch) {
    const sr::Model m = sr::build_model(tiny_cfg());
    EXPECT_THROW(sr::forward(m, Tensor({1, 9, 9})), std::invalid_argument);
}

TEST(Forward, LongSkipMatchesCompositionOracle) {
    const sr::Model m = sr::build_model(tiny_cfg(PadPolicy::mirror, 11));
    const Tensor x = random_input(3, 9, 9, 8);
    Tensor skip_sum;
    sr::forward(m, x, [&](const std::string& name, const Tensor& t) {
        if (name == "skip_sum") skip_sum = t;
    });
    // Composition oracle: conv0 activation, blocks, conv_skip, add.
    const sr::PadMode mode = sr::PadMode::mirror;
    Tensor f0 = sr::relu(sr::conv2d_valid(
        sr::pad(x, sr::same_pad_spec(9, 9, m.conv0, mode)), m.conv0));
    Tensor h = f0;
    for (const sr::ResidualBlock& b : m.blocks)
        h = sr::residual_block_forward(b, h, PadPolicy::mirror);
    const Tensor want = sr::add(
        sr::conv2d_valid(sr::pad(h, sr::same_pad_spec(9, 9, m.conv_skip, mode)), m.conv_skip),
        f0);
    ASSERT_EQ(skip_sum.dims, want.dims);
    EXPECT_EQ(skip_sum.data, want.data);
}

TEST(Forward, ZeroedSingleBlockEqualsSkippingIt) {
    // Zeroing block i must reduce the model to the same function with that
    // block deleted from the chain (identity map in its place).
    const ModelConfig cfg = tiny_cfg(PadPolicy::mirror, 13);
    const Tensor x = random_input(3, 9, 9, 9);
    for (std::size_t victim = 0; victim < 2; ++victim) {
        sr::Model m = sr::build_model(cfg);
        zero_kernel(m.blocks[victim].conv0);
        zero_kernel(m.blocks[victim].conv1);
        const Tensor got = sr::forward(m, x);

        // Composition oracle skipping the zeroed block entirely.
        const sr::PadMode mode = sr::PadMode::mirror;
        auto same_conv = [&](const Tensor& in, const sr::ConvKernel& k) {
            return sr::conv2d_valid(
                sr::pad(in, sr::same_pad_spec(in.height(), in.width(), k, mode)), k);
        };
        const Tensor f0 = sr::relu(same_conv(x, m.conv0));
        Tensor h = f0;
        for (std::size_t i = 0; i < m.blocks.size(); ++i)
            if (i != victim) h = sr::residual_block_forward(m.blocks[i], h, PadPolicy::mirror);
        Tensor s = sr::add(same_conv(h, m.conv_skip), f0);
        Tensor want = sr::relu(same_conv(s, m.conv_e1));
        want = sr::relu(same_conv(want, m.conv_e2));
        want = same_conv(want, m.conv_out);
        EXPECT_EQ(got.data, want.data) << "victim=" << victim;
    }
}

TEST(Backward, ZeroGradOutGivesZeroGrads) {
    const sr::Model m = sr::build_model(tiny_cfg());
    const Tensor x = random_input(3, 9, 9, 10);
    const sr::ForwardCache cache = sr::forward_train(m, x);
    const sr::ModelGrads g = sr::backward(m, cache, Tensor(cache.output.dims));
    for (const Tensor& w : g.weights)
        for (double v : w.data) EXPECT_EQ(v, 0.0);
    for (const auto& b : g.bias)
        for (double v : b) EXPECT_EQ(v, 0.0);
}

TEST(Backward, ScalarToyStackMatchesHandChainRule) {
    // 1x1 kernels on a 1x1 image turn the network into scalar arithmetic.
    ModelConfig cfg;
    cfg.tile_size = 1;
    cfg.channels_in = 1;
    cfg.feature_width = 1;
    cfg.expansion_width = 1;
    cfg.n_residual_blocks = 1;
    cfg.kernel_size = 1;
    cfg.pad_mode = PadPolicy::mirror;
    sr::Model m = sr::build_model(cfg);
    // Pin all weights to hand-picked positives so every ReLU is active.
    const auto ks = m.kernels();
    const double wv[] = {0.5, 0.8, 0.7, 0.6, 1.1, 0.9, 0.4};
    for (std::size_t i = 0; i < ks.size(); ++i) {
        ks[i].second->weights.data[0] = wv[i];
        ks[i].second->bias[0] = 0.0;
    }
    const double xv = 0.3;
    Tensor x({1, 1, 1}, {xv});
    // Hand computation: f0 = w0 x; block: a = w1 f0, z = w2 a + f0;
    // s = w3 z + f0; e1 = w4 s; e2 = w5 e1; y = w6 e2.
    const double f0 = 0.5 * xv;
    const double z = 0.7 * (0.8 * f0) + f0;
    const double s = 0.6 * z + f0;
    const double y = 0.4 * (0.9 * (1.1 * s));
    const sr::ForwardCache cache = sr::forward_train(m, x);
    EXPECT_NEAR(cache.output.data[0], y, 1e-12);

    Tensor grad_out({1, 1, 1}, {1.0});
    const sr::ModelGrads g = sr::backward(m, cache, grad_out);
    // dy/dw6 = e2 = 0.9*1.1*s; dy/dw4 = w6 w5 s; dy/dw0 through both paths.
    const double chain_out = 0.4 * 0.9 * 1.1;  // dy/ds
    EXPECT_NEAR(g.weights[6].data[0], 0.9 * 1.1 * s, 1e-12);
    EXPECT_NEAR(g.weights[4].data[0], 0.4 * 0.9 * s, 1e-12);           // dy/dw4 = w6 w5 s
    EXPECT_NEAR(g.weights[3].data[0], chain_out * z, 1e-12);           // skip conv weight
    EXPECT_NEAR(g.weights[1].data[0], chain_out * 0.6 * 0.7 * f0, 1e-12);
    // conv0: ds/df0 = w3*(w2 w1 + 1) + 1.
    const double ds_df0 = 0.6 * (0.7 * 0.8 + 1.0) + 1.0;
    EXPECT_NEAR(g.weights[0].data[0], chain_out * ds_df0 * xv, 1e-12);
    // Bias of conv_out: dy/db = 1.
    EXPECT_NEAR(g.bias[6][0], 1.0, 1e-12);
}

TEST(Backward, FiniteDifferenceAcrossAllLayers) {
    for (PadPolicy pp : {PadPolicy::mirror, PadPolicy::zero}) {
        const ModelConfig cfg = tiny_cfg(pp, 21);
        sr::Model m = sr::build_model(cfg);
        const Tensor x = random_input(3, 7, 8, 22);
        sr::Rng prng(23);
        Tensor probe(sr::forward(m, x).dims);
        oracle::fill_uniform(probe, prng);

        const sr::ForwardCache cache = sr::forward_train(m, x);
        const sr::ModelGrads g = sr::backward(m, cache, probe);
        const auto kernels = m.kernels();
        ASSERT_EQ(g.weights.size(), kernels.size());

        for (std::size_t li = 0; li < kernels.size(); ++li) {
            sr::ConvKernel* k = kernels[li].second;
            const std::size_t stride = std::max<std::size_t>(1, k->weights.data.size() / 5);
            for (std::size_t wi = 0; wi < k->weights.data.size(); wi += stride) {
                const double orig = k->weights.data[wi];
                const double fd = oracle::central_diff(
                    [&](double v) {
                        k->weights.data[wi] = v;
                        const double L = probe_loss(m, x, probe);
                        k->weights.data[wi] = orig;
                        return L;
                    },
                    orig, 1e-6);
                EXPECT_LT(oracle::rel_err(g.weights[li].data[wi], fd), 1e-5)
                    << kernels[li].first << " w" << wi << " pad=" << sr::to_string(pp);
            }
            // One bias coordinate per layer.
            const double orig_b = k->bias[0];
            const double fd_b = oracle::central_diff(
                [&](double v) {
                    k->bias[0] = v;
                    const double L = probe_loss(m, x, probe);
                    k->bias[0] = orig_b;
                    return L;
                },
                orig_b, 1e-6);
            EXPECT_LT(oracle::rel_err(g.bias[li][0], fd_b), 1e-5)
                << kernels[li].first << " bias pad=" << sr::to_string(pp);
        }
    }
}

TEST(Backward, FiniteDifferenceValidMode) {
    const ModelConfig cfg = tiny_cfg(PadPolicy::valid, 31);
    sr::Model m = sr::build_model(cfg);
    const Tensor x = random_input(3, 21, 21, 32);  // 9 convs, k=3: out 3x3
    sr::Rng prng(33);
    Tensor probe(sr::forward(m, x).dims);
    ASSERT_EQ(probe.height(), 3);
    oracle::fill_uniform(probe, prng);
    const sr::ForwardCache cache = sr::forward_train(m, x);
    const sr::ModelGrads g = sr::backward(m, cache, probe);
    const auto kernels = m.kernels();
    for (std::size_t li = 0; li < kernels.size(); ++li) {
        sr::ConvKernel* k = kernels[li].second;
        const std::size_t wi = k->weights.data.size() / 2;
        const double orig = k->weights.data[wi];
        const double fd = oracle::central_diff(
            [&](double v) {
                k->weights.data[wi] = v;
                const double L = probe_loss(m, x, probe);
                k->weights.data[wi] = orig;
                return L;
            },
            orig, 1e-6);
        EXPECT_LT(oracle::rel_err(g.weights[li].data[wi], fd), 1e-5) << kernels[li].first;
    }
}

TEST(Weights, RoundTripReproducesForwardBitExactly) {
    const std::string path = std::filesystem::temp_directory_path() / "sr_test_weights.srw";
    const ModelConfig cfg = tiny_cfg(PadPolicy::mirror, 41);
    const sr::Model m = sr::build_model(cfg);
    sr::save_weights(m, path);

    const sr::Model via_cfg = sr::load_weights(path, cfg);
    const sr::Model inferred = sr::load_weights(path);
    const Tensor x = random_input(3, 9, 9, 42);
    const Tensor want = sr::forward(m, x);
    EXPECT_EQ(sr::forward(via_cfg, x).data, want.data);
    EXPECT_EQ(sr::forward(inferred, x).data, want.data);
    EXPECT_EQ(inferred.cfg.n_residual_blocks, cfg.n_residual_blocks);
    EXPECT_EQ(inferred.cfg.feature_width, cfg.feature_width);
    EXPECT_EQ(inferred.cfg.expansion_width, cfg.expansion_width);
    EXPECT_EQ(inferred.cfg.kernel_size, cfg.kernel_size);
    std::filesystem::remove(path);
}

TEST(Weights, DistinctErrorDiagnostics) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path();

    const std::string good = dir / "sr_good.srw";
    const sr::Model m = sr::build_model(tiny_cfg());
    sr::save_weights(m, good);

    // Wrong magic.
    const std::string bad_magic = dir / "sr_bad_magic.srw";
    std::ofstream(bad_magic, std::ios::binary) << "NOPE garbage";
    try {
        sr::load_weights(bad_magic);
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("not a weight file"), std::string::npos);
    }

    // Truncation: cut the good file in half.
    const std::string trunc = dir / "sr_trunc.srw";
    {
        std::ifstream in(good, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        std::ofstream out(trunc, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    try {
        sr::load_weights(trunc);
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
    }

    // Unsupported version.
    const std::string badver = dir / "sr_badver.srw";
    {
        std::ofstream out(badver, std::ios::binary);
        out << "SRW1";
        const unsigned char v2[4] = {2, 0, 0, 0}, zero[4] = {0, 0, 0, 0};
        out.write(reinterpret_cast<const char*>(v2), 4);
        out.write(reinterpret_cast<const char*>(zero), 4);
    }
    try {
        sr::load_weights(badver);
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("unsupported weight file version"), std::string::npos);
    }

    // Config/shape mismatch.
    ModelConfig other = tiny_cfg();
    other.feature_width = 8;
    try {
        sr::load_weights(good, other);
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("weight shape mismatch"), std::string::npos);
    }

    // Missing file.
    EXPECT_THROW(sr::load_weights(dir / "sr_does_not_exist.srw"), std::runtime_error);

    fs::remove(good);
    fs::remove(bad_magic);
    fs::remove(trunc);
    fs::remove(badver);
}
