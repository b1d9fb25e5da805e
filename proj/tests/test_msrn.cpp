#include "gs/msrn.hpp"

#include "gs/common.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace gs;
using namespace gs::msrn;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

Tensor3 random_tensor(uint64_t seed, int c, int h, int w) {
    Rng rng(seed);
    Tensor3 t(c, h, w);
    for (float& v : t.data)
        v = static_cast<float>(rng.uniform(-1, 1));
    return t;
}

} // namespace

TEST(Conv2d, IdentityAndBiasCases) {
    const Tensor3 x = random_tensor(1, 2, 5, 6);

    ConvLayer identity(2, 2, 1);
    identity.weight(0, 0, 0, 0) = 1.0f;
    identity.weight(1, 1, 0, 0) = 1.0f;
    const Tensor3 same = conv2d(x, identity);
    EXPECT_EQ(same.data, x.data);

    ConvLayer biased(3, 2, 3);
    biased.bias = {0.5f, -1.0f, 2.0f};
    const Tensor3 constant = conv2d(x, biased);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 5; ++y)
            for (int xx = 0; xx < 6; ++xx)
                EXPECT_FLOAT_EQ(constant.at(c, y, xx), biased.bias[c]);
}

TEST(Conv2d, BoxKernelZeroPaddingAtBorders) {
    Tensor3 x(1, 4, 4);
    std::fill(x.data.begin(), x.data.end(), 1.0f);
    ConvLayer box(1, 1, 3);
    for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx)
            box.weight(0, 0, ky, kx) = 1.0f / 9.0f;
    const Tensor3 out = conv2d(x, box);
    EXPECT_NEAR(out.at(0, 1, 1), 1.0f, 1e-6);          // interior: full window
    EXPECT_NEAR(out.at(0, 0, 0), 4.0f / 9.0f, 1e-6);   // corner: 4 of 9 taps
    EXPECT_NEAR(out.at(0, 0, 1), 6.0f / 9.0f, 1e-6);   // edge: 6 of 9 taps
}

TEST(Conv2d, ChannelMismatchThrows) {
    const Tensor3 x = random_tensor(2, 3, 4, 4);
    ConvLayer layer(1, 2, 3);
    EXPECT_THROW(conv2d(x, layer), InvalidParameterError);
}

TEST(Relu, Clamps) {
    Tensor3 x(1, 1, 3);
    x.data = {-1.0f, 0.0f, 2.0f};
    const Tensor3 out = relu(x);
    EXPECT_EQ(out.data, (std::vector<float>{0.0f, 0.0f, 2.0f}));
}

TEST(MsrbForward, ZeroWeightsAreIdentity) {
    const int w = 4;
    MsrbWeights block;
    block.conv3_a = ConvLayer(w, w, 3);
    block.conv5_a = ConvLayer(w, w, 5);
    block.conv3_b = ConvLayer(2 * w, 2 * w, 3);
    block.conv5_b = ConvLayer(2 * w, 2 * w, 5);
    block.fuse = ConvLayer(w, 4 * w, 1);
    const Tensor3 x = random_tensor(5, w, 6, 6);
    const Tensor3 out = msrb_forward(x, block);
    EXPECT_EQ(out.data, x.data); // S = 0, so M_k = M_{k-1} exactly
}

TEST(MsrbForward, ConstantBiasPathAndResidualDefinition) {
    const int w = 2;
    MsrbWeights block;
    block.conv3_a = ConvLayer(w, w, 3);
    block.conv5_a = ConvLayer(w, w, 5);
    block.conv3_b = ConvLayer(2 * w, 2 * w, 3);
    block.conv5_b = ConvLayer(2 * w, 2 * w, 5);
    block.fuse = ConvLayer(w, 4 * w, 1);
    block.fuse.bias = {0.7f, -0.2f};

    const Tensor3 zero(w, 3, 3);
    const Tensor3 out = msrb_forward(zero, block);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) {
            EXPECT_FLOAT_EQ(out.at(0, y, x), 0.7f);
            EXPECT_FLOAT_EQ(out.at(1, y, x), -0.2f);
        }

    // output - input = S for random weights.
    MSRNModel fixture = make_fixture_model(11, 2, 1, 4);
    const Tensor3 input = random_tensor(13, 4, 5, 5);
    const Tensor3 with_residual = msrb_forward(input, fixture.blocks[0]);
    const Tensor3 s3 = relu(conv2d(input, fixture.blocks[0].conv3_a));
    const Tensor3 s5 = relu(conv2d(input, fixture.blocks[0].conv5_a));
    Tensor3 cat(8, 5, 5);
    std::copy(s3.data.begin(), s3.data.end(), cat.data.begin());
    std::copy(s5.data.begin(), s5.data.end(), cat.data.begin() + s3.data.size());
    const Tensor3 p3 = relu(conv2d(cat, fixture.blocks[0].conv3_b));
    const Tensor3 p5 = relu(conv2d(cat, fixture.blocks[0].conv5_b));
    Tensor3 cat2(16, 5, 5);
    std::copy(p3.data.begin(), p3.data.end(), cat2.data.begin());
    std::copy(p5.data.begin(), p5.data.end(), cat2.data.begin() + p3.data.size());
    const Tensor3 s = conv2d(cat2, fixture.blocks[0].fuse);
    for (size_t i = 0; i < s.data.size(); ++i)
        EXPECT_EQ(with_residual.data[i], s.data[i] + input.data[i]);
}

TEST(Hffs, SliceSelectionAndLinearity) {
    const int w = 3;
    const Tensor3 m0 = random_tensor(21, w, 4, 4);
    const Tensor3 m1 = random_tensor(22, w, 4, 4);

    // Weights picking out the M_0 slice with an identity pattern.
    ConvLayer select(w, 2 * w, 1);
    for (int c = 0; c < w; ++c)
        select.weight(c, c, 0, 0) = 1.0f;
    const Tensor3 picked = hffs({m0, m1}, select);
    EXPECT_EQ(picked.data, m0.data);

    ConvLayer biased(w, 2 * w, 1);
    biased.bias = {1.0f, 2.0f, 3.0f};
    const Tensor3 constant = hffs({m0, m1}, biased);
    for (int c = 0; c < w; ++c)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x)
                EXPECT_FLOAT_EQ(constant.at(c, y, x), biased.bias[c]);

    // Linearity with zero bias.
    ConvLayer random_layer(w, 2 * w, 1);
    Rng rng(23);
    for (float& v : random_layer.weights)
        v = static_cast<float>(rng.uniform(-1, 1));
    Tensor3 m0_scaled = m0, m1_scaled = m1;
    for (float& v : m0_scaled.data)
        v *= 2.0f;
    for (float& v : m1_scaled.data)
        v *= 2.0f;
    const Tensor3 base = hffs({m0, m1}, random_layer);
    const Tensor3 scaled = hffs({m0_scaled, m1_scaled}, random_layer);
    for (size_t i = 0; i < base.data.size(); ++i)
        EXPECT_NEAR(scaled.data[i], 2.0f * base.data[i], 1e-5);
}

TEST(PixelShuffle, DefinitionAndInverse) {
    Tensor3 x(4, 1, 1);
    x.data = {1, 2, 3, 4}; // a, b, c, d
    const Tensor3 out = pixel_shuffle(x, 2);
    EXPECT_EQ(out.channels, 1);
    EXPECT_EQ(out.height, 2);
    EXPECT_EQ(out.width, 2);
    EXPECT_EQ(out.data, (std::vector<float>{1, 2, 3, 4})); // [[a,b],[c,d]]

    const Tensor3 y = random_tensor(31, 8, 3, 5);
    const Tensor3 same = pixel_shuffle(y, 1);
    EXPECT_EQ(same.data, y.data);

    // Multiset of values preserved (it is a permutation).
    const Tensor3 shuffled = pixel_shuffle(y, 2);
    std::vector<float> a = y.data, b = shuffled.data;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);

    // Scattering back through the index map restores the input exactly.
    Tensor3 restored(y.channels, y.height, y.width);
    const int r = 2;
    for (int c = 0; c < shuffled.channels; ++c)
        for (int i = 0; i < shuffled.height; ++i)
            for (int j = 0; j < shuffled.width; ++j)
                restored.at(c * r * r + (i % r) * r + (j % r), i / r, j / r) =
                    shuffled.at(c, i, j);
    EXPECT_EQ(restored.data, y.data);

    EXPECT_THROW(pixel_shuffle(random_tensor(1, 3, 2, 2), 2), InvalidParameterError);
}

TEST(MsrnForward, ShapeContractAndRange) {
    const MSRNModel model = make_fixture_model(41, 2, 2, 8);
    ImageF lr(6, 5, 3);
    Rng rng(42);
    for (double& v : lr.data)
        v = rng.next_double();
    const ImageF sr = msrn_forward(lr, model);
    EXPECT_EQ(sr.height, 12);
    EXPECT_EQ(sr.width, 10);
    EXPECT_EQ(sr.channels, 3);
    for (double v : sr.data) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        EXPECT_TRUE(std::isfinite(v));
    }
}

TEST(MsrnForward, ZeroBlockWeightsStaysFinite) {
    MSRNModel model = make_fixture_model(51, 2, 2, 8);
    for (auto& b : model.blocks) {
        std::fill(b.conv3_a.weights.begin(), b.conv3_a.weights.end(), 0.0f);
        std::fill(b.conv3_a.bias.begin(), b.conv3_a.bias.end(), 0.0f);
        std::fill(b.conv5_a.weights.begin(), b.conv5_a.weights.end(), 0.0f);
        std::fill(b.conv5_a.bias.begin(), b.conv5_a.bias.end(), 0.0f);
        std::fill(b.conv3_b.weights.begin(), b.conv3_b.weights.end(), 0.0f);
        std::fill(b.conv3_b.bias.begin(), b.conv3_b.bias.end(), 0.0f);
        std::fill(b.conv5_b.weights.begin(), b.conv5_b.weights.end(), 0.0f);
        std::fill(b.conv5_b.bias.begin(), b.conv5_b.bias.end(), 0.0f);
        std::fill(b.fuse.weights.begin(), b.fuse.weights.end(), 0.0f);
        std::fill(b.fuse.bias.begin(), b.fuse.bias.end(), 0.0f);
    }
    ImageF lr(4, 4, 3, 0.5);
    const ImageF sr = msrn_forward(lr, model);
    for (double v : sr.data)
        EXPECT_TRUE(std::isfinite(v));
}

TEST(MsrnForward, Deterministic) {
    const MSRNModel model = make_fixture_model(61, 2, 1, 4);
    ImageF lr(5, 5, 3);
    Rng rng(62);
    for (double& v : lr.data)
        v = rng.next_double();
    const ImageF a = msrn_forward(lr, model);
    const ImageF b = msrn_forward(lr, model);
    EXPECT_EQ(a.data, b.data);
}

TEST(WeightFile, RoundTripIsFieldIdentical) {
    const std::string path = temp_path("msrn_roundtrip.msrnw");
    const MSRNModel model = make_fixture_model(71, 4, 2, 6);
    save_weights(model, path);
    const MSRNModel loaded = load_weights(path);
    EXPECT_EQ(loaded.scale_factor, model.scale_factor);
    EXPECT_EQ(loaded.n_blocks, model.n_blocks);
    EXPECT_EQ(loaded.feature_width, model.feature_width);
    EXPECT_EQ(loaded.head.weights, model.head.weights);
    EXPECT_EQ(loaded.head.bias, model.head.bias);
    for (int i = 0; i < model.n_blocks; ++i) {
        EXPECT_EQ(loaded.blocks[i].conv3_a.weights, model.blocks[i].conv3_a.weights);
        EXPECT_EQ(loaded.blocks[i].conv5_b.weights, model.blocks[i].conv5_b.weights);
        EXPECT_EQ(loaded.blocks[i].fuse.bias, model.blocks[i].fuse.bias);
    }
    EXPECT_EQ(loaded.hffs.weights, model.hffs.weights);
    EXPECT_EQ(loaded.tail_up.weights, model.tail_up.weights);
    EXPECT_EQ(loaded.tail_out.bias, model.tail_out.bias);
    std::filesystem::remove(path);
}

TEST(WeightFile, DetectsTruncationCorruptionAndBadMagic) {
    const std::string path = temp_path("msrn_corrupt.msrnw");
    const MSRNModel model = make_fixture_model(81, 2, 1, 4);
    save_weights(model, path);

    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    in.close();

    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    EXPECT_THROW(load_weights(path), IoError);

    {
        std::vector<char> flipped = bytes;
        flipped[flipped.size() / 2] ^= 0x5a;
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(flipped.data(), static_cast<std::streamsize>(flipped.size()));
    }
    EXPECT_THROW(load_weights(path), IoError);

    {
        std::vector<char> bad_magic = bytes;
        bad_magic[0] = 'X';
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bad_magic.data(), static_cast<std::streamsize>(bad_magic.size()));
    }
    EXPECT_THROW(load_weights(path), IoError);
    std::filesystem::remove(path);
}

TEST(WeightFile, RejectsInvalidHffsShape) {
    MSRNModel model = make_fixture_model(91, 2, 2, 4);
    model.hffs = ConvLayer(4, 4, 1); // should be (K+1)*w = 12 inputs
    EXPECT_THROW(model.validate(), InvalidParameterError);
    EXPECT_THROW(save_weights(model, temp_path("msrn_invalid.msrnw")),
                 InvalidParameterError);
}
