#pragma once

#include "gs/common.hpp"
#include "gs/image.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gs::msrn {

// Channel-major (c, h, w) float tensor. Inference runs in single precision.
struct Tensor3 {
    int channels = 0, height = 0, width = 0;
    std::vector<float> data;

    Tensor3() = default;
    Tensor3(int c, int h, int w)
        : channels(c), height(h), width(w),
          data(static_cast<size_t>(c) * h * w, 0.0f) {}

    float& at(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
};

struct ConvLayer {
    int out_channels = 0, in_channels = 0, kernel = 0;
    std::vector<float> weights; // out x in x k x k
    std::vector<float> bias;    // out

    ConvLayer() = default;
    ConvLayer(int out_c, int in_c, int k)
        : out_channels(out_c), in_channels(in_c), kernel(k),
          weights(static_cast<size_t>(out_c) * in_c * k * k, 0.0f), bias(out_c, 0.0f) {}

    float weight(int oc, int ic, int ky, int kx) const {
        return weights[((static_cast<size_t>(oc) * in_channels + ic) * kernel + ky) * kernel +
                       kx];
    }
    float& weight(int oc, int ic, int ky, int kx) {
        return weights[((static_cast<size_t>(oc) * in_channels + ic) * kernel + ky) * kernel +
                       kx];
    }
};

// One multi-scale residual block: two stages of parallel 3x3/5x5 convolutions
// over cross-concatenated features, fused back to the feature width by a 1x1
// convolution, then added to the block input.
struct MsrbWeights {
    ConvLayer conv3_a, conv5_a; // width -> width
    ConvLayer conv3_b, conv5_b; // 2*width -> 2*width
    ConvLayer fuse;             // 1x1, 4*width -> width
};

struct MSRNModel {
    int scale_factor = 2; // r
    int n_blocks = 0;     // K
    int feature_width = 0;
    ConvLayer head;               // 3 -> width, 3x3
    std::vector<MsrbWeights> blocks;
    ConvLayer hffs;               // 1x1, (K+1)*width -> width
    ConvLayer tail_up;            // width -> r^2*3, 3x3
    ConvLayer tail_out;           // 3 -> 3, 3x3 (after PixelShuffle)

    void validate() const;
};

// Same-size convolution with zero padding (kernel-1)/2 plus bias.
Tensor3 conv2d(const Tensor3& x, const ConvLayer& layer);

Tensor3 relu(const Tensor3& x);

Tensor3 msrb_forward(const Tensor3& input, const MsrbWeights& block);

// 1x1 convolution over the channel concatenation [M_0, ..., M_K].
Tensor3 hffs(const std::vector<Tensor3>& features, const ConvLayer& layer);

// Channel-to-space rearrangement:
// out[c][i][j] = in[c*r^2 + (i%r)*r + (j%r)][i/r][j/r]
Tensor3 pixel_shuffle(const Tensor3& x, int r);

// Full super-resolution pass; output is (h*r, w*r, 3) clamped to [0,1].
ImageF msrn_forward(const ImageF& low_res, const MSRNModel& model);

// Bit-exact weight container: magic "MSRNW1", u32 version, u32 r, u32 K,
// u32 feature_width, named tensors (u32 name length, name, u32 rank,
// u32 dims[rank], f32 data), trailing CRC32 of everything before it.
MSRNModel load_weights(const std::string& path);
void save_weights(const MSRNModel& model, const std::string& path);

// Small randomly initialized model for tests and demos; weights are scaled
// so activations stay finite.
MSRNModel make_fixture_model(uint64_t seed, int scale_factor = 2, int n_blocks = 2,
                             int feature_width = 8);

} // namespace gs::msrn
