#pragma once

#include "gs/common.hpp"
#include "gs/image.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gs {

struct LossConfig {
    double lambda = 0.5;       // SSIM-term weight in the total loss
    double beta = 0.04;        // TV weight before the switch
    double gamma = 0.02;       // TV weight after the switch
    int64_t k_switch = 25000;  // last iteration of the D-SSIM phase
    int patch_count = 10;      // P, stochastic patch pairs per image
    int kernel = 4;            // K, patch-SSIM window
    int stride = 4;            // S = K
    int dssim_kernel = 11;     // full-image SSIM window
    int dssim_stride = 1;
    double ssim_c1 = 0.01 * 0.01; // (K1 L)^2 on dynamic range 1
    double ssim_c2 = 0.03 * 0.03;
    uint64_t seed = 0;

    void validate() const;
};

// Index lists shared between the rendered and ground-truth images; gathering
// them row-major yields the pseudo-patch both SSIMs are computed on.
struct PatchPair {
    std::vector<int> pixel_indices; // linear pixel indices, y * w + x
    int patch_height = 0;
    int patch_width = 0;
};

enum class LossPhase { kDSsim, kPSsim };
inline const char* phase_tag(LossPhase p) {
    return p == LossPhase::kDSsim ? "d-ssim-phase" : "p-ssim-phase";
}

double l1_loss(const ImageF& rendered, const ImageF& gt);
ImageF l1_loss_backward(const ImageF& rendered, const ImageF& gt);

// Mean of local SSIM over kernel x kernel windows placed at the given
// stride, uniform window weights, per-channel then channel-averaged.
double ssim(const ImageF& rendered, const ImageF& gt, int kernel, int stride,
            double c1 = 0.01 * 0.01, double c2 = 0.03 * 0.03);
ImageF ssim_backward(const ImageF& rendered, const ImageF& gt, int kernel, int stride,
                     double c1 = 0.01 * 0.01, double c2 = 0.03 * 0.03);

double d_ssim_loss(const ImageF& rendered, const ImageF& gt, int kernel = 11,
                   int stride = 1, double c1 = 0.01 * 0.01, double c2 = 0.03 * 0.03);

// Deterministic partition of the image into patch_count contiguous row
// bands, each band's pixels shuffled into a pseudo-patch of the band shape.
std::vector<PatchPair> sample_stochastic_patches(uint64_t seed, int height, int width,
                                                 int patch_count);

double p_ssim(const ImageF& rendered, const ImageF& gt, const std::vector<PatchPair>& pairs,
              const LossConfig& cfg);
ImageF p_ssim_backward(const ImageF& rendered, const ImageF& gt,
                       const std::vector<PatchPair>& pairs, const LossConfig& cfg);

double p_ssim_loss(const ImageF& rendered, const ImageF& gt,
                   const std::vector<PatchPair>& pairs, const LossConfig& cfg);

// Normalized absolute differences between horizontal and vertical neighbors.
double tv_loss(const ImageF& rendered);
ImageF tv_loss_backward(const ImageF& rendered);

struct TotalLoss {
    double value = 0.0;
    LossPhase phase = LossPhase::kDSsim;
};

// (1-lambda) l1 + lambda dssim + beta tv   while iteration <= k_switch,
// (1-lambda) l1 + lambda pssim + gamma tv  afterwards.
TotalLoss total_loss(int64_t iteration, double l1, double dssim, double pssim, double tv,
                     const LossConfig& cfg);

} // namespace gs
