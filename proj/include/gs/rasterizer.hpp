#pragma once

#include "gs/camera.hpp"
#include "gs/image.hpp"
#include "gs/scene.hpp"

#include <Eigen/Dense>
#include <vector>

namespace gs {

struct RasterConfig {
    double dilation = 0.3;             // h in the 2D Gaussian, pixels^2
    double transmittance_floor = 1e-4; // early-out threshold during blending
    Rgb background = Rgb::Zero();
};

// Partial derivatives of a scalar loss with respect to every Gaussian field.
struct GaussianGrad {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
    Eigen::Vector4d rotation = Eigen::Vector4d::Zero();
    double opacity_logit = 0.0;
    std::vector<Rgb> sh; // congruent with the bank it differentiates
};

struct GradientSet {
    std::vector<GaussianGrad> gaussians;

    static GradientSet zeros_like(const GaussianSet& set);
    bool all_finite() const;
};

// exp(-1/2 (x-mean)^T (cov + h I)^{-1} (x-mean)), the dilated 2D Gaussian.
double gaussian_weight_2d(const Eigen::Vector2d& x, const Eigen::Vector2d& mean,
                          const Eigen::Matrix2d& cov2d, double dilation);

// Stable ascending depth order; ties keep source order.
std::vector<int> sort_by_depth(const std::vector<Splat2D>& splats);

struct BlendResult {
    Rgb color = Rgb::Zero();
    double weight_sum = 0.0;     // sum of alpha_n G_n T_n over blended splats
    double transmittance = 1.0;  // residual T multiplying the background
};

// Front-to-back alpha blending over depth-sorted splats with early
// termination; residual transmittance composites the background.
BlendResult blend_pixel(const std::vector<Splat2D>& sorted, const Eigen::Vector2d& x,
                        const RasterConfig& cfg);

inline Rgb alpha_blend_pixel(const std::vector<Splat2D>& sorted, const Eigen::Vector2d& x,
                             const RasterConfig& cfg) {
    return blend_pixel(sorted, x, cfg).color;
}

ImageF render(const GaussianSet& set, const Camera& cam, const RasterConfig& cfg);

// Reverse-mode gradients of a scalar loss through the full pipeline:
// blending, the dilated 2D Gaussian, projection, covariance construction,
// SH color (including the view-direction dependence) and the parameter
// activations. dloss_dimage must match the render output shape.
GradientSet render_backward(const GaussianSet& set, const Camera& cam,
                            const RasterConfig& cfg, const ImageF& dloss_dimage);

} // namespace gs
