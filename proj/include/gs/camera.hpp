#pragma once

#include "gs/common.hpp"
#include "gs/scene.hpp"

#include <Eigen/Dense>
#include <vector>

namespace gs {

// Pinhole camera: x_cam = R * x_world + t, pixel = (fx x/z + cx, fy y/z + cy).
struct Camera {
    int width = 0, height = 0;
    double fx = 0, fy = 0, cx = 0, cy = 0;
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity(); // world-to-camera rotation
    Eigen::Vector3d t = Eigen::Vector3d::Zero();
    double near = 0.01;

    Eigen::Vector3d center() const { return -R.transpose() * t; }
    void validate(double tol = 1e-6) const;
};

// A Gaussian projected into one view, ready for blending.
struct Splat2D {
    Eigen::Vector2d mean2d;  // pixels
    Eigen::Matrix2d cov2d;   // pixels^2, before dilation
    double depth = 0;        // camera-space z
    Rgb color = Rgb::Zero(); // view-dependent, already clamped
    double alpha = 0;        // opacity after sigmoid and the 0.999 cap
    int source_index = -1;   // index into the originating GaussianSet
};

struct CameraSpaceGaussian {
    Eigen::Vector3d mean;   // q' = R q + t
    Eigen::Matrix3d cov;    // Sigma' = R Sigma R^T
};

CameraSpaceGaussian world_to_camera(const Eigen::Vector3d& position,
                                    const Eigen::Matrix3d& covariance, const Camera& cam);

// Local affine approximation of the projective transform at a camera-space
// point. Third row is a placeholder; only the top-left 2x2 of J S J^T is used.
Eigen::Matrix3d perspective_jacobian(const Eigen::Vector3d& cam_point, const Camera& cam);

// Top-left 2x2 block of J Sigma' J^T.
Eigen::Matrix2d project_covariance(const Eigen::Matrix3d& cam_cov, const Eigen::Matrix3d& jac);

Eigen::Vector2d project_point(const Eigen::Vector3d& cam_point, const Camera& cam);

// Indices of Gaussians in front of the near plane whose projected mean falls
// inside the image rectangle padded by 3 sigma of the projected covariance.
std::vector<int> frustum_cull(const GaussianSet& set, const Camera& cam);

} // namespace gs
