#include "gs/camera.hpp"

#include <cmath>

namespace gs {

void Camera::validate(double tol) const {
    if (width <= 0 || height <= 0)
        throw InvalidParameterError("camera: width/height must be positive");
    if (!(fx > 0.0) || !(fy > 0.0))
        throw InvalidParameterError("camera: focal lengths must be positive");
    if (!(near > 0.0))
        throw InvalidParameterError("camera: near plane must be positive");
    const Eigen::Matrix3d rtr = R.transpose() * R;
    if ((rtr - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol)
        throw InvalidParameterError("camera: R is not orthonormal");
    if (std::abs(R.determinant() - 1.0) > tol)
        throw InvalidParameterError("camera: R must have determinant +1");
}

CameraSpaceGaussian world_to_camera(const Eigen::Vector3d& position,
                                    const Eigen::Matrix3d& covariance, const Camera& cam) {
    CameraSpaceGaussian out;
    out.mean = cam.R * position + cam.t;
    out.cov = cam.R * covariance * cam.R.transpose();
    return out;
}

Eigen::Matrix3d perspective_jacobian(const Eigen::Vector3d& p, const Camera& cam) {
    const double z = p.z();
    if (z <= cam.near)
        throw BehindCameraError("perspective_jacobian: point behind the near plane");
    Eigen::Matrix3d j;
    j << cam.fx / z, 0, -cam.fx * p.x() / (z * z),
        0, cam.fy / z, -cam.fy * p.y() / (z * z),
        0, 0, 1;
    return j;
}

Eigen::Matrix2d project_covariance(const Eigen::Matrix3d& cam_cov, const Eigen::Matrix3d& jac) {
    const Eigen::Matrix3d full = jac * cam_cov * jac.transpose();
    return full.topLeftCorner<2, 2>();
}

Eigen::Vector2d project_point(const Eigen::Vector3d& p, const Camera& cam) {
    const double z = p.z();
    if (z <= cam.near)
        throw BehindCameraError("project_point: point behind the near plane");
    return {cam.fx * p.x() / z + cam.cx, cam.fy * p.y() / z + cam.cy};
}

std::vector<int> frustum_cull(const GaussianSet& set, const Camera& cam) {
    std::vector<int> kept;
    kept.reserve(set.size());
    for (size_t i = 0; i < set.size(); ++i) {
        const auto& g = set.gaussians[i];
        Eigen::Matrix3d sigma;
        try {
            sigma = build_covariance(g.log_scale, g.rotation);
        } catch (const InvalidParameterError&) {
            continue; // degenerate parameters never rasterize
        }
        const auto cs = world_to_camera(g.position, sigma, cam);
        if (cs.mean.z() <= cam.near)
            continue;
        const Eigen::Matrix3d j = perspective_jacobian(cs.mean, cam);
        const Eigen::Matrix2d cov2d = project_covariance(cs.cov, j);
        const Eigen::Vector2d mean2d = project_point(cs.mean, cam);

        // Support bound: G >= exp(-4.5) within 3 sigma of the major axis.
        const double tr = cov2d.trace();
        const double det = cov2d.determinant();
        const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
        const double lambda_max = std::max(0.0, tr / 2.0 + disc);
        const double pad = 3.0 * std::sqrt(lambda_max);

        const bool inside = mean2d.x() >= -pad && mean2d.x() <= cam.width - 1 + pad &&
                            mean2d.y() >= -pad && mean2d.y() <= cam.height - 1 + pad;
        if (inside)
            kept.push_back(static_cast<int>(i));
    }
    return kept;
}

} // namespace gs
