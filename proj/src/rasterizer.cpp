#include "gs/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gs {

namespace {

constexpr double kAlphaCap = 0.999; // keeps transmittance strictly positive

// Everything the backward pass needs about one visible Gaussian in one view.
struct ProjectedGaussian {
    int source_index;
    Eigen::Vector3d cam_mean;       // q'
    Eigen::Matrix3d cam_cov;        // Sigma'
    Eigen::Matrix3d jac;            // J at q'
    Eigen::Vector2d mean2d;
    Eigen::Matrix2d dilated_inv;    // (Sigma2D + h I)^{-1}
    Rgb color;                      // clamped SH color
    Rgb raw_color;                  // before the [0,1] clamp
    double alpha;                   // capped sigmoid opacity
    double sigmoid_opacity;         // uncapped, for the activation gradient
    Eigen::Vector3d view_dir;       // normalized q - camera_center
    double view_dist;               // |q - camera_center|
    std::vector<double> basis;      // SH basis at view_dir
    std::vector<Eigen::Vector3d> basis_grad; // dY/d(dir) before normalization chain
};

// Projects every Gaussian that survives culling, in depth order.
// with_basis_grad controls whether SH direction gradients are evaluated.
std::vector<ProjectedGaussian> project_visible(const GaussianSet& set, const Camera& cam,
                                               const RasterConfig& cfg,
                                               bool with_basis_grad) {
    const Eigen::Vector3d origin = cam.center();
    std::vector<ProjectedGaussian> out;
    const std::vector<int> visible = frustum_cull(set, cam);
    out.reserve(visible.size());

    for (int idx : visible) {
        const auto& g = set.gaussians[idx];
        ProjectedGaussian p;
        p.source_index = idx;

        // Projection failures demote to culls; rendering never aborts on a
        // single bad Gaussian.
        Eigen::Matrix3d sigma;
        try {
            sigma = build_covariance(g.log_scale, g.rotation);
        } catch (const Error&) {
            continue;
        }
        const auto cs = world_to_camera(g.position, sigma, cam);
        if (!(cs.mean.z() > cam.near))
            continue;
        p.cam_mean = cs.mean;
        p.cam_cov = cs.cov;
        p.jac = perspective_jacobian(cs.mean, cam);
        p.mean2d = project_point(cs.mean, cam);

        const Eigen::Matrix2d cov2d = project_covariance(cs.cov, p.jac);
        Eigen::Matrix2d dilated = cov2d;
        dilated(0, 0) += cfg.dilation;
        dilated(1, 1) += cfg.dilation;
        const double det = dilated.determinant();
        if (!(det > 1e-300))
            continue;
        p.dilated_inv << dilated(1, 1), -dilated(0, 1), -dilated(1, 0), dilated(0, 0);
        p.dilated_inv /= det;

        p.sigmoid_opacity = g.opacity();
        p.alpha = std::min(p.sigmoid_opacity, kAlphaCap);

        const Eigen::Vector3d to_gaussian = g.position - origin;
        p.view_dist = to_gaussian.norm();
        p.view_dir = p.view_dist > 1e-12 ? Eigen::Vector3d(to_gaussian / p.view_dist)
                                         : Eigen::Vector3d(0, 0, 1);
        if (with_basis_grad)
            sh::eval_basis_grad(g.sh.degree, p.view_dir, p.basis, p.basis_grad);
        else
            sh::eval_basis(g.sh.degree, p.view_dir, p.basis);

        Rgb raw = Rgb::Constant(0.5);
        for (size_t i = 0; i < p.basis.size(); ++i)
            raw += p.basis[i] * g.sh.coeffs[i];
        p.raw_color = raw;
        p.color = raw.cwiseMax(0.0).cwiseMin(1.0);
        out.push_back(std::move(p));
    }

    // Stable ascending depth sort, ties keep cull order.
    std::stable_sort(out.begin(), out.end(),
                     [](const ProjectedGaussian& a, const ProjectedGaussian& b) {
                         return a.cam_mean.z() < b.cam_mean.z();
                     });
    return out;
}

double weight_at(const ProjectedGaussian& p, const Eigen::Vector2d& x) {
    const Eigen::Vector2d d = x - p.mean2d;
    return std::exp(-0.5 * d.dot(p.dilated_inv * d));
}

} // namespace

GradientSet GradientSet::zeros_like(const GaussianSet& set) {
    GradientSet g;
    g.gaussians.resize(set.size());
    for (size_t i = 0; i < set.size(); ++i)
        g.gaussians[i].sh.assign(set.gaussians[i].sh.coeffs.size(), Rgb::Zero());
    return g;
}

bool GradientSet::all_finite() const {
    for (const auto& g : gaussians) {
        if (!g.position.allFinite() || !g.log_scale.allFinite() ||
            !g.rotation.allFinite() || !std::isfinite(g.opacity_logit))
            return false;
        for (const auto& c : g.sh)
            if (!c.allFinite())
                return false;
    }
    return true;
}

double gaussian_weight_2d(const Eigen::Vector2d& x, const Eigen::Vector2d& mean,
                          const Eigen::Matrix2d& cov2d, double dilation) {
    if (!x.allFinite() || !mean.allFinite() || !cov2d.allFinite())
        throw InvalidParameterError("gaussian_weight_2d: non-finite input");
    Eigen::Matrix2d a = cov2d;
    a(0, 0) += dilation;
    a(1, 1) += dilation;
    const double det = a.determinant();
    if (!(det > 1e-300))
        throw SingularCovarianceError("gaussian_weight_2d: singular dilated covariance");
    const Eigen::Vector2d d = x - mean;
    const double quad =
        (d.x() * (a(1, 1) * d.x() - a(0, 1) * d.y()) +
         d.y() * (a(0, 0) * d.y() - a(1, 0) * d.x())) / det;
    return std::exp(-0.5 * quad);
}

std::vector<int> sort_by_depth(const std::vector<Splat2D>& splats) {
    for (const auto& s : splats)
        if (!std::isfinite(s.depth))
            throw InvalidParameterError("sort_by_depth: non-finite depth");
    std::vector<int> order(splats.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return splats[a].depth < splats[b].depth; });
    return order;
}

BlendResult blend_pixel(const std::vector<Splat2D>& sorted, const Eigen::Vector2d& x,
                        const RasterConfig& cfg) {
    BlendResult r;
    double t = 1.0;
    for (const auto& s : sorted) {
        const double g = gaussian_weight_2d(x, s.mean2d, s.cov2d, cfg.dilation);
        const double a = s.alpha * g;
        r.color += s.color * (a * t);
        r.weight_sum += a * t;
        t *= 1.0 - a;
        if (t < cfg.transmittance_floor)
            break;
    }
    r.color += cfg.background * t;
    r.transmittance = t;
    return r;
}

ImageF render(const GaussianSet& set, const Camera& cam, const RasterConfig& cfg) {
    cam.validate();
    const auto splats = project_visible(set, cam, cfg, /*with_basis_grad=*/false);
    ImageF img(cam.height, cam.width, 3);

    for (int y = 0; y < cam.height; ++y) {
        for (int xpix = 0; xpix < cam.width; ++xpix) {
            const Eigen::Vector2d px(static_cast<double>(xpix), static_cast<double>(y));
            Rgb c = Rgb::Zero();
            double t = 1.0;
            for (const auto& s : splats) {
                const double a = s.alpha * weight_at(s, px);
                c += s.color * (a * t);
                t *= 1.0 - a;
                if (t < cfg.transmittance_floor)
                    break;
            }
            c += cfg.background * t;
            img.at(y, xpix, 0) = c[0];
            img.at(y, xpix, 1) = c[1];
            img.at(y, xpix, 2) = c[2];
        }
    }
    return img;
}

GradientSet render_backward(const GaussianSet& set, const Camera& cam,
                            const RasterConfig& cfg, const ImageF& dloss_dimage) {
    cam.validate();
    if (dloss_dimage.height != cam.height || dloss_dimage.width != cam.width ||
        dloss_dimage.channels != 3)
        throw ShapeMismatchError("render_backward: gradient image shape mismatch");

    GradientSet grads = GradientSet::zeros_like(set);
    const auto splats = project_visible(set, cam, cfg, /*with_basis_grad=*/true);
    const size_t n = splats.size();
    if (n == 0)
        return grads;

    // Per-splat accumulators in sorted order; folded back to parameters once
    // all pixels are processed.
    std::vector<Rgb> d_color(n, Rgb::Zero());
    std::vector<double> d_alpha_total(n, 0.0);
    std::vector<Eigen::Vector2d> d_mean2d(n, Eigen::Vector2d::Zero());
    std::vector<Eigen::Matrix2d> d_cov2d(n, Eigen::Matrix2d::Zero());

    std::vector<double> weights(n);      // G_n at the current pixel
    std::vector<double> trans(n + 1);    // T_1..T_{m+1} prefix transmittances

    for (int y = 0; y < cam.height; ++y) {
        for (int xpix = 0; xpix < cam.width; ++xpix) {
            const Eigen::Vector2d px(static_cast<double>(xpix), static_cast<double>(y));
            const Rgb gc(dloss_dimage.at(y, xpix, 0), dloss_dimage.at(y, xpix, 1),
                         dloss_dimage.at(y, xpix, 2));
            if (gc.isZero(0.0))
                continue;

            // Forward replay to find the processed prefix and transmittances.
            size_t processed = 0;
            trans[0] = 1.0;
            for (size_t i = 0; i < n; ++i) {
                weights[i] = weight_at(splats[i], px);
                const double a = splats[i].alpha * weights[i];
                trans[i + 1] = trans[i] * (1.0 - a);
                processed = i + 1;
                if (trans[i + 1] < cfg.transmittance_floor)
                    break;
            }

            // Reverse sweep. suffix = sum of contributions behind splat i,
            // background included, so that dC/da_i = c_i T_i - suffix/(1-a_i).
            Rgb suffix = cfg.background * trans[processed];
            for (size_t ii = processed; ii-- > 0;) {
                const auto& s = splats[ii];
                const double a = s.alpha * weights[ii];
                const double t_front = trans[ii];

                d_color[ii] += (a * t_front) * gc;
                const double d_a =
                    gc.dot(s.color * t_front - suffix / (1.0 - a));
                suffix += s.color * (a * t_front);

                d_alpha_total[ii] += d_a * weights[ii];

                // dG/dmean = G * Lambda d, dG/dA = G/2 (Lambda d)(Lambda d)^T
                const double d_g = d_a * s.alpha;
                if (d_g != 0.0) {
                    const Eigen::Vector2d diff = px - s.mean2d;
                    const Eigen::Vector2d ld = s.dilated_inv * diff;
                    const double gw = weights[ii];
                    d_mean2d[ii] += d_g * gw * ld;
                    d_cov2d[ii] += (0.5 * d_g * gw) * (ld * ld.transpose());
                }
            }
        }
    }

    // Fold per-splat image-space gradients back to scene parameters.
    for (size_t i = 0; i < n; ++i) {
        const auto& s = splats[i];
        const auto& g = set.gaussians[s.source_index];
        auto& out = grads.gaussians[s.source_index];

        // Color path: clamp gate, SH coefficients, then view direction.
        Rgb d_raw = d_color[i];
        for (int ch = 0; ch < 3; ++ch)
            if (s.raw_color[ch] <= 0.0 || s.raw_color[ch] >= 1.0)
                d_raw[ch] = 0.0;
        Eigen::Vector3d d_dir = Eigen::Vector3d::Zero();
        for (size_t k = 0; k < s.basis.size(); ++k) {
            out.sh[k] += s.basis[k] * d_raw;
            d_dir += s.basis_grad[k] * d_raw.dot(g.sh.coeffs[k]);
        }
        // n = v/|v|  =>  dn/dv = (I - n n^T)/|v|, v = q - origin
        if (s.view_dist > 1e-12) {
            const Eigen::Matrix3d jn =
                (Eigen::Matrix3d::Identity() - s.view_dir * s.view_dir.transpose()) /
                s.view_dist;
            out.position += jn.transpose() * d_dir;
        }

        // Opacity activation: alpha = min(sigmoid(t), cap).
        if (s.sigmoid_opacity < kAlphaCap)
            out.opacity_logit +=
                d_alpha_total[i] * s.sigmoid_opacity * (1.0 - s.sigmoid_opacity);

        // Covariance path. B = J Sigma' J^T, Sigma2D = topleft2(B).
        Eigen::Matrix3d gb = Eigen::Matrix3d::Zero();
        gb.topLeftCorner<2, 2>() = d_cov2d[i];
        const Eigen::Matrix3d d_jac = (gb + gb.transpose()) * s.jac * s.cam_cov;
        const Eigen::Matrix3d d_cam_cov = s.jac.transpose() * gb * s.jac;

        // Jacobian entries depend on the camera-space mean.
        const double z = s.cam_mean.z();
        const double inv_z2 = 1.0 / (z * z);
        Eigen::Vector3d d_cam_mean = Eigen::Vector3d::Zero();
        d_cam_mean.x() += d_jac(0, 2) * (-cam.fx * inv_z2);
        d_cam_mean.y() += d_jac(1, 2) * (-cam.fy * inv_z2);
        d_cam_mean.z() += d_jac(0, 0) * (-cam.fx * inv_z2) +
                          d_jac(1, 1) * (-cam.fy * inv_z2) +
                          d_jac(0, 2) * (2.0 * cam.fx * s.cam_mean.x() / (z * z * z)) +
                          d_jac(1, 2) * (2.0 * cam.fy * s.cam_mean.y() / (z * z * z));

        // Projection of the mean.
        d_cam_mean.x() += d_mean2d[i].x() * cam.fx / z;
        d_cam_mean.y() += d_mean2d[i].y() * cam.fy / z;
        d_cam_mean.z() += d_mean2d[i].x() * (-cam.fx * s.cam_mean.x() * inv_z2) +
                          d_mean2d[i].y() * (-cam.fy * s.cam_mean.y() * inv_z2);

        out.position += cam.R.transpose() * d_cam_mean;

        // World covariance: Sigma' = R Sigma R^T.
        const Eigen::Matrix3d d_sigma_world = cam.R.transpose() * d_cam_cov * cam.R;

        // Sigma = U D U^T with D = diag(exp(2 ls)).
        const Eigen::Vector4d quat = g.rotation / g.rotation.norm();
        const Eigen::Matrix3d u = quaternion_to_rotation(g.rotation);
        const Eigen::Vector3d d_diag = (2.0 * g.log_scale.array()).exp();
        const Eigen::Matrix3d sym = 0.5 * (d_sigma_world + d_sigma_world.transpose());
        const Eigen::Matrix3d d_in_u_frame = u.transpose() * sym * u;
        for (int axis = 0; axis < 3; ++axis)
            out.log_scale[axis] += d_in_u_frame(axis, axis) * 2.0 * d_diag[axis];

        const Eigen::Matrix3d d_u = 2.0 * sym * u * d_diag.asDiagonal();
        const double w = quat[0], qx = quat[1], qy = quat[2], qz = quat[3];
        Eigen::Matrix3d du_dq[4];
        du_dq[0] << 0, -qz, qy, qz, 0, -qx, -qy, qx, 0;
        du_dq[1] << 0, qy, qz, qy, -2 * qx, -w, qz, w, -2 * qx;
        du_dq[2] << -2 * qy, qx, w, qx, 0, qz, -w, qz, -2 * qy;
        du_dq[3] << -2 * qz, -w, qx, w, -2 * qz, qy, qx, qy, 0;
        Eigen::Vector4d d_unit_quat;
        for (int k = 0; k < 4; ++k)
            d_unit_quat[k] = 2.0 * (d_u.cwiseProduct(du_dq[k])).sum();
        // Through the normalization of the stored quaternion.
        const double qnorm = g.rotation.norm();
        out.rotation += (d_unit_quat - quat * quat.dot(d_unit_quat)) / qnorm;
    }
    return grads;
}

} // namespace gs
