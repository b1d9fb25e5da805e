#include "gs/camera.hpp"

#include "gs/common.hpp"
#include "gs/scene.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace gs;

namespace {

Camera basic_camera() {
    Camera cam;
    cam.width = 64;
    cam.height = 48;
    cam.fx = cam.fy = 40.0;
    cam.cx = 32.0;
    cam.cy = 24.0;
    return cam;
}

Eigen::Matrix3d rot90z() {
    Eigen::Matrix3d r;
    r << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    return r;
}

} // namespace

TEST(WorldToCamera, IdentityTransform) {
    const Camera cam = basic_camera();
    const Eigen::Vector3d q(0.3, -0.2, 4.0);
    const Eigen::Matrix3d sigma = Eigen::Vector3d(1, 2, 3).asDiagonal();
    const auto out = world_to_camera(q, sigma, cam);
    EXPECT_EQ(out.mean, q);
    EXPECT_EQ(out.cov, sigma);
}

TEST(WorldToCamera, TranslationLeavesCovariance) {
    Camera cam = basic_camera();
    cam.t = Eigen::Vector3d(0, 0, 5);
    const Eigen::Matrix3d sigma = Eigen::Vector3d(1, 2, 3).asDiagonal();
    const auto out = world_to_camera(Eigen::Vector3d::Zero(), sigma, cam);
    EXPECT_EQ(out.mean, Eigen::Vector3d(0, 0, 5));
    EXPECT_EQ(out.cov, sigma);
}

TEST(WorldToCamera, ConjugationByAxisPermutation) {
    Camera cam = basic_camera();
    cam.R = rot90z();
    const Eigen::Matrix3d sigma = Eigen::Vector3d(1, 4, 9).asDiagonal();
    const auto out = world_to_camera(Eigen::Vector3d::Zero(), sigma, cam);
    const Eigen::Matrix3d expected = Eigen::Vector3d(4, 1, 9).asDiagonal();
    EXPECT_LT((out.cov - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(WorldToCamera, PreservesEigenvalues) {
    Rng rng(13);
    Camera cam = basic_camera();
    // Random rotation via quaternion.
    Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    cam.R = quaternion_to_rotation(q);
    const Eigen::Matrix3d sigma =
        build_covariance(Eigen::Vector3d(0.1, -0.4, 0.7),
                         Eigen::Vector4d(rng.normal(), rng.normal(), rng.normal(),
                                         rng.normal())
                             .normalized());
    const auto out = world_to_camera(Eigen::Vector3d::Zero(), sigma, cam);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> before(sigma), after(out.cov);
    EXPECT_LT((before.eigenvalues() - after.eigenvalues()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(PerspectiveJacobian, DirectFormula) {
    Camera cam = basic_camera();
    cam.fx = cam.fy = 2.0;
    const Eigen::Matrix3d j = perspective_jacobian(Eigen::Vector3d(0, 0, 2), cam);
    EXPECT_DOUBLE_EQ(j(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(j(1, 1), 1.0);
    EXPECT_DOUBLE_EQ(j(0, 1), 0.0);
    EXPECT_DOUBLE_EQ(j(0, 2), 0.0);
    EXPECT_DOUBLE_EQ(j(1, 2), 0.0);
}

TEST(PerspectiveJacobian, OnAxisZeroCoupling) {
    const Camera cam = basic_camera();
    for (double z : {1.0, 2.5, 7.0}) {
        const Eigen::Matrix3d j = perspective_jacobian(Eigen::Vector3d(0, 0, z), cam);
        EXPECT_DOUBLE_EQ(j(0, 2), 0.0);
        EXPECT_DOUBLE_EQ(j(1, 2), 0.0);
    }
}

TEST(PerspectiveJacobian, FocalOverDepthScaling) {
    const Camera cam = basic_camera();
    const Eigen::Matrix3d j1 = perspective_jacobian(Eigen::Vector3d(0, 0, 2), cam);
    const Eigen::Matrix3d j2 = perspective_jacobian(Eigen::Vector3d(0, 0, 4), cam);
    EXPECT_DOUBLE_EQ(j2(0, 0), j1(0, 0) / 2.0);
}

TEST(PerspectiveJacobian, BehindCameraThrows) {
    const Camera cam = basic_camera();
    EXPECT_THROW(perspective_jacobian(Eigen::Vector3d(0, 0, -1), cam), BehindCameraError);
    EXPECT_THROW(perspective_jacobian(Eigen::Vector3d(0, 0, 0.001), cam), BehindCameraError);
}

TEST(ProjectCovariance, BlockExtraction) {
    Eigen::Matrix3d j = Eigen::Matrix3d::Identity();
    const Eigen::Matrix3d sigma = Eigen::Vector3d(1, 4, 9).asDiagonal();
    const Eigen::Matrix2d out = project_covariance(sigma, j);
    Eigen::Matrix2d expected;
    expected << 1, 0, 0, 4;
    EXPECT_EQ(out, expected);
}

TEST(ProjectCovariance, ZeroAndBilinearity) {
    const Camera cam = basic_camera();
    const Eigen::Matrix3d j = perspective_jacobian(Eigen::Vector3d(0.4, 0.2, 3.0), cam);
    EXPECT_EQ(project_covariance(Eigen::Matrix3d::Zero(), j), Eigen::Matrix2d::Zero());

    const Eigen::Matrix3d sigma =
        build_covariance(Eigen::Vector3d(0.2, -0.1, 0.3),
                         Eigen::Vector4d(0.9, 0.1, -0.3, 0.2).normalized());
    const Eigen::Matrix2d base = project_covariance(sigma, j);
    const Eigen::Matrix2d scaled = project_covariance(sigma, (2.0 * j).eval());
    EXPECT_LT((scaled - 4.0 * base).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ProjectCovariance, SymmetricPsdOutput) {
    Rng rng(77);
    const Camera cam = basic_camera();
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Matrix3d sigma = build_covariance(
            Eigen::Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)),
            Eigen::Vector4d(rng.normal(), rng.normal(), rng.normal(), rng.normal())
                .normalized());
        const Eigen::Vector3d p(rng.uniform(-1, 1), rng.uniform(-1, 1),
                                rng.uniform(1.0, 5.0));
        const Eigen::Matrix2d cov2d = project_covariance(sigma, perspective_jacobian(p, cam));
        EXPECT_LT((cov2d - cov2d.transpose()).cwiseAbs().maxCoeff(), 1e-9);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov2d);
        EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
    }
}

TEST(ProjectPoint, PrincipalPointAndFormula) {
    const Camera cam = basic_camera();
    EXPECT_EQ(project_point(Eigen::Vector3d(0, 0, 3), cam), Eigen::Vector2d(32, 24));

    Camera cam2 = basic_camera();
    cam2.fx = 10;
    cam2.cx = 0;
    const Eigen::Vector2d p = project_point(Eigen::Vector3d(1, 0, 1), cam2);
    EXPECT_DOUBLE_EQ(p.x(), 10.0);
    EXPECT_DOUBLE_EQ(p.y(), cam2.cy);
}

TEST(ProjectPoint, RayScaleInvariance) {
    const Camera cam = basic_camera();
    const Eigen::Vector2d a = project_point(Eigen::Vector3d(1, 0, 1), cam);
    const Eigen::Vector2d b = project_point(Eigen::Vector3d(2, 0, 2), cam);
    EXPECT_EQ(a, b);

    Rng rng(19);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Vector3d q(rng.uniform(-1, 1), rng.uniform(-1, 1),
                                rng.uniform(0.5, 4.0));
        const double lambda = rng.uniform(0.5, 3.0);
        const Eigen::Vector2d p1 = project_point(q, cam);
        const Eigen::Vector2d p2 = project_point((lambda * q).eval(), cam);
        EXPECT_LT((p1 - p2).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(ProjectPoint, UnitFocalRoundTrip) {
    Camera cam;
    cam.width = 8;
    cam.height = 8;
    cam.fx = cam.fy = 1.0;
    cam.cx = cam.cy = 0.0;
    const Eigen::Vector2d p = project_point(Eigen::Vector3d(0.7, -0.3, 1.0), cam);
    EXPECT_DOUBLE_EQ(p.x(), 0.7);
    EXPECT_DOUBLE_EQ(p.y(), -0.3);
}

namespace {

GaussianSet single_gaussian_at(const Eigen::Vector3d& pos, double sigma = 0.05) {
    GaussianSet set;
    set.max_degree = 0;
    Gaussian3D g;
    g.position = pos;
    g.log_scale = Eigen::Vector3d::Constant(std::log(sigma));
    g.opacity_logit = logit(0.5);
    g.sh = SHBank::zeros(0);
    set.gaussians.push_back(g);
    return set;
}

} // namespace

TEST(FrustumCull, BehindCameraExcluded) {
    const Camera cam = basic_camera();
    EXPECT_TRUE(frustum_cull(single_gaussian_at({0, 0, -2}), cam).empty());
}

TEST(FrustumCull, CenterIncluded) {
    const Camera cam = basic_camera();
    const auto kept = frustum_cull(single_gaussian_at({0, 0, 3}), cam);
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0], 0);
}

TEST(FrustumCull, PaddingAdmitsNearbyOffscreenGaussian) {
    const Camera cam = basic_camera();
    // Project 1 px left of the border; 3 sigma is ~5 px for this size/depth.
    const double z = 3.0;
    const double x_px = -1.0;
    const double x_world = (x_px - cam.cx) * z / cam.fx;
    const double sigma_world = (5.0 / 3.0) * z / cam.fx; // 3 sigma = 5 px
    const auto kept = frustum_cull(single_gaussian_at({x_world, 0, z}, sigma_world), cam);
    EXPECT_EQ(kept.size(), 1u);

    // Far outside the padded rectangle: excluded.
    const double far_x_world = (-40.0 - cam.cx) * z / cam.fx;
    EXPECT_TRUE(frustum_cull(single_gaussian_at({far_x_world, 0, z}, sigma_world), cam)
                    .empty());
}

TEST(FrustumCull, PreservesOrder) {
    const Camera cam = basic_camera();
    GaussianSet set;
    set.max_degree = 0;
    for (int i = 0; i < 5; ++i) {
        Gaussian3D g;
        g.position = Eigen::Vector3d(0.1 * i, 0, i % 2 == 0 ? 3.0 : -1.0);
        g.log_scale = Eigen::Vector3d::Constant(std::log(0.05));
        g.sh = SHBank::zeros(0);
        set.gaussians.push_back(g);
    }
    const auto kept = frustum_cull(set, cam);
    ASSERT_EQ(kept.size(), 3u);
    EXPECT_EQ(kept[0], 0);
    EXPECT_EQ(kept[1], 2);
    EXPECT_EQ(kept[2], 4);
}

TEST(CameraValidate, RejectsBadRotations) {
    Camera cam = basic_camera();
    cam.R(0, 0) = 2.0;
    EXPECT_THROW(cam.validate(), InvalidParameterError);

    Camera mirrored = basic_camera();
    mirrored.R = Eigen::Vector3d(1, 1, -1).asDiagonal(); // det = -1
    EXPECT_THROW(mirrored.validate(), InvalidParameterError);
}
