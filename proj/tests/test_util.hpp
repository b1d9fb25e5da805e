#pragma once

#include "gs/camera.hpp"
#include "gs/losses.hpp"
#include "gs/rasterizer.hpp"
#include "gs/scene.hpp"
#include "gs/trainer.hpp"

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace gs::testutil {

// Central finite difference with a step relative to the parameter magnitude
// (floored so a zero-valued parameter still gets a usable probe).
inline double fd_central(const std::function<double()>& eval, double& param,
                         double rel_step = 1e-3) {
    const double original = param;
    const double step = rel_step * std::max(std::abs(original), 0.01);
    param = original + step;
    const double plus = eval();
    param = original - step;
    const double minus = eval();
    param = original;
    return (plus - minus) / (2.0 * step);
}

inline bool close_rel(double a, double b, double rel, double abs_floor) {
    const double diff = std::abs(a - b);
    return diff <= std::max(abs_floor, rel * std::max(std::abs(a), std::abs(b)));
}

struct NamedParam {
    std::string name;
    double* value;
    const double* grad;
};

// Pairs every scalar parameter of the scene with its slot in a GradientSet.
inline std::vector<NamedParam> parameter_view(GaussianSet& set, const GradientSet& grads) {
    std::vector<NamedParam> params;
    for (size_t i = 0; i < set.size(); ++i) {
        auto& g = set.gaussians[i];
        const auto& dg = grads.gaussians[i];
        const std::string prefix = "g" + std::to_string(i) + ".";
        for (int k = 0; k < 3; ++k)
            params.push_back({prefix + "position[" + std::to_string(k) + "]",
                              &g.position[k], &dg.position[k]});
        for (int k = 0; k < 3; ++k)
            params.push_back({prefix + "log_scale[" + std::to_string(k) + "]",
                              &g.log_scale[k], &dg.log_scale[k]});
        for (int k = 0; k < 4; ++k)
            params.push_back({prefix + "rotation[" + std::to_string(k) + "]",
                              &g.rotation[k], &dg.rotation[k]});
        params.push_back({prefix + "opacity_logit", &g.opacity_logit, &dg.opacity_logit});
        for (size_t row = 0; row < g.sh.coeffs.size(); ++row)
            for (int ch = 0; ch < 3; ++ch)
                params.push_back({prefix + "sh[" + std::to_string(row) + "][" +
                                      std::to_string(ch) + "]",
                                  &g.sh.coeffs[row][ch], &dg.sh[row][ch]});
    }
    return params;
}

inline Camera make_test_camera(int size = 16) {
    Camera cam;
    cam.width = size;
    cam.height = size;
    cam.fx = cam.fy = static_cast<double>(size);
    cam.cx = (size - 1) / 2.0;
    cam.cy = (size - 1) / 2.0;
    return cam;
}

// A small scene framed by make_test_camera: distinct depths, moderate
// opacities, SH colors kept away from the [0,1] clamp, one wide Gaussian so
// every pixel sees structure.
inline GaussianSet make_random_scene(uint64_t seed, int max_gaussians = 8,
                                     int max_degree = 3) {
    Rng rng(seed);
    GaussianSet set;
    set.max_degree = max_degree;
    const int count = 4 + static_cast<int>(rng.next_below(max_gaussians - 3));
    for (int i = 0; i < count; ++i) {
        Gaussian3D g;
        g.position = Eigen::Vector3d(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                                     2.2 + 0.18 * i + rng.uniform(0.0, 0.08));
        const double sigma =
            i == 0 ? rng.uniform(0.8, 1.0) : rng.uniform(0.35, 0.8);
        for (int k = 0; k < 3; ++k)
            g.log_scale[k] = std::log(sigma * rng.uniform(0.85, 1.15));
        Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        g.rotation = q.normalized();
        g.opacity_logit = logit(rng.uniform(0.15, 0.6));
        const int degree = static_cast<int>(rng.next_below(max_degree + 1));
        g.sh = SHBank::zeros(degree);
        for (int ch = 0; ch < 3; ++ch)
            g.sh.coeffs[0][ch] = rng.uniform(-0.5, 0.5);
        for (size_t row = 1; row < g.sh.coeffs.size(); ++row)
            for (int ch = 0; ch < 3; ++ch)
                g.sh.coeffs[row][ch] = rng.uniform(-0.015, 0.015);
        set.gaussians.push_back(std::move(g));
    }
    return set;
}

// Ground truth offset from the render by +-0.15 per channel so the L1 term
// never sits on its kink during finite-difference probes.
inline ImageF offset_ground_truth(const ImageF& rendered, uint64_t seed) {
    Rng rng(seed);
    ImageF gt = rendered;
    for (double& v : gt.data) {
        const double sign = rng.next_below(2) == 0 ? 1.0 : -1.0;
        v = std::clamp(v + 0.15 * sign, 0.0, 1.0);
    }
    return gt;
}

struct Phase1Setup {
    GaussianSet scene;
    Camera camera;
    RasterConfig raster;
    LossConfig loss;
    ImageF ground_truth;
};

inline Phase1Setup make_phase1_setup(uint64_t seed, int image_size = 16) {
    Phase1Setup s;
    s.scene = make_random_scene(seed);
    s.camera = make_test_camera(image_size);
    s.raster.background = Rgb(0.2, 0.2, 0.2);
    s.ground_truth = offset_ground_truth(render(s.scene, s.camera, s.raster), seed ^ 0xabcdefULL);
    return s;
}

inline double phase1_loss_value(const GaussianSet& set, const Phase1Setup& s) {
    const ImageF img = render(set, s.camera, s.raster);
    const double l1 = l1_loss(img, s.ground_truth);
    const double tv = tv_loss(img);
    const double dssim = d_ssim_loss(img, s.ground_truth, s.loss.dssim_kernel,
                                     s.loss.dssim_stride, s.loss.ssim_c1, s.loss.ssim_c2);
    return total_loss(1, l1, dssim, 0.0, tv, s.loss).value;
}

// Camera on a horizontal orbit, looking at the origin, z forward in camera
// space.
inline Camera make_orbit_camera(double angle, double radius, int size, double fov_scale = 0.9) {
    const Eigen::Vector3d position(radius * std::cos(angle), 0.35 * std::sin(2.0 * angle),
                                   radius * std::sin(angle));
    const Eigen::Vector3d forward = (-position).normalized();
    const Eigen::Vector3d right = Eigen::Vector3d(0, 1, 0).cross(forward).normalized();
    const Eigen::Vector3d down = forward.cross(right); // x right, y down, z forward

    Camera cam;
    cam.width = cam.height = size;
    cam.fx = cam.fy = fov_scale * size;
    cam.cx = (size - 1) / 2.0;
    cam.cy = (size - 1) / 2.0;
    cam.R.row(0) = right.transpose();
    cam.R.row(1) = down.transpose();
    cam.R.row(2) = forward.transpose();
    cam.t = -cam.R * position;
    return cam;
}

struct RefitFixture {
    GaussianSet ground_truth_scene;
    GaussianSet perturbed_scene;
    std::vector<TrainView> views;
    RasterConfig raster;
};

// Five-Gaussian scene rendered from eight 64x64 orbit views, then perturbed
// with position noise (sigma 0.05) and color noise (sigma 0.1 on the DC
// coefficients). Training should recover the original to high PSNR.
inline RefitFixture make_refit_fixture(uint64_t seed, int image_size = 64,
                                       int n_views = 8) {
    RefitFixture fx;
    Rng rng(seed);

    fx.ground_truth_scene.max_degree = 1;
    const Rgb palette[5] = {Rgb(0.85, 0.25, 0.2), Rgb(0.2, 0.75, 0.3), Rgb(0.25, 0.35, 0.85),
                            Rgb(0.85, 0.8, 0.25), Rgb(0.7, 0.3, 0.75)};
    const Eigen::Vector3d centers[5] = {{0.0, 0.0, 0.0},
                                        {0.55, 0.2, 0.1},
                                        {-0.5, -0.15, 0.25},
                                        {0.15, 0.45, -0.4},
                                        {-0.2, -0.45, -0.3}};
    for (int i = 0; i < 5; ++i) {
        Gaussian3D g;
        g.position = centers[i];
        for (int k = 0; k < 3; ++k)
            g.log_scale[k] = std::log(rng.uniform(0.22, 0.34));
        Eigen::Vector4d q(1.0 + rng.uniform(-0.1, 0.1), rng.uniform(-0.3, 0.3),
                          rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
        g.rotation = q.normalized();
        g.opacity_logit = logit(rng.uniform(0.75, 0.9));
        const int degree = i < 2 ? 1 : 0;
        g.sh = SHBank::zeros(degree);
        g.sh.coeffs[0] = (palette[i].array() - 0.5).matrix() / sh::kY00;
        for (size_t row = 1; row < g.sh.coeffs.size(); ++row)
            for (int ch = 0; ch < 3; ++ch)
                g.sh.coeffs[row][ch] = rng.uniform(-0.05, 0.05);
        fx.ground_truth_scene.gaussians.push_back(std::move(g));
    }

    fx.raster.background = Rgb::Zero();
    for (int v = 0; v < n_views; ++v) {
        TrainView view;
        view.id = v;
        view.camera = make_orbit_camera(2.0 * M_PI * v / n_views, 2.6, image_size);
        view.ground_truth = render(fx.ground_truth_scene, view.camera, fx.raster);
        fx.views.push_back(std::move(view));
    }

    fx.perturbed_scene = fx.ground_truth_scene;
    for (auto& g : fx.perturbed_scene.gaussians) {
        for (int k = 0; k < 3; ++k)
            g.position[k] += 0.05 * rng.normal();
        for (int ch = 0; ch < 3; ++ch)
            g.sh.coeffs[0][ch] += 0.1 * rng.normal();
    }
    return fx;
}

inline double mean_view_psnr(const GaussianSet& set, const std::vector<TrainView>& views,
                             const RasterConfig& raster) {
    double sum = 0.0;
    for (const auto& v : views)
        sum += psnr(render(set, v.camera, raster), v.ground_truth);
    return sum / static_cast<double>(views.size());
}

// Loss weights from the schedule (lambda 0.5, beta 0.04, gamma 0.02) with a
// desk-scale switch point; learning rates sized for the five-Gaussian refit.
inline TrainConfig make_refit_config(int64_t iterations = 500, int64_t k_switch = 200) {
    TrainConfig cfg;
    cfg.iterations = iterations;
    cfg.loss.k_switch = k_switch;
    cfg.loss.patch_count = 10;
    cfg.seed = 99;
    cfg.loss.seed = 99;
    cfg.raster.background = Rgb::Zero();
    cfg.learning_rates.position = 2e-3;
    cfg.learning_rates.log_scale = 2.5e-3;
    cfg.learning_rates.rotation = 1e-3;
    cfg.learning_rates.opacity_logit = 2.5e-2;
    cfg.learning_rates.sh_dc = 5e-3;
    cfg.learning_rates.sh_rest = 1e-3;
    return cfg;
}

inline GradientSet phase1_loss_gradients(const GaussianSet& set, const Phase1Setup& s) {
    const ImageF img = render(set, s.camera, s.raster);
    const ImageF dl1 = l1_loss_backward(img, s.ground_truth);
    const ImageF dssim = ssim_backward(img, s.ground_truth, s.loss.dssim_kernel,
                                       s.loss.dssim_stride, s.loss.ssim_c1, s.loss.ssim_c2);
    const ImageF dtv = tv_loss_backward(img);
    ImageF dimg(img.height, img.width, img.channels);
    for (size_t i = 0; i < dimg.data.size(); ++i)
        dimg.data[i] = (1.0 - s.loss.lambda) * dl1.data[i] - s.loss.lambda * dssim.data[i] +
                       s.loss.beta * dtv.data[i];
    return render_backward(set, s.camera, s.raster, dimg);
}

} // namespace gs::testutil
