#pragma once

#include "gs/camera.hpp"
#include "gs/image.hpp"
#include "gs/losses.hpp"
#include "gs/msrn.hpp"
#include "gs/rasterizer.hpp"
#include "gs/scene.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gs {

struct LearningRates {
    double position = 1.6e-4;
    double log_scale = 5e-3;
    double rotation = 1e-3;
    double opacity_logit = 5e-2;
    double sh_dc = 2.5e-3;
    double sh_rest = 1.25e-4;

    void validate() const;
};

struct TrainConfig {
    int64_t iterations = 1000;
    LossConfig loss;
    SHInitConfig sh_init;
    RasterConfig raster;
    LearningRates learning_rates;
    int64_t prune_every = 100;
    double prune_threshold = 0.005;
    uint64_t seed = 0;
    int64_t checkpoint_every = 0; // 0 disables periodic eval records

    void validate() const;
};

// Adam moments, shape-congruent with the GaussianSet they optimize.
struct OptimizerState {
    struct PerGaussian {
        Eigen::Vector3d m_position = Eigen::Vector3d::Zero(), v_position = Eigen::Vector3d::Zero();
        Eigen::Vector3d m_log_scale = Eigen::Vector3d::Zero(), v_log_scale = Eigen::Vector3d::Zero();
        Eigen::Vector4d m_rotation = Eigen::Vector4d::Zero(), v_rotation = Eigen::Vector4d::Zero();
        double m_opacity = 0.0, v_opacity = 0.0;
        std::vector<Rgb> m_sh, v_sh;
    };
    std::vector<PerGaussian> gaussians;
    int64_t step = 0;
    double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;

    static OptimizerState zeros_like(const GaussianSet& set);
};

struct IterationRecord {
    int64_t iteration = 0;
    LossPhase phase = LossPhase::kDSsim;
    double l1 = 0.0;
    double ssim_term = 0.0; // dssim or pssim, depending on phase
    double tv = 0.0;
    double total = 0.0;
    int64_t gaussian_count = 0;
    bool skipped = false; // non-finite gradients, update was skipped
};

struct EvalRecord {
    int64_t iteration = 0;
    std::vector<double> psnr_per_camera;
    std::vector<double> sh_variance;
};

struct TrainLog {
    std::vector<IterationRecord> iterations;
    std::vector<EvalRecord> evals;
};

struct TrainView {
    Camera camera;
    ImageF ground_truth;
    int id = 0;
};

// One Adam update over every parameter group; quaternions are renormalized
// afterwards. Returns false (and leaves everything untouched) when the
// gradients contain non-finite values.
bool adam_step(GaussianSet& set, const GradientSet& grads, OptimizerState& state,
               const LearningRates& lr);

struct TrainResult {
    GaussianSet set;
    OptimizerState optimizer;
    TrainLog log;
    int64_t final_iteration = 0;
};

// The optimization loop: round-robin camera pick (seeded shuffle per epoch),
// render, loss by schedule, backward, Adam, periodic pruning.
// start_iteration lets a run resume from a checkpoint.
TrainResult train(const GaussianSet& initial, const std::vector<TrainView>& views,
                  const TrainConfig& cfg, int64_t start_iteration = 0,
                  const OptimizerState* initial_optimizer = nullptr);

// 10 log10(1 / MSE) on the [0,1] range, capped at 99 dB (the MSE=0 sentinel).
double psnr(const ImageF& img, const ImageF& gt);

struct MetricsRow {
    int camera_id = 0;
    double psnr = 0.0;
    double ssim = 0.0;
    std::optional<double> sr_psnr;
    std::optional<double> sr_ssim;
};

struct MetricsTable {
    std::vector<MetricsRow> rows;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    std::optional<double> mean_sr_psnr;
    std::optional<double> mean_sr_ssim;
};

// Per camera and averaged PSNR/SSIM of render vs ground truth. With a model,
// renders are additionally super-resolved and scored against the supplied
// full-resolution ground truths.
MetricsTable evaluate(const GaussianSet& set, const std::vector<TrainView>& views,
                      const TrainConfig& cfg, const msrn::MSRNModel* sr_model = nullptr,
                      const std::vector<ImageF>* full_res_gt = nullptr);

void write_train_log(const TrainLog& log, const std::string& path);

} // namespace gs
