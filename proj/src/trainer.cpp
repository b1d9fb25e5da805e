#include "gs/trainer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace gs {

void LearningRates::validate() const {
    for (double v : {position, log_scale, rotation, opacity_logit, sh_dc, sh_rest})
        if (!(v > 0.0))
            throw InvalidParameterError("train: learning rates must be positive");
}

void TrainConfig::validate() const {
    if (iterations < 1)
        throw InvalidParameterError("train: iterations must be >= 1");
    if (!(prune_threshold >= 0.0 && prune_threshold <= 1.0))
        throw InvalidParameterError("train: prune_threshold must be in [0,1]");
    if (prune_every < 0 || checkpoint_every < 0)
        throw InvalidParameterError("train: cadence values must be non-negative");
    learning_rates.validate();
    loss.validate();
    sh_init.validate();
}

OptimizerState OptimizerState::zeros_like(const GaussianSet& set) {
    OptimizerState s;
    s.gaussians.resize(set.size());
    for (size_t i = 0; i < set.size(); ++i) {
        s.gaussians[i].m_sh.assign(set.gaussians[i].sh.coeffs.size(), Rgb::Zero());
        s.gaussians[i].v_sh.assign(set.gaussians[i].sh.coeffs.size(), Rgb::Zero());
    }
    return s;
}

namespace {

inline void adam_update(double& param, double grad, double& m, double& v, double lr,
                        double beta1, double beta2, double eps, double bias1,
                        double bias2) {
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad * grad;
    const double m_hat = m / bias1;
    const double v_hat = v / bias2;
    param -= lr * m_hat / (std::sqrt(v_hat) + eps);
}

} // namespace

bool adam_step(GaussianSet& set, const GradientSet& grads, OptimizerState& state,
               const LearningRates& lr) {
    if (grads.gaussians.size() != set.size() || state.gaussians.size() != set.size())
        throw ShapeMismatchError("adam_step: gradient/state shape mismatch");
    if (!grads.all_finite())
        return false;

    state.step += 1;
    const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

    for (size_t i = 0; i < set.size(); ++i) {
        auto& g = set.gaussians[i];
        const auto& dg = grads.gaussians[i];
        auto& st = state.gaussians[i];

        for (int k = 0; k < 3; ++k) {
            adam_update(g.position[k], dg.position[k], st.m_position[k], st.v_position[k],
                        lr.position, state.beta1, state.beta2, state.epsilon, bias1, bias2);
            adam_update(g.log_scale[k], dg.log_scale[k], st.m_log_scale[k],
                        st.v_log_scale[k], lr.log_scale, state.beta1, state.beta2,
                        state.epsilon, bias1, bias2);
        }
        for (int k = 0; k < 4; ++k)
            adam_update(g.rotation[k], dg.rotation[k], st.m_rotation[k], st.v_rotation[k],
                        lr.rotation, state.beta1, state.beta2, state.epsilon, bias1, bias2);
        adam_update(g.opacity_logit, dg.opacity_logit, st.m_opacity, st.v_opacity,
                    lr.opacity_logit, state.beta1, state.beta2, state.epsilon, bias1, bias2);
        for (size_t row = 0; row < g.sh.coeffs.size(); ++row) {
            const double row_lr = row == 0 ? lr.sh_dc : lr.sh_rest;
            for (int ch = 0; ch < 3; ++ch)
                adam_update(g.sh.coeffs[row][ch], dg.sh[row][ch], st.m_sh[row][ch],
                            st.v_sh[row][ch], row_lr, state.beta1, state.beta2,
                            state.epsilon, bias1, bias2);
        }

        const double norm = g.rotation.norm();
        if (norm > 1e-12)
            g.rotation /= norm;
        else
            g.rotation = Eigen::Vector4d(1, 0, 0, 0);
    }
    return true;
}

namespace {

void apply_prune(GaussianSet& set, OptimizerState& state, double threshold) {
    const auto keep = opacity_keep_mask(set, threshold);
    GaussianSet pruned_set;
    pruned_set.max_degree = set.max_degree;
    OptimizerState pruned_state;
    pruned_state.step = state.step;
    pruned_state.beta1 = state.beta1;
    pruned_state.beta2 = state.beta2;
    pruned_state.epsilon = state.epsilon;
    for (size_t i = 0; i < set.size(); ++i) {
        if (!keep[i])
            continue;
        pruned_set.gaussians.push_back(std::move(set.gaussians[i]));
        pruned_state.gaussians.push_back(std::move(state.gaussians[i]));
    }
    if (pruned_set.gaussians.empty())
        throw EmptySceneError("train: pruning removed every Gaussian");
    set = std::move(pruned_set);
    state = std::move(pruned_state);
}

} // namespace

TrainResult train(const GaussianSet& initial, const std::vector<TrainView>& views,
                  const TrainConfig& cfg, int64_t start_iteration,
                  const OptimizerState* initial_optimizer) {
    cfg.validate();
    if (views.empty())
        throw InvalidParameterError("train: need at least one camera");
    for (const auto& v : views) {
        v.camera.validate(1e-4);
        if (v.ground_truth.height != v.camera.height ||
            v.ground_truth.width != v.camera.width || v.ground_truth.channels != 3)
            throw ShapeMismatchError("train: ground truth size does not match camera");
    }
    if (initial.gaussians.empty())
        throw EmptySceneError("train: empty initial scene");

    TrainResult result;
    result.set = initial;
    result.optimizer = initial_optimizer ? *initial_optimizer
                                         : OptimizerState::zeros_like(initial);
    if (result.optimizer.gaussians.size() != initial.size())
        throw ShapeMismatchError("train: optimizer state does not match scene");

    const size_t n_views = views.size();
    std::vector<int> view_order(n_views);
    int64_t shuffled_epoch = -1;

    for (int64_t iter = start_iteration + 1; iter <= start_iteration + cfg.iterations;
         ++iter) {
        // Round-robin with a fresh seeded shuffle each epoch.
        const int64_t epoch = (iter - 1) / static_cast<int64_t>(n_views);
        if (epoch != shuffled_epoch) {
            std::iota(view_order.begin(), view_order.end(), 0);
            Rng rng(mix_seed(cfg.seed, 0x45504f43ULL + static_cast<uint64_t>(epoch)));
            for (size_t i = n_views; i > 1; --i)
                std::swap(view_order[i - 1], view_order[rng.next_below(i)]);
            shuffled_epoch = epoch;
        }
        const TrainView& view = views[view_order[(iter - 1) % n_views]];

        const ImageF rendered = render(result.set, view.camera, cfg.raster);

        const double l1 = l1_loss(rendered, view.ground_truth);
        const double tv = tv_loss(rendered);
        double dssim = 0.0, pssim = 0.0;
        std::vector<PatchPair> patches;
        const bool first_phase = iter <= cfg.loss.k_switch;
        if (first_phase) {
            dssim = d_ssim_loss(rendered, view.ground_truth, cfg.loss.dssim_kernel,
                                cfg.loss.dssim_stride, cfg.loss.ssim_c1, cfg.loss.ssim_c2);
        } else {
            patches = sample_stochastic_patches(
                mix_seed(cfg.seed, static_cast<uint64_t>(iter)), rendered.height,
                rendered.width, cfg.loss.patch_count);
            pssim = p_ssim_loss(rendered, view.ground_truth, patches, cfg.loss);
        }
        const TotalLoss total = total_loss(iter, l1, dssim, pssim, tv, cfg.loss);

        // dTotal/dImage from the active branch.
        ImageF dimg(rendered.height, rendered.width, rendered.channels);
        {
            const ImageF dl1 = l1_loss_backward(rendered, view.ground_truth);
            const ImageF dtv = tv_loss_backward(rendered);
            ImageF dssim_term =
                first_phase
                    ? ssim_backward(rendered, view.ground_truth, cfg.loss.dssim_kernel,
                                    cfg.loss.dssim_stride, cfg.loss.ssim_c1,
                                    cfg.loss.ssim_c2)
                    : p_ssim_backward(rendered, view.ground_truth, patches, cfg.loss);
            const double tv_weight = first_phase ? cfg.loss.beta : cfg.loss.gamma;
            for (size_t i = 0; i < dimg.data.size(); ++i)
                dimg.data[i] = (1.0 - cfg.loss.lambda) * dl1.data[i] -
                               cfg.loss.lambda * dssim_term.data[i] +
                               tv_weight * dtv.data[i];
        }

        const GradientSet grads =
            render_backward(result.set, view.camera, cfg.raster, dimg);
        const bool applied =
            adam_step(result.set, grads, result.optimizer, cfg.learning_rates);

        IterationRecord rec;
        rec.iteration = iter;
        rec.phase = total.phase;
        rec.l1 = l1;
        rec.ssim_term = first_phase ? dssim : pssim;
        rec.tv = tv;
        rec.total = total.value;
        rec.skipped = !applied;

        if (cfg.prune_every > 0 && iter % cfg.prune_every == 0)
            apply_prune(result.set, result.optimizer, cfg.prune_threshold);
        rec.gaussian_count = static_cast<int64_t>(result.set.size());
        result.log.iterations.push_back(rec);

        const bool last = iter == start_iteration + cfg.iterations;
        if (last || (cfg.checkpoint_every > 0 && iter % cfg.checkpoint_every == 0)) {
            EvalRecord ev;
            ev.iteration = iter;
            for (const auto& v : views)
                ev.psnr_per_camera.push_back(
                    psnr(render(result.set, v.camera, cfg.raster), v.ground_truth));
            ev.sh_variance = sh_variance_report(result.set);
            result.log.evals.push_back(std::move(ev));
        }
        result.final_iteration = iter;
    }
    return result;
}

double psnr(const ImageF& img, const ImageF& gt) {
    require_same_shape(img, gt, "psnr");
    double mse = 0.0;
    for (size_t i = 0; i < img.data.size(); ++i) {
        const double d = img.data[i] - gt.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(img.data.size());
    if (mse <= 0.0)
        return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

MetricsTable evaluate(const GaussianSet& set, const std::vector<TrainView>& views,
                      const TrainConfig& cfg, const msrn::MSRNModel* sr_model,
                      const std::vector<ImageF>* full_res_gt) {
    MetricsTable table;
    if (sr_model && (!full_res_gt || full_res_gt->size() != views.size()))
        throw InvalidParameterError(
            "evaluate: super-resolution scoring needs full-resolution ground truths");

    double sum_psnr = 0.0, sum_ssim = 0.0, sum_sr_psnr = 0.0, sum_sr_ssim = 0.0;
    for (size_t i = 0; i < views.size(); ++i) {
        const auto& view = views[i];
        const ImageF rendered = render(set, view.camera, cfg.raster);
        MetricsRow row;
        row.camera_id = view.id;
        row.psnr = psnr(rendered, view.ground_truth);
        row.ssim = ssim(rendered, view.ground_truth, cfg.loss.dssim_kernel,
                        cfg.loss.dssim_stride, cfg.loss.ssim_c1, cfg.loss.ssim_c2);
        sum_psnr += row.psnr;
        sum_ssim += row.ssim;
        if (sr_model) {
            const ImageF sr = msrn::msrn_forward(rendered, *sr_model);
            const ImageF& gt_hr = (*full_res_gt)[i];
            row.sr_psnr = psnr(sr, gt_hr);
            row.sr_ssim = ssim(sr, gt_hr, cfg.loss.dssim_kernel, cfg.loss.dssim_stride,
                               cfg.loss.ssim_c1, cfg.loss.ssim_c2);
            sum_sr_psnr += *row.sr_psnr;
            sum_sr_ssim += *row.sr_ssim;
        }
        table.rows.push_back(std::move(row));
    }
    const double n = static_cast<double>(views.size());
    table.mean_psnr = sum_psnr / n;
    table.mean_ssim = sum_ssim / n;
    if (sr_model) {
        table.mean_sr_psnr = sum_sr_psnr / n;
        table.mean_sr_ssim = sum_sr_ssim / n;
    }
    return table;
}

void write_train_log(const TrainLog& log, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw IoError("cannot open train log for writing: " + path);
    for (const auto& r : log.iterations) {
        nlohmann::json j{{"type", "iteration"},
                         {"iteration", r.iteration},
                         {"phase", phase_tag(r.phase)},
                         {"l1", r.l1},
                         {r.phase == LossPhase::kDSsim ? "dssim" : "pssim", r.ssim_term},
                         {"tv", r.tv},
                         {"total", r.total},
                         {"gaussians", r.gaussian_count}};
        if (r.skipped)
            j["skipped"] = true;
        out << j.dump() << '\n';
    }
    for (const auto& e : log.evals) {
        nlohmann::json j{{"type", "eval"},
                         {"iteration", e.iteration},
                         {"psnr", e.psnr_per_camera},
                         {"sh_variance", e.sh_variance}};
        out << j.dump() << '\n';
    }
    if (!out)
        throw IoError("failed writing train log: " + path);
}

} // namespace gs
