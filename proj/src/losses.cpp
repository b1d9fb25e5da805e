#include "gs/losses.hpp"

#include <algorithm>
#include <cmath>

namespace gs {

void LossConfig::validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw InvalidParameterError("loss: lambda must be in [0,1]");
    if (beta < 0.0 || gamma < 0.0)
        throw InvalidParameterError("loss: tv weights must be non-negative");
    if (patch_count < 1)
        throw InvalidParameterError("loss: patch_count must be >= 1");
    if (kernel < 1 || stride < 1 || dssim_kernel < 1 || dssim_stride < 1)
        throw InvalidParameterError("loss: kernel and stride must be >= 1");
}

double l1_loss(const ImageF& rendered, const ImageF& gt) {
    require_same_shape(rendered, gt, "l1_loss");
    double sum = 0.0;
    for (size_t i = 0; i < rendered.data.size(); ++i)
        sum += std::abs(rendered.data[i] - gt.data[i]);
    return sum / static_cast<double>(rendered.data.size());
}

ImageF l1_loss_backward(const ImageF& rendered, const ImageF& gt) {
    require_same_shape(rendered, gt, "l1_loss_backward");
    ImageF grad(rendered.height, rendered.width, rendered.channels);
    const double scale = 1.0 / static_cast<double>(rendered.data.size());
    for (size_t i = 0; i < rendered.data.size(); ++i) {
        const double d = rendered.data[i] - gt.data[i];
        grad.data[i] = d > 0.0 ? scale : (d < 0.0 ? -scale : 0.0);
    }
    return grad;
}

namespace {

struct WindowStats {
    double mu_x, mu_y, var_x, var_y, cov;
};

// Population statistics over one kernel x kernel window of channel c.
WindowStats window_stats(const ImageF& x, const ImageF& y, int y0, int x0, int kernel,
                         int c) {
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (int dy = 0; dy < kernel; ++dy) {
        for (int dx = 0; dx < kernel; ++dx) {
            const double vx = x.at(y0 + dy, x0 + dx, c);
            const double vy = y.at(y0 + dy, x0 + dx, c);
            sx += vx;
            sy += vy;
            sxx += vx * vx;
            syy += vy * vy;
            sxy += vx * vy;
        }
    }
    const double m = static_cast<double>(kernel) * kernel;
    WindowStats s;
    s.mu_x = sx / m;
    s.mu_y = sy / m;
    s.var_x = sxx / m - s.mu_x * s.mu_x;
    s.var_y = syy / m - s.mu_y * s.mu_y;
    s.cov = sxy / m - s.mu_x * s.mu_y;
    return s;
}

void check_ssim_args(const ImageF& a, const ImageF& b, int kernel, int stride) {
    require_same_shape(a, b, "ssim");
    if (kernel < 1 || stride < 1)
        throw InvalidParameterError("ssim: kernel and stride must be >= 1");
    if (kernel > a.height || kernel > a.width)
        throw InvalidParameterError("ssim: kernel larger than image");
}

} // namespace

double ssim(const ImageF& rendered, const ImageF& gt, int kernel, int stride, double c1,
            double c2) {
    check_ssim_args(rendered, gt, kernel, stride);
    double total = 0.0;
    size_t count = 0;
    for (int c = 0; c < rendered.channels; ++c) {
        for (int y0 = 0; y0 + kernel <= rendered.height; y0 += stride) {
            for (int x0 = 0; x0 + kernel <= rendered.width; x0 += stride) {
                const auto s = window_stats(rendered, gt, y0, x0, kernel, c);
                const double a1 = 2.0 * s.mu_x * s.mu_y + c1;
                const double a2 = 2.0 * s.cov + c2;
                const double b1 = s.mu_x * s.mu_x + s.mu_y * s.mu_y + c1;
                const double b2 = s.var_x + s.var_y + c2;
                total += (a1 * a2) / (b1 * b2);
                ++count;
            }
        }
    }
    return total / static_cast<double>(count);
}

ImageF ssim_backward(const ImageF& rendered, const ImageF& gt, int kernel, int stride,
                     double c1, double c2) {
    check_ssim_args(rendered, gt, kernel, stride);
    ImageF grad(rendered.height, rendered.width, rendered.channels);

    size_t count = 0;
    for (int y0 = 0; y0 + kernel <= rendered.height; y0 += stride)
        for (int x0 = 0; x0 + kernel <= rendered.width; x0 += stride)
            ++count;
    count *= rendered.channels;
    const double m = static_cast<double>(kernel) * kernel;
    const double window_weight = 1.0 / static_cast<double>(count);

    for (int c = 0; c < rendered.channels; ++c) {
        for (int y0 = 0; y0 + kernel <= rendered.height; y0 += stride) {
            for (int x0 = 0; x0 + kernel <= rendered.width; x0 += stride) {
                const auto s = window_stats(rendered, gt, y0, x0, kernel, c);
                const double a1 = 2.0 * s.mu_x * s.mu_y + c1;
                const double a2 = 2.0 * s.cov + c2;
                const double b1 = s.mu_x * s.mu_x + s.mu_y * s.mu_y + c1;
                const double b2 = s.var_x + s.var_y + c2;
                const double denom = b1 * b2;
                const double value = (a1 * a2) / denom;

                // d(SSIM_w)/dx_i with population statistics:
                //   dmu/dx = 1/m, dcov/dx = (y_i - mu_y)/m, dvar/dx = 2(x_i - mu_x)/m
                for (int dy = 0; dy < kernel; ++dy) {
                    for (int dx = 0; dx < kernel; ++dx) {
                        const double xv = rendered.at(y0 + dy, x0 + dx, c);
                        const double yv = gt.at(y0 + dy, x0 + dx, c);
                        const double da1 = 2.0 * s.mu_y / m;
                        const double da2 = 2.0 * (yv - s.mu_y) / m;
                        const double db1 = 2.0 * s.mu_x / m;
                        const double db2 = 2.0 * (xv - s.mu_x) / m;
                        const double d =
                            (da1 * a2 + a1 * da2) / denom -
                            value * (db1 * b2 + b1 * db2) / denom;
                        grad.at(y0 + dy, x0 + dx, c) += window_weight * d;
                    }
                }
            }
        }
    }
    return grad;
}

double d_ssim_loss(const ImageF& rendered, const ImageF& gt, int kernel, int stride,
                   double c1, double c2) {
    return 1.0 - ssim(rendered, gt, kernel, stride, c1, c2);
}

std::vector<PatchPair> sample_stochastic_patches(uint64_t seed, int height, int width,
                                                 int patch_count) {
    if (patch_count < 1)
        throw InvalidParameterError("patches: patch_count must be >= 1");
    if (static_cast<int64_t>(height) * width < patch_count)
        throw InvalidParameterError("patches: more patches than pixels");
    if (height < patch_count)
        throw InvalidParameterError("patches: more patches than image rows");

    Rng rng(seed);
    std::vector<PatchPair> pairs;
    pairs.reserve(patch_count);

    // Near-equal contiguous row bands; the first (height % P) bands take the
    // extra row.
    const int base_rows = height / patch_count;
    const int extra = height % patch_count;
    int row = 0;
    for (int b = 0; b < patch_count; ++b) {
        const int rows = base_rows + (b < extra ? 1 : 0);
        PatchPair pair;
        pair.patch_height = rows;
        pair.patch_width = width;
        pair.pixel_indices.reserve(static_cast<size_t>(rows) * width);
        for (int y = row; y < row + rows; ++y)
            for (int x = 0; x < width; ++x)
                pair.pixel_indices.push_back(y * width + x);
        // Fisher-Yates with the shared deterministic stream.
        for (size_t i = pair.pixel_indices.size(); i > 1; --i) {
            const size_t j = rng.next_below(i);
            std::swap(pair.pixel_indices[i - 1], pair.pixel_indices[j]);
        }
        row += rows;
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

namespace {

ImageF gather_patch(const ImageF& img, const PatchPair& pair) {
    ImageF patch(pair.patch_height, pair.patch_width, img.channels);
    for (size_t i = 0; i < pair.pixel_indices.size(); ++i) {
        const int src = pair.pixel_indices[i];
        for (int c = 0; c < img.channels; ++c)
            patch.data[i * img.channels + c] =
                img.data[static_cast<size_t>(src) * img.channels + c];
    }
    return patch;
}

} // namespace

double p_ssim(const ImageF& rendered, const ImageF& gt, const std::vector<PatchPair>& pairs,
              const LossConfig& cfg) {
    require_same_shape(rendered, gt, "p_ssim");
    if (pairs.empty())
        throw InvalidParameterError("p_ssim: no patch pairs");
    double total = 0.0;
    for (const auto& pair : pairs) {
        const ImageF rp = gather_patch(rendered, pair);
        const ImageF gp = gather_patch(gt, pair);
        total += ssim(rp, gp, cfg.kernel, cfg.stride, cfg.ssim_c1, cfg.ssim_c2);
    }
    return total / static_cast<double>(pairs.size());
}

ImageF p_ssim_backward(const ImageF& rendered, const ImageF& gt,
                       const std::vector<PatchPair>& pairs, const LossConfig& cfg) {
    require_same_shape(rendered, gt, "p_ssim_backward");
    if (pairs.empty())
        throw InvalidParameterError("p_ssim_backward: no patch pairs");
    ImageF grad(rendered.height, rendered.width, rendered.channels);
    const double pair_weight = 1.0 / static_cast<double>(pairs.size());
    for (const auto& pair : pairs) {
        const ImageF rp = gather_patch(rendered, pair);
        const ImageF gp = gather_patch(gt, pair);
        const ImageF pg =
            ssim_backward(rp, gp, cfg.kernel, cfg.stride, cfg.ssim_c1, cfg.ssim_c2);
        // Scatter the patch gradient back through the gather.
        for (size_t i = 0; i < pair.pixel_indices.size(); ++i) {
            const int dst = pair.pixel_indices[i];
            for (int c = 0; c < rendered.channels; ++c)
                grad.data[static_cast<size_t>(dst) * rendered.channels + c] +=
                    pair_weight * pg.data[i * rendered.channels + c];
        }
    }
    return grad;
}

double p_ssim_loss(const ImageF& rendered, const ImageF& gt,
                   const std::vector<PatchPair>& pairs, const LossConfig& cfg) {
    return 1.0 - p_ssim(rendered, gt, pairs, cfg);
}

double tv_loss(const ImageF& img) {
    double sum = 0.0;
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                if (y + 1 < img.height)
                    sum += std::abs(img.at(y, x, c) - img.at(y + 1, x, c));
                if (x + 1 < img.width)
                    sum += std::abs(img.at(y, x, c) - img.at(y, x + 1, c));
            }
        }
    }
    return sum / static_cast<double>(img.data.size());
}

ImageF tv_loss_backward(const ImageF& img) {
    ImageF grad(img.height, img.width, img.channels);
    const double scale = 1.0 / static_cast<double>(img.data.size());
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                const double v = img.at(y, x, c);
                if (y + 1 < img.height) {
                    const double d = v - img.at(y + 1, x, c);
                    const double s = d > 0.0 ? scale : (d < 0.0 ? -scale : 0.0);
                    grad.at(y, x, c) += s;
                    grad.at(y + 1, x, c) -= s;
                }
                if (x + 1 < img.width) {
                    const double d = v - img.at(y, x + 1, c);
                    const double s = d > 0.0 ? scale : (d < 0.0 ? -scale : 0.0);
                    grad.at(y, x, c) += s;
                    grad.at(y, x + 1, c) -= s;
                }
            }
        }
    }
    return grad;
}

TotalLoss total_loss(int64_t iteration, double l1, double dssim, double pssim, double tv,
                     const LossConfig& cfg) {
    if (iteration < 1)
        throw InvalidParameterError("total_loss: iteration must be >= 1");
    TotalLoss out;
    if (iteration <= cfg.k_switch) {
        out.phase = LossPhase::kDSsim;
        out.value = (1.0 - cfg.lambda) * l1 + cfg.lambda * dssim + cfg.beta * tv;
    } else {
        out.phase = LossPhase::kPSsim;
        out.value = (1.0 - cfg.lambda) * l1 + cfg.lambda * pssim + cfg.gamma * tv;
    }
    return out;
}

} // namespace gs
