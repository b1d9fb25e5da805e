#include "gs/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gs {

void PointCloud::validate() const {
    if (positions.size() != colors.size())
        throw InvalidParameterError("point cloud: positions/colors length mismatch");
    for (const auto& c : colors)
        for (int i = 0; i < 3; ++i)
            if (!(c[i] >= 0.0 && c[i] <= 1.0))
                throw InvalidParameterError("point cloud: color channel outside [0,1]");
}

void SHInitConfig::validate() const {
    if (max_degree < 1)
        throw InvalidParameterError("sh init: max_degree must be >= 1");
    if (!(distance_scale > 0.0))
        throw InvalidParameterError("sh init: distance_scale must be positive");
    if (neighbor_count < 1)
        throw InvalidParameterError("sh init: neighbor_count must be >= 1");
    if (!(initial_opacity > 0.0 && initial_opacity < 1.0))
        throw InvalidParameterError("sh init: initial_opacity must be in (0,1)");
}

Eigen::Matrix3d quaternion_to_rotation(const Eigen::Vector4d& q) {
    if (!q.allFinite())
        throw InvalidParameterError("quaternion has non-finite components");
    const double norm = q.norm();
    if (norm < 1e-12)
        throw InvalidParameterError("quaternion has zero norm");
    const double w = q[0] / norm, x = q[1] / norm, y = q[2] / norm, z = q[3] / norm;
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Eigen::Matrix3d build_covariance(const Eigen::Vector3d& log_scale,
                                 const Eigen::Vector4d& rotation) {
    if (!log_scale.allFinite())
        throw InvalidParameterError("log_scale has non-finite components");
    const Eigen::Matrix3d u = quaternion_to_rotation(rotation);
    const Eigen::Vector3d s = log_scale.array().exp();
    const Eigen::Matrix3d m = u * s.asDiagonal();
    return m * m.transpose();
}

Rgb eval_sh(const SHBank& bank, const Eigen::Vector3d& view_dir) {
    if (!view_dir.allFinite())
        throw InvalidParameterError("view direction has non-finite components");
    std::vector<double> basis;
    sh::eval_basis(bank.degree, view_dir, basis);
    Rgb c = Rgb::Constant(0.5);
    for (size_t i = 0; i < basis.size(); ++i)
        c += basis[i] * bank.coeffs[i];
    return c.cwiseMax(0.0).cwiseMin(1.0);
}

std::vector<double> knn_mean_distance(const PointCloud& cloud, int k,
                                      DistanceNormalizer normalizer) {
    const size_t n = cloud.count();
    if (k < 1)
        throw InvalidParameterError("knn: k must be >= 1");
    if (n <= static_cast<size_t>(k))
        throw InsufficientPointsError("knn: need more points than neighbors");

    std::vector<double> result(n);
    std::vector<double> d2(n);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j)
            d2[j] = (cloud.positions[i] - cloud.positions[j]).squaredNorm();
        d2[i] = std::numeric_limits<double>::infinity(); // exclude self
        std::nth_element(d2.begin(), d2.begin() + (k - 1), d2.end());
        double sum = 0.0;
        for (int j = 0; j < k; ++j)
            sum += std::sqrt(d2[j]);
        result[i] = sum / k;
    }

    if (normalizer == DistanceNormalizer::kMedian) {
        std::vector<double> sorted = result;
        std::sort(sorted.begin(), sorted.end());
        const size_t mid = n / 2;
        const double median =
            (n % 2 == 1) ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
        if (median > 0.0)
            for (double& v : result)
                v /= median;
    }
    return result;
}

DegreeAssignment assign_sh_degree(double distance, int max_degree) {
    if (!std::isfinite(distance))
        throw InvalidParameterError("assign_sh_degree: distance must be finite");
    if (max_degree < 1)
        throw InvalidParameterError("assign_sh_degree: max_degree must be >= 1");
    const int rounded = static_cast<int>(std::floor(distance + 0.5)); // half-up
    const int d = std::max(1, std::min(rounded, max_degree));
    return {d, sh::coeff_count(d)};
}

Rgb init_sh_dc(const Rgb& rgb, double opacity) {
    if (!(opacity > 0.0 && opacity < 1.0))
        throw InvalidParameterError("init_sh_dc: opacity must be in (0,1)");
    return opacity * (rgb.array() - 0.5).matrix() / sh::kY00;
}

Rgb init_sh_higher(const Rgb& rgb, double opacity, double distance, double distance_scale,
                   int degree) {
    const Rgb v = rgb * opacity * (1.0 - std::exp(-distance_scale * distance));
    const int slots = sh::coeff_count(degree) - 1;
    return v / slots;
}

GaussianSet init_scene(const PointCloud& cloud, const SHInitConfig& cfg, ShInitMode mode) {
    cloud.validate();
    cfg.validate();
    if (cloud.count() == 0)
        throw InvalidParameterError("init_scene: empty point cloud");

    // Raw metric distances size the Gaussians; the (possibly normalized)
    // distances drive degree selection and damping.
    const std::vector<double> raw =
        knn_mean_distance(cloud, cfg.neighbor_count, DistanceNormalizer::kNone);
    std::vector<double> scaled = raw;
    if (cfg.distance_normalizer == DistanceNormalizer::kMedian) {
        std::vector<double> sorted = raw;
        std::sort(sorted.begin(), sorted.end());
        const size_t mid = sorted.size() / 2;
        const double median = (sorted.size() % 2 == 1)
                                  ? sorted[mid]
                                  : 0.5 * (sorted[mid - 1] + sorted[mid]);
        if (median > 0.0)
            for (double& v : scaled)
                v /= median;
    }

    GaussianSet set;
    set.max_degree = cfg.max_degree;
    set.gaussians.reserve(cloud.count());
    const double opacity_logit = logit(cfg.initial_opacity);

    for (size_t i = 0; i < cloud.count(); ++i) {
        Gaussian3D g;
        g.position = cloud.positions[i];
        const double dist = std::max(raw[i], 1e-10); // duplicate points would give log(0)
        g.log_scale = Eigen::Vector3d::Constant(std::log(dist));
        g.rotation = Eigen::Vector4d(1, 0, 0, 0);
        g.opacity_logit = opacity_logit;

        const Rgb& rgb = cloud.colors[i];
        if (mode == ShInitMode::kStandard) {
            g.sh = SHBank::zeros(cfg.max_degree);
            g.sh.coeffs[0] = (rgb.array() - 0.5).matrix() / sh::kY00;
        } else {
            const auto assign = assign_sh_degree(scaled[i], cfg.max_degree);
            g.sh = SHBank::zeros(assign.degree);
            const double alpha = cfg.initial_opacity;
            g.sh.coeffs[0] = init_sh_dc(rgb, alpha);
            if (cfg.higher_fill == HigherFill::kUniformFill) {
                const Rgb per_coeff = init_sh_higher(rgb, alpha, scaled[i],
                                                     cfg.distance_scale, assign.degree);
                for (int row = 1; row < assign.coeff_count; ++row)
                    g.sh.coeffs[row] = per_coeff;
            } else {
                const Rgb v =
                    rgb * alpha * (1.0 - std::exp(-cfg.distance_scale * scaled[i]));
                g.sh.coeffs[assign.coeff_count - 1] = v;
            }
        }
        set.gaussians.push_back(std::move(g));
    }
    return set;
}

std::vector<bool> opacity_keep_mask(const GaussianSet& set, double threshold) {
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw InvalidParameterError("prune: threshold must be in [0,1]");
    std::vector<bool> keep(set.size());
    for (size_t i = 0; i < set.size(); ++i)
        keep[i] = !(set.gaussians[i].opacity() < threshold);
    return keep;
}

GaussianSet prune(const GaussianSet& set, double threshold) {
    const auto keep = opacity_keep_mask(set, threshold);
    GaussianSet out;
    out.max_degree = set.max_degree;
    for (size_t i = 0; i < set.size(); ++i)
        if (keep[i])
            out.gaussians.push_back(set.gaussians[i]);
    if (out.gaussians.empty())
        throw EmptySceneError("prune: all Gaussians fell below the opacity threshold");
    return out;
}

std::vector<double> sh_variance_report(const GaussianSet& set) {
    if (set.gaussians.empty())
        throw EmptySceneError("sh_variance_report: empty scene");
    std::vector<double> variances(set.max_degree + 1, 0.0);
    for (int l = 0; l <= set.max_degree; ++l) {
        const int row_begin = l * l;
        const int row_end = (l + 1) * (l + 1);
        // Every Gaussian contributes (2l+1)*3 entries; banks that do not
        // reach band l contribute zeros (the global coefficient-array view).
        // Two-pass population variance keeps the all-zero bands exactly 0.
        double sum = 0.0;
        size_t count = 0;
        for (const auto& g : set.gaussians) {
            for (int row = row_begin; row < row_end; ++row) {
                for (int ch = 0; ch < 3; ++ch) {
                    sum += (g.sh.degree >= l) ? g.sh.coeffs[row][ch] : 0.0;
                    ++count;
                }
            }
        }
        const double mean = sum / count;
        double sq_dev = 0.0;
        for (const auto& g : set.gaussians) {
            for (int row = row_begin; row < row_end; ++row) {
                for (int ch = 0; ch < 3; ++ch) {
                    const double v = (g.sh.degree >= l) ? g.sh.coeffs[row][ch] : 0.0;
                    sq_dev += (v - mean) * (v - mean);
                }
            }
        }
        variances[l] = sq_dev / count;
    }
    return variances;
}

} // namespace gs
