#pragma once

#include "gs/common.hpp"
#include "gs/sh.hpp"

#include <Eigen/Dense>
#include <vector>

namespace gs {

using Rgb = Eigen::Vector3d;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

struct PointCloud {
    std::vector<Eigen::Vector3d> positions;
    std::vector<Rgb> colors; // channels in [0, 1]

    size_t count() const { return positions.size(); }
    void validate() const;
};

// Per-Gaussian spherical-harmonics coefficients, (degree+1)^2 rows of RGB.
struct SHBank {
    int degree = 0;
    std::vector<Rgb> coeffs;

    static SHBank zeros(int degree) {
        SHBank b;
        b.degree = degree;
        b.coeffs.assign(sh::coeff_count(degree), Rgb::Zero());
        return b;
    }
};

struct Gaussian3D {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
    Eigen::Vector4d rotation = Eigen::Vector4d(1, 0, 0, 0); // unit quaternion (w, x, y, z)
    double opacity_logit = 0.0;
    SHBank sh;

    double opacity() const { return sigmoid(opacity_logit); }
};

struct GaussianSet {
    std::vector<Gaussian3D> gaussians;
    int max_degree = 3;

    size_t size() const { return gaussians.size(); }
};

enum class DistanceNormalizer { kMedian, kNone };
enum class ShInitMode { kStandard, kDynamic };
// How the higher-band coefficients receive the distance-modulated value:
// spread uniformly over all bands 1..D (damped), or written only into the
// last coefficient slot. Uniform is the default.
enum class HigherFill { kUniformFill, kLastCoeffOnly };

struct SHInitConfig {
    int max_degree = 5;         // upper bound M on the SH degree
    double distance_scale = 1.0; // s, scales distance in the exponential damping
    int neighbor_count = 3;      // k for the mean-distance metric
    DistanceNormalizer distance_normalizer = DistanceNormalizer::kMedian;
    HigherFill higher_fill = HigherFill::kUniformFill;
    double initial_opacity = 0.1;

    void validate() const;
};

// Rotation matrix of a quaternion (w, x, y, z). Normalizes internally;
// throws InvalidParameterError on zero or non-finite input.
Eigen::Matrix3d quaternion_to_rotation(const Eigen::Vector4d& q);

// Sigma = U diag(exp(log_scale))^2 U^T. Symmetric PSD by construction.
Eigen::Matrix3d build_covariance(const Eigen::Vector3d& log_scale,
                                 const Eigen::Vector4d& rotation);

// View-dependent color: clamp(0.5 + sum Y_lm(dir) * c_lm, 0, 1) per channel.
Rgb eval_sh(const SHBank& bank, const Eigen::Vector3d& view_dir);

// Per point, the mean Euclidean distance to its k nearest neighbors
// (self excluded), optionally divided by the median of all values.
std::vector<double> knn_mean_distance(const PointCloud& cloud, int k,
                                      DistanceNormalizer normalizer);

struct DegreeAssignment {
    int degree;      // D = max(1, min(round(d), M))
    int coeff_count; // nu = (D+1)^2
};
DegreeAssignment assign_sh_degree(double distance, int max_degree);

// DC coefficient encoding the point color scaled by opacity, blended against
// the 0.5 background of the eval_sh offset: alpha * (rgb - 0.5) / Y00.
Rgb init_sh_dc(const Rgb& rgb, double opacity);

// Uniform per-coefficient value for bands 1..D:
//   v = rgb * alpha * (1 - exp(-s d)),   coeff = v / ((D+1)^2 - 1)
Rgb init_sh_higher(const Rgb& rgb, double opacity, double distance, double distance_scale,
                   int degree);

GaussianSet init_scene(const PointCloud& cloud, const SHInitConfig& cfg, ShInitMode mode);

// Drops every Gaussian with sigmoid(opacity_logit) < threshold, order
// preserved. Throws EmptySceneError if nothing survives.
GaussianSet prune(const GaussianSet& set, double threshold);

std::vector<bool> opacity_keep_mask(const GaussianSet& set, double threshold);

// Population variance of coefficient entries per degree, pooled over
// Gaussians and channels; banks with degree < l contribute zeros for band l.
// Index l of the result is the variance of band l, for l in [0, max_degree].
std::vector<double> sh_variance_report(const GaussianSet& set);

} // namespace gs
