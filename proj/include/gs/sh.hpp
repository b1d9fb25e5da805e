#pragma once

#include <Eigen/Dense>
#include <vector>

namespace gs::sh {

// 1 / (2 sqrt(pi)) — the degree-0 basis constant.
inline constexpr double kY00 = 0.28209479177387814;

inline constexpr int coeff_count(int degree) { return (degree + 1) * (degree + 1); }

// Real spherical-harmonics basis evaluated at a unit direction, graphics
// convention (no Condon-Shortley phase). Coefficient order within the output
// is band-major: index l*l + l + m for band l, order m in [-l, l].
//
// Works for any degree; evaluation uses the A_m/B_m azimuthal recurrence and
// the sectoral-seeded Legendre recurrence so no per-degree tables are needed.
void eval_basis(int degree, const Eigen::Vector3d& dir, std::vector<double>& out);

// Basis plus its gradient with respect to the (unnormalized-polynomial)
// direction components. Callers on the unit sphere must chain through the
// normalization Jacobian themselves.
void eval_basis_grad(int degree, const Eigen::Vector3d& dir, std::vector<double>& out,
                     std::vector<Eigen::Vector3d>& grad_out);

} // namespace gs::sh
