#include "gs/sh.hpp"

#include <cmath>

namespace gs::sh {

namespace {

// Normalization for band l, |m| = m. The sqrt(2) for m != 0 is folded in so
// the basis is orthonormal over the sphere in the real convention.
double norm_const(int l, int m) {
    double ratio = 1.0;
    for (int i = l - m + 1; i <= l + m; ++i)
        ratio *= static_cast<double>(i);
    const double four_pi = 4.0 * M_PI;
    double k = std::sqrt((2.0 * l + 1.0) / (four_pi * ratio));
    if (m != 0)
        k *= std::sqrt(2.0);
    return k;
}

} // namespace

// Q_l^m(z) = P_l^m(z) / sin(theta)^m is a polynomial in z; the sin^m factor
// lives in the azimuthal terms A_m, B_m = Re, Im[(x+iy)^m]. Recurrences:
//   Q_m^m     = (2m-1)!!
//   Q_{m+1}^m = (2m+1) z Q_m^m
//   Q_l^m     = ((2l-1) z Q_{l-1}^m - (l+m-1) Q_{l-2}^m) / (l-m)
void eval_basis(int degree, const Eigen::Vector3d& dir, std::vector<double>& out) {
    const int n = coeff_count(degree);
    out.assign(n, 0.0);
    const double x = dir.x(), y = dir.y(), z = dir.z();

    std::vector<double> a(degree + 1), b(degree + 1);
    a[0] = 1.0;
    b[0] = 0.0;
    for (int m = 1; m <= degree; ++m) {
        a[m] = x * a[m - 1] - y * b[m - 1];
        b[m] = x * b[m - 1] + y * a[m - 1];
    }

    for (int m = 0; m <= degree; ++m) {
        double q_prev2 = 0.0; // Q_{l-2}^m
        double q_prev1 = 0.0; // Q_{l-1}^m
        double sectoral = 1.0;
        for (int i = 1; i <= m; ++i)
            sectoral *= 2.0 * i - 1.0;
        for (int l = m; l <= degree; ++l) {
            double q;
            if (l == m)
                q = sectoral;
            else if (l == m + 1)
                q = (2.0 * m + 1.0) * z * q_prev1;
            else
                q = ((2.0 * l - 1.0) * z * q_prev1 - (l + m - 1.0) * q_prev2) / (l - m);
            q_prev2 = q_prev1;
            q_prev1 = q;

            const double k = norm_const(l, m);
            const int base = l * l + l;
            if (m == 0) {
                out[base] = k * q;
            } else {
                out[base + m] = k * q * a[m];
                out[base - m] = k * q * b[m];
            }
        }
    }
}

void eval_basis_grad(int degree, const Eigen::Vector3d& dir, std::vector<double>& out,
                     std::vector<Eigen::Vector3d>& grad_out) {
    const int n = coeff_count(degree);
    out.assign(n, 0.0);
    grad_out.assign(n, Eigen::Vector3d::Zero());
    const double x = dir.x(), y = dir.y(), z = dir.z();

    std::vector<double> a(degree + 1), b(degree + 1);
    a[0] = 1.0;
    b[0] = 0.0;
    for (int m = 1; m <= degree; ++m) {
        a[m] = x * a[m - 1] - y * b[m - 1];
        b[m] = x * b[m - 1] + y * a[m - 1];
    }
    // d(A+iB)/dx = m (x+iy)^{m-1}, d(A+iB)/dy = i m (x+iy)^{m-1}

    for (int m = 0; m <= degree; ++m) {
        double q_prev2 = 0.0, q_prev1 = 0.0;
        double dq_prev2 = 0.0, dq_prev1 = 0.0;
        double sectoral = 1.0;
        for (int i = 1; i <= m; ++i)
            sectoral *= 2.0 * i - 1.0;
        for (int l = m; l <= degree; ++l) {
            double q, dq;
            if (l == m) {
                q = sectoral;
                dq = 0.0;
            } else if (l == m + 1) {
                q = (2.0 * m + 1.0) * z * q_prev1;
                dq = (2.0 * m + 1.0) * (q_prev1 + z * dq_prev1);
            } else {
                q = ((2.0 * l - 1.0) * z * q_prev1 - (l + m - 1.0) * q_prev2) / (l - m);
                dq = ((2.0 * l - 1.0) * (q_prev1 + z * dq_prev1) - (l + m - 1.0) * dq_prev2) /
                     (l - m);
            }
            q_prev2 = q_prev1;
            q_prev1 = q;
            dq_prev2 = dq_prev1;
            dq_prev1 = dq;

            const double k = norm_const(l, m);
            const int base = l * l + l;
            if (m == 0) {
                out[base] = k * q;
                grad_out[base] = Eigen::Vector3d(0.0, 0.0, k * dq);
            } else {
                const double da_dx = m * a[m - 1];
                const double da_dy = -m * b[m - 1];
                const double db_dx = m * b[m - 1];
                const double db_dy = m * a[m - 1];
                out[base + m] = k * q * a[m];
                out[base - m] = k * q * b[m];
                grad_out[base + m] =
                    Eigen::Vector3d(k * q * da_dx, k * q * da_dy, k * dq * a[m]);
                grad_out[base - m] =
                    Eigen::Vector3d(k * q * db_dx, k * q * db_dy, k * dq * b[m]);
            }
        }
    }
}

} // namespace gs::sh
