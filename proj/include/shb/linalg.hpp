// linalg.hpp - matrix exponential action, Gauss-Legendre rules, stable sums
#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "core.hpp"

namespace shb::linalg {

// Dense exp(M t) v via scaling and squaring (Pade 13).
inline Eigen::VectorXd expm_dense_action(const Eigen::MatrixXd& M, double t, const Eigen::VectorXd& v) {
    const Eigen::MatrixXd E = (M * t).exp();
    return E * v;
}

// Krylov (Arnoldi) approximation of exp(M t) v with substeps, following
// Sidje's expv error estimate. Used above the dense threshold.
inline Eigen::VectorXd expm_krylov_action(const Eigen::MatrixXd& M, double t, const Eigen::VectorXd& v,
                                          double tol = 1e-10, int m_max = 40) {
    const Eigen::Index n = v.size();
    const int m = static_cast<int>(std::min<Eigen::Index>(m_max, n));
    Eigen::VectorXd w = v;
    double t_done = 0.0;
    const double anorm = M.lpNorm<Eigen::Infinity>();
    if (anorm == 0.0 || t == 0.0) return w;
    double h = std::min(t, 1.0 / anorm * 10.0);
    int guard = 0;

    while (t_done < t) {
        if (++guard > 1000000) throw NumericalError("Krylov exponential failed to advance");
        const double beta = w.norm();
        if (beta == 0.0) return w;
        Eigen::MatrixXd V(n, m + 1);
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m + 2, m + 2);
        V.col(0) = w / beta;
        int mm = m;
        bool breakdown = false;
        for (int j = 0; j < m; ++j) {
            Eigen::VectorXd p = M * V.col(j);
            for (int i = 0; i <= j; ++i) {
                H(i, j) = V.col(i).dot(p);
                p -= H(i, j) * V.col(i);
            }
            const double s = p.norm();
            if (s < 1e-14 * anorm) {
                mm = j + 1;
                breakdown = true;
                break;
            }
            H(j + 1, j) = s;
            V.col(j + 1) = p / s;
        }
        const double avnorm = breakdown ? 0.0 : (M * V.col(mm)).norm();
        if (!breakdown) H(mm + 1, mm) = 1.0;
        const int dim = breakdown ? mm : mm + 2;

        double step = std::min(h, t - t_done);
        for (int attempt = 0; attempt < 60; ++attempt) {
            const Eigen::MatrixXd F = (H.topLeftCorner(dim, dim) * step).exp();
            double err = 0.0;
            if (!breakdown) {
                const double e1 = std::abs(F(mm, 0)) * beta;
                const double e2 = std::abs(F(mm + 1, 0)) * beta * avnorm;
                err = e1 > 10.0 * e2 ? e2 : (e1 > e2 ? e1 * e2 / (e1 - e2) : e1);
            }
            if (err <= tol * step / t * std::max(1.0, beta) || breakdown) {
                w = V.leftCols(mm) * (beta * F.col(0).head(mm));
                t_done += step;
                h = step * 2.0;
                break;
            }
            step *= 0.5;
            if (attempt == 59) throw NumericalError("Krylov exponential step control failed");
        }
    }
    return w;
}

inline constexpr Eigen::Index kDenseExpmLimit = 1024;

inline Eigen::VectorXd expm_action(const Eigen::MatrixXd& M, double t, const Eigen::VectorXd& v) {
    if (!M.allFinite()) throw NumericalError("non-finite entries in rate matrix");
    if (M.rows() <= kDenseExpmLimit) return expm_dense_action(M, t, v);
    return expm_krylov_action(M, t, v);
}

// ------- Quadrature -------

struct GaussRule {
    std::vector<double> x;  // nodes on [-1, 1], ascending
    std::vector<double> w;
};

// Newton on Legendre polynomials; the second half is mirrored so the rule is
// exactly symmetric.
inline GaussRule gauss_legendre(int n) {
    if (n < 1) throw ValidationError("Gauss-Legendre order must be >= 1");
    GaussRule r;
    r.x.assign(static_cast<std::size_t>(n), 0.0);
    r.w.assign(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int k = 1; k <= n; ++k) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
            }
            dp = n * (z * p0 - p1) / (z * z - 1.0);
            const double dz = p0 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        double p0 = 1.0, p1 = 0.0;
        for (int k = 1; k <= n; ++k) {
            const double p2 = p1;
            p1 = p0;
            p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
        }
        dp = n * (z * p0 - p1) / (z * z - 1.0);
        const double w = 2.0 / ((1.0 - z * z) * dp * dp);
        const auto lo = static_cast<std::size_t>(i), hi = static_cast<std::size_t>(n - 1 - i);
        r.x[lo] = -z;
        r.x[hi] = z;
        r.w[lo] = w;
        r.w[hi] = w;
    }
    if (n % 2 == 1) r.x[static_cast<std::size_t>(n / 2)] = 0.0;
    return r;
}

// ------- Cauchy integrals -------

// Exact integral of f(x)/(z - x) over [x0, x1] for f linear between the
// endpoint samples. With Im z = +0 the logarithm branch supplies the
// -i*pi*f(Re z) principal-value jump.
// When z sits exactly on an endpoint the logarithmic singularity is dropped:
// it cancels against the neighbouring segment.
inline std::complex<double> cauchy_segment(double x0, double x1, double f0, double f1, std::complex<double> z) {
    const double h = x1 - x0;
    const double s = (f1 - f0) / h;
    const std::complex<double> fz = f0 + s * (z - x0);
    const bool on_axis = z.imag() == 0.0;
    const std::complex<double> l0 = on_axis && z.real() == x0 ? 0.0 : std::log(z - x0);
    const std::complex<double> l1 = on_axis && z.real() == x1 ? 0.0 : std::log(z - x1);
    return fz * (l0 - l1) - s * h;
}

// Integral of f(x)/(z - x) for f sampled on an increasing grid, piecewise
// linear in between and zero outside.
inline std::complex<double> cauchy_integral(const std::vector<double>& x, const std::vector<double>& f,
                                            std::complex<double> z) {
    std::complex<double> acc = 0.0;
    for (std::size_t k = 0; k + 1 < x.size(); ++k) {
        if (f[k] == 0.0 && f[k + 1] == 0.0) continue;
        acc += cauchy_segment(x[k], x[k + 1], f[k], f[k + 1], z);
    }
    return acc;
}

// ------- Summation -------

// Pairwise sum of a[first, last) in fixed index order.
template <class Get>
auto pairwise_sum(std::size_t first, std::size_t last, const Get& get) -> decltype(get(first)) {
    if (last - first == 1) return get(first);
    if (last - first == 2) return get(first) + get(first + 1);
    const std::size_t mid = first + (last - first) / 2;
    return pairwise_sum(first, mid, get) + pairwise_sum(mid, last, get);
}

}  // namespace shb::linalg
