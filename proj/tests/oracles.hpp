// Brute-force reference implementations used by the tests. Everything here
// works on full dense matrices and shares no code with the library beyond
// the input structs.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "shb/lattice.hpp"
#include "shb/spin_model.hpp"

namespace oracle {

inline Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

// Single-nucleus operator op on nucleus l embedded in ns nuclei, with bit l of
// the basis index being nucleus l (so nucleus 0 is the fastest index).
inline Eigen::MatrixXd embed(const Eigen::Matrix2d& op, int l, int ns) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Identity(1, 1);
    for (int k = ns - 1; k >= 0; --k) out = kron(out, k == l ? Eigen::MatrixXd(op) : Eigen::MatrixXd::Identity(2, 2));
    return out;
}

// Nuclear Hamiltonian of one electron branch on the full 2^ns space. Basis
// state 0 of each nucleus is spin up.
inline Eigen::MatrixXd branch_hamiltonian(const shb::lattice::BathConfiguration& bath, const shb::spin::SpinParams& p,
                                          shb::spin::Branch br) {
    const int ns = bath.size();
    Eigen::Matrix2d iz, ix;
    iz << 0.5, 0.0, 0.0, -0.5;
    ix << 0.0, 0.5, 0.5, 0.0;
    const double wI = p.gamma_w * p.b0.norm();
    const double jz = br == shb::spin::Branch::e ? p.jz_e : p.jz_g;
    const auto n = Eigen::Index{1} << ns;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
    for (int l = 0; l < ns; ++l) {
        const auto& s = bath.sites[static_cast<std::size_t>(l)];
        double A = s.A;
        if (s.branch_override) A = br == shb::spin::Branch::e ? s.branch_override->first : s.branch_override->second;
        H += (wI + jz * A) * embed(iz, l, ns) + jz * s.B * embed(ix, l, ns);
    }
    return H;
}

struct DenseSystem {
    Eigen::VectorXd energies_e, energies_g;   // ascending
    Eigen::MatrixXd vectors_e, vectors_g;
    // elements(i, j) = 1/2 <e_i|g_j> over the full dense eigenbases
    Eigen::MatrixXd elements;
};

inline DenseSystem dense_system(const shb::lattice::BathConfiguration& bath, const shb::spin::SpinParams& p) {
    DenseSystem d;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> se(branch_hamiltonian(bath, p, shb::spin::Branch::e));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> sg(branch_hamiltonian(bath, p, shb::spin::Branch::g));
    d.energies_e = se.eigenvalues();
    d.energies_g = sg.eigenvalues();
    d.vectors_e = se.eigenvectors();
    d.vectors_g = sg.eigenvectors();
    d.elements = 0.5 * d.vectors_e.transpose() * d.vectors_g;
    return d;
}

// Index of the dense eigenvalue closest to `value`.
inline Eigen::Index nearest(const Eigen::VectorXd& v, double value) {
    Eigen::Index best = 0;
    (v.array() - value).abs().minCoeff(&best);
    return best;
}

// Explicit fourth-order Runge-Kutta for d rho/dt = M rho.
inline Eigen::VectorXd rk4(const Eigen::MatrixXd& M, Eigen::VectorXd y, double t, double h) {
    const auto steps = static_cast<long>(std::llround(t / h));
    for (long s = 0; s < steps; ++s) {
        const Eigen::VectorXd k1 = M * y;
        const Eigen::VectorXd k2 = M * (y + 0.5 * h * k1);
        const Eigen::VectorXd k3 = M * (y + 0.5 * h * k2);
        const Eigen::VectorXd k4 = M * (y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return y;
}

// Normalized null vector of M from a full-pivot LU of M with one row replaced
// by the normalization constraint.
inline Eigen::VectorXd null_vector(const Eigen::MatrixXd& M) {
    Eigen::MatrixXd A = M;
    A.row(0).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(M.rows());
    b[0] = 1.0;
    return A.fullPivLu().solve(b);
}

// Plain O(N^2) DFT of complex samples.
inline std::vector<std::complex<double>> dft(const std::vector<std::complex<double>>& x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc = 0.0;
        for (std::size_t m = 0; m < n; ++m)
            acc += x[m] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * m % n) / static_cast<double>(n));
        out[k] = acc;
    }
    return out;
}

// Hand-built bath with explicit couplings (rad/s).
inline shb::lattice::BathConfiguration bath_from(const std::vector<std::pair<double, double>>& ab) {
    shb::lattice::BathConfiguration b;
    int k = 0;
    for (auto [A, B] : ab) {
        shb::lattice::NuclearSite s;
        s.displacement_nm = Eigen::Vector3d(0.4 + 0.1 * k, 0.0, 0.0);
        s.distance_nm = s.displacement_nm.norm();
        s.A = A;
        s.B = B;
        b.sites.push_back(s);
        ++k;
    }
    return b;
}

}  // namespace oracle
