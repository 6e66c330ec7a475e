// analysis.hpp - resonator inversion, line and decay fits, temperature models
#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"
#include "holeburn.hpp"
#include "linalg.hpp"

namespace shb::analysis {

using cplx = std::complex<double>;

// ------- Resonator -------

// omega0 is expressed in the frame of the density grid (0 for detunings).
struct ResonatorModel {
    double omega0 = 0.0;
    double kappa_c = 3e7;
    double kappa_i = 1e7;
    double g_ens = mhz(0.5);
    double gamma_h = khz(1.0);

    double kappa() const { return kappa_c + kappa_i; }
    double bare_on_resonance() const { return (kappa_i - kappa_c) / (kappa_i + kappa_c); }

    void validate() const {
        if (!(kappa_c > 0.0)) throw ValidationError("kappa_c must be > 0");
        if (!(kappa_i > 0.0)) throw ValidationError("kappa_i must be > 0");
        if (!(g_ens >= 0.0)) throw ValidationError("g_ens must be >= 0");
        if (!(gamma_h >= 0.0)) throw ValidationError("gamma_h must be >= 0");
    }
};

// W(w) = g^2 * integral rho(w') / (w - w' + i gamma_h / 2), with rho piecewise
// linear on its grid and zero outside it.
inline cplx coupling_w(const ResonatorModel& m, const holeburn::SpectralDensity& rho, double w) {
    if (rho.freq.size() != rho.values.size()) throw ValidationError("density grid and values differ in size");
    return m.g_ens * m.g_ens * linalg::cauchy_integral(rho.freq, rho.values, cplx(w, 0.5 * m.gamma_h));
}

inline cplx s11_from_w(const ResonatorModel& m, double w, cplx W) {
    return 1.0 - cplx(0.0, m.kappa_c) / (cplx(w - m.omega0, 0.5 * m.kappa()) - W);
}

inline cplx s11(const ResonatorModel& m, const holeburn::SpectralDensity& rho, double w) {
    m.validate();
    return s11_from_w(m, w, rho.freq.empty() ? cplx(0.0) : coupling_w(m, rho, w));
}

inline std::vector<double> s11_squared(const ResonatorModel& m, const holeburn::SpectralDensity& rho,
                                       const std::vector<double>& freq) {
    std::vector<double> out;
    out.reserve(freq.size());
    for (double w : freq) out.push_back(std::norm(s11(m, rho, w)));
    return out;
}

struct InversionOptions {
    bool self_consistent = true;
    int max_iterations = 60;
    double tolerance = 1e-10;
};

// Linear map rho -> W on the scan grid: W_k = sum_j C_kj rho_j for the
// piecewise-linear density of coupling_w.
inline Eigen::MatrixXcd coupling_matrix(const ResonatorModel& m, const std::vector<double>& freq) {
    const auto n = static_cast<Eigen::Index>(freq.size());
    Eigen::MatrixXcd C = Eigen::MatrixXcd::Zero(n, n);
    const double g2 = m.g_ens * m.g_ens;
    for (Eigen::Index k = 0; k < n; ++k) {
        const cplx z(freq[static_cast<std::size_t>(k)], 0.5 * m.gamma_h);
        for (Eigen::Index j = 0; j + 1 < n; ++j) {
            const double x0 = freq[static_cast<std::size_t>(j)], x1 = freq[static_cast<std::size_t>(j) + 1];
            C(k, j) += g2 * linalg::cauchy_segment(x0, x1, 1.0, 0.0, z);
            C(k, j + 1) += g2 * linalg::cauchy_segment(x0, x1, 0.0, 1.0, z);
        }
    }
    return C;
}

// Newton on the full forward model is used up to this many scan points;
// longer scans fall back to the local-coefficient iteration.
inline constexpr std::size_t kNewtonInversionLimit = 4096;

// Spin density (per rad/s, Im W = -pi g^2 rho) from |S11|^2 sampled on `freq`.
// The first pass is the linear-response estimate against the bare baseline.
// Self-consistent passes solve |S11(W(rho))|^2 = data by Newton steps with
// the exact Jacobian of the discretized model, or, on long scans, correct the
// residual with the local coefficient only.
inline std::vector<double> density_from_s11(const std::vector<double>& s11_sq, const std::vector<double>& freq,
                                            const ResonatorModel& m, const InversionOptions& opt = {}) {
    m.validate();
    if (s11_sq.size() != freq.size()) throw ValidationError("scan values and frequencies differ in size");
    for (std::size_t k = 1; k < freq.size(); ++k)
        if (!(freq[k] > freq[k - 1])) throw ValidationError("scan frequencies must be strictly increasing");
    if (std::abs(m.kappa_i - m.kappa_c) <= 1e-12 * m.kappa())
        throw NumericalError("singular inversion: kappa_i equals kappa_c");
    if (m.g_ens == 0.0) throw NumericalError("singular inversion: g_ens is zero");

    const std::size_t n = freq.size();
    const double g2pi = kPi * m.g_ens * m.g_ens;
    holeburn::SpectralDensity rho{freq, std::vector<double>(n, 0.0), {}};
    std::vector<cplx> W(n, 0.0);
    auto slope = [&](std::size_t k) {
        // d|S11|^2 / dW as a complex factor: 2 Re(conj(S) dS/dW dW).
        const cplx S = s11_from_w(m, freq[k], W[k]);
        const cplx D = cplx(freq[k] - m.omega0, 0.5 * m.kappa()) - W[k];
        return 2.0 * std::conj(S) * cplx(0.0, -m.kappa_c) / (D * D);
    };
    auto coefficient = [&](std::size_t k) { return (slope(k) * cplx(0.0, -g2pi)).real(); };

    // Linear response.
    for (std::size_t k = 0; k < n; ++k) {
        const double d = coefficient(k);
        if (std::abs(d) < 1e-300) throw NumericalError("singular inversion at scan point " + std::to_string(k));
        rho.values[k] = (s11_sq[k] - std::norm(s11_from_w(m, freq[k], 0.0))) / d;
    }
    if (!opt.self_consistent) return rho.values;

    const bool newton = n <= kNewtonInversionLimit;
    Eigen::MatrixXcd C;
    if (newton) C = coupling_matrix(m, freq);
    auto update_w = [&] {
        if (newton) {
            const Eigen::VectorXcd w = C * Eigen::Map<const Eigen::VectorXd>(rho.values.data(), static_cast<Eigen::Index>(n)).cast<cplx>();
            for (std::size_t k = 0; k < n; ++k) W[k] = w[static_cast<Eigen::Index>(k)];
        } else {
            for (std::size_t k = 0; k < n; ++k) W[k] = coupling_w(m, rho, freq[k]);
        }
    };

    double previous = std::numeric_limits<double>::infinity();
    for (int it = 0; it < opt.max_iterations; ++it) {
        update_w();
        Eigen::VectorXd r(static_cast<Eigen::Index>(n));
        for (std::size_t k = 0; k < n; ++k) r[static_cast<Eigen::Index>(k)] = s11_sq[k] - std::norm(s11_from_w(m, freq[k], W[k]));
        Eigen::VectorXd step(static_cast<Eigen::Index>(n));
        if (newton) {
            Eigen::MatrixXd J(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
            for (std::size_t k = 0; k < n; ++k) J.row(static_cast<Eigen::Index>(k)) = (slope(k) * C.row(static_cast<Eigen::Index>(k))).real();
            Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
            step = lu.solve(r);
            if (!step.allFinite()) throw NumericalError("singular inversion: Jacobian of the forward model");
        } else {
            for (std::size_t k = 0; k < n; ++k) {
                const double d = coefficient(k);
                if (std::abs(d) < 1e-300) throw NumericalError("singular inversion at scan point " + std::to_string(k));
                step[static_cast<Eigen::Index>(k)] = r[static_cast<Eigen::Index>(k)] / d;
            }
        }
        double change = 0.0, scale = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            rho.values[k] += step[static_cast<Eigen::Index>(k)];
            change = std::max(change, std::abs(step[static_cast<Eigen::Index>(k)]));
            scale = std::max(scale, std::abs(rho.values[k]));
        }
        if (change <= opt.tolerance * scale || scale == 0.0) return rho.values;
        // Updates stop shrinking once they reach the rounding floor of |S11|^2.
        if (change >= previous && change <= 1e-6 * scale) return rho.values;
        previous = change;
    }
    throw NumericalError("density inversion did not converge");
}

// Constant-baseline form (kappa_i + kappa_c)^3 / (4 kappa_c (kappa_i - kappa_c)) [|S11|^2 - S0^2].
inline std::vector<double> constant_baseline_density_from_s11(const std::vector<double>& s11_sq, const ResonatorModel& m) {
    m.validate();
    if (std::abs(m.kappa_i - m.kappa_c) <= 1e-12 * m.kappa())
        throw NumericalError("singular inversion: kappa_i equals kappa_c");
    const double k = m.kappa();
    const double pre = k * k * k / (4.0 * m.kappa_c * (m.kappa_i - m.kappa_c));
    const double s0 = m.bare_on_resonance();
    std::vector<double> out;
    for (double v : s11_sq) out.push_back(pre * (v - s0 * s0));
    return out;
}

inline std::vector<double> density_ratio(const std::vector<double>& rho1, const std::vector<double>& rho0) {
    if (rho1.size() != rho0.size()) throw ValidationError("density ratio needs equal-length scans");
    std::vector<double> r(rho1.size());
    for (std::size_t k = 0; k < r.size(); ++k) {
        if (rho0[k] == 0.0) throw NumericalError("reference density vanishes at point " + std::to_string(k));
        r[k] = rho1[k] / rho0[k];
    }
    return r;
}

// ------- Least squares -------

struct LeastSquares {
    Eigen::VectorXd x;
    Eigen::VectorXd residual;
    Eigen::MatrixXd jacobian;
    int evaluations = 0;
};

using ResidualFn = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;

namespace detail {

struct Functor {
    using Scalar = double;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;

    const ResidualFn* f;
    int n, m;
    int inputs() const { return n; }
    int values() const { return m; }
    int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
        (*f)(x, r);
        return r.allFinite() ? 0 : -1;
    }
};

}  // namespace detail

// Levenberg-Marquardt (MINPACK lmdif via Eigen) with central differences.
inline LeastSquares levenberg_marquardt(const ResidualFn& f, Eigen::VectorXd x0, int n_residuals, int max_evaluations = 4000) {
    detail::Functor fn{&f, static_cast<int>(x0.size()), n_residuals};
    Eigen::NumericalDiff<detail::Functor, Eigen::Central> nd(fn);
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<detail::Functor, Eigen::Central>> lm(nd);
    lm.parameters.maxfev = max_evaluations;
    lm.parameters.xtol = 1e-14;
    lm.parameters.ftol = 1e-14;
    const auto status = lm.minimize(x0);
    using namespace Eigen::LevenbergMarquardtSpace;
    if (status == ImproperInputParameters || status == TooManyFunctionEvaluation || status == UserAsked)
        throw FitError("least-squares fit did not converge (status " + std::to_string(static_cast<int>(status)) + ")");
    LeastSquares out;
    out.x = x0;
    out.residual.resize(n_residuals);
    fn(x0, out.residual);
    out.jacobian.resize(n_residuals, x0.size());
    nd.df(x0, out.jacobian);
    out.evaluations = static_cast<int>(lm.nfev);
    if (!out.residual.allFinite()) throw FitError("fit residuals are not finite");
    return out;
}

inline Eigen::MatrixXd covariance_from(const Eigen::MatrixXd& J, double rss, int dof) {
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const double s2 = dof > 0 ? rss / dof : 0.0;
    return s2 * JtJ.completeOrthogonalDecomposition().pseudoInverse();
}

// ------- Inhomogeneous line -------

struct LineScan {
    std::vector<double> b0;       // T
    std::vector<double> kappa_i;  // 1/s

    void validate() const {
        if (b0.size() != kappa_i.size()) throw ValidationError("line scan columns differ in length");
        if (b0.size() < 5) throw ValidationError("line scan needs at least 5 points");
        for (std::size_t k = 1; k < b0.size(); ++k)
            if (!(b0[k] > b0[k - 1])) throw ValidationError("line scan field grid must be strictly increasing");
    }
};

inline constexpr double kGammaParallel = kTwoPi * 17.35e9;  // rad/s/T
inline constexpr double kGammaPerp = kTwoPi * 117e9;

struct LineFit {
    double center_t = 0.0;
    double fwhm_t = 0.0;
    double fwhm_hz = 0.0;
    double amplitude = 0.0;
    double baseline = 0.0;
    Eigen::MatrixXd covariance;
};

inline double lorentz_line(double b, double base, double amp, double center, double fwhm) {
    const double u = 2.0 * (b - center) / fwhm;
    return base + amp / (1.0 + u * u);
}

inline LineFit fit_line(const LineScan& scan, double gamma_par = kGammaParallel) {
    scan.validate();
    const auto& x = scan.b0;
    const auto& y = scan.kappa_i;
    const auto [lo_it, hi_it] = std::minmax_element(y.begin(), y.end());
    const double span = *hi_it - *lo_it;
    if (!(span > 1e-12 * std::max(std::abs(*hi_it), 1e-300))) throw FitError("flat line scan: no peak to fit");
    const auto peak = static_cast<std::size_t>(hi_it - y.begin());
    const double base0 = std::min(y.front(), y.back());
    const double half = base0 + 0.5 * (*hi_it - base0);
    std::size_t l = peak, r = peak;
    while (l > 0 && y[l] > half) --l;
    while (r + 1 < y.size() && y[r] > half) ++r;
    double w0 = x[r] - x[l];
    if (!(w0 > 0.0)) w0 = 0.1 * (x.back() - x.front());

    // Parameters are scaled to O(1) so the finite-difference steps are sensible.
    const double xs = x.back() - x.front();
    const double ys = span;
    const int n = static_cast<int>(x.size());
    ResidualFn f = [&](const Eigen::VectorXd& p, Eigen::VectorXd& res) {
        res.resize(n);
        for (int k = 0; k < n; ++k)
            res[k] = (lorentz_line(x[static_cast<std::size_t>(k)], p[0] * ys, p[1] * ys, x.front() + p[2] * xs, p[3] * xs) -
                      y[static_cast<std::size_t>(k)]) / ys;
    };
    Eigen::VectorXd p0(4);
    p0 << base0 / ys, (*hi_it - base0) / ys, (x[peak] - x.front()) / xs, w0 / xs;
    const auto ls = levenberg_marquardt(f, p0, n);
    const Eigen::VectorXd& p = ls.x;
    if (!(std::abs(p[3]) > 0.0) || std::abs(p[3]) > 1e3) throw FitError("line fit width diverged");
    LineFit out;
    out.baseline = p[0] * ys;
    out.amplitude = p[1] * ys;
    out.center_t = x.front() + p[2] * xs;
    out.fwhm_t = std::abs(p[3]) * xs;
    out.fwhm_hz = out.fwhm_t * gamma_par / kTwoPi;
    Eigen::VectorXd scale(4);
    scale << ys, ys, xs, xs;
    out.covariance = scale.asDiagonal() * covariance_from(ls.jacobian, ls.residual.squaredNorm(), n - 4) * scale.asDiagonal();
    return out;
}

// ------- Field alignment -------

struct AlignmentParams {
    double gamma_par = kGammaParallel;
    double gamma_perp = kGammaPerp;
    double omega0 = ghz(7.839);
    double b_offset = 0.0;  // T
};

// Line-centre field B = omega0 / sqrt(gamma_par^2 cos^2 + gamma_perp^2 sin^2) + B_offset.
inline double alignment_model(double theta, const AlignmentParams& p) {
    if (!(p.gamma_par > 0.0) || !(p.gamma_perp > 0.0)) throw ValidationError("gyromagnetic ratios must be > 0");
    const double c = std::cos(theta), s = std::sin(theta);
    return p.omega0 / std::sqrt(p.gamma_par * p.gamma_par * c * c + p.gamma_perp * p.gamma_perp * s * s) + p.b_offset;
}

struct AlignmentFit {
    AlignmentParams params;
    Eigen::MatrixXd covariance;  // (gamma_par, gamma_perp, b_offset)
    double residual_rms = 0.0;
};

// Fits gamma_par, gamma_perp and B_offset with omega0 held fixed.
inline AlignmentFit fit_alignment(const std::vector<double>& theta, const std::vector<double>& b_peak,
                                  AlignmentParams guess = {}) {
    if (theta.size() != b_peak.size() || theta.size() < 4) throw ValidationError("alignment fit needs >= 4 (theta, B) pairs");
    const int n = static_cast<int>(theta.size());
    const double g0 = guess.gamma_par, g1 = guess.gamma_perp;
    double bscale = 0.0;
    for (double b : b_peak) bscale = std::max(bscale, std::abs(b));
    ResidualFn f = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        AlignmentParams q = guess;
        q.gamma_par = g0 * p[0];
        q.gamma_perp = g1 * p[1];
        q.b_offset = p[2] * bscale;
        r.resize(n);
        for (int k = 0; k < n; ++k) r[k] = (alignment_model(theta[static_cast<std::size_t>(k)], q) - b_peak[static_cast<std::size_t>(k)]) / bscale;
    };
    Eigen::VectorXd p0(3);
    p0 << 1.0, 1.0, guess.b_offset / bscale;
    const auto ls = levenberg_marquardt(f, p0, n);
    AlignmentFit out;
    out.params = guess;
    out.params.gamma_par = g0 * ls.x[0];
    out.params.gamma_perp = g1 * ls.x[1];
    out.params.b_offset = ls.x[2] * bscale;
    Eigen::Vector3d scale(g0, g1, bscale);
    out.covariance = scale.asDiagonal() * covariance_from(ls.jacobian, ls.residual.squaredNorm(), n - 3) * scale.asDiagonal();
    out.residual_rms = bscale * std::sqrt(ls.residual.squaredNorm() / n);
    return out;
}

// ------- Multi-exponential decays -------

struct DecayFit {
    std::vector<double> amplitudes;
    std::vector<double> taus;  // s, ascending
    int n_terms = 0;
    double residual_rms = 0.0;
    Eigen::MatrixXd covariance;  // (amplitudes..., taus...)
    bool degenerate = false;     // adjacent taus closer than a factor 1.5
    double t_min = 0.0, t_max = 0.0;

    double operator()(double t) const {
        double v = 0.0;
        for (int k = 0; k < n_terms; ++k) v += amplitudes[static_cast<std::size_t>(k)] * std::exp(-t / taus[static_cast<std::size_t>(k)]);
        return v;
    }
};

inline constexpr double kDegenerateTauRatio = 1.5;
inline constexpr int kMultiStarts = 8;

namespace detail {

struct Projection {
    Eigen::VectorXd amplitudes;
    Eigen::VectorXd residual;  // weighted
};

inline Projection project(const std::vector<double>& t, const Eigen::VectorXd& y, const Eigen::VectorXd& sw,
                          const Eigen::VectorXd& log_tau) {
    const auto m = static_cast<Eigen::Index>(t.size());
    Eigen::MatrixXd Phi(m, log_tau.size());
    for (Eigen::Index k = 0; k < log_tau.size(); ++k) {
        const double tau = std::exp(log_tau[k]);
        for (Eigen::Index i = 0; i < m; ++i) Phi(i, k) = sw[i] * std::exp(-t[static_cast<std::size_t>(i)] / tau);
    }
    const Eigen::VectorXd wy = sw.cwiseProduct(y);
    Projection p;
    p.amplitudes = Phi.colPivHouseholderQr().solve(wy);
    p.residual = Phi * p.amplitudes - wy;
    return p;
}

}  // namespace detail

// Variable projection: amplitudes are solved linearly for every set of
// log-taus, and LM runs over the log-taus only, from 8 log-spaced starts.
inline DecayFit fit_multi_exponential(const std::vector<double>& t, const std::vector<double>& y, int n_terms,
                                      std::vector<double> weights = {}) {
    if (n_terms < 1 || n_terms > 3) throw ValidationError("n_terms must be 1, 2 or 3");
    if (t.size() != y.size()) throw ValidationError("time and value arrays differ in length");
    if (2 * static_cast<std::size_t>(n_terms) >= t.size()) throw ValidationError("too few points for the requested terms");
    for (std::size_t k = 1; k < t.size(); ++k)
        if (!(t[k] > t[k - 1])) throw ValidationError("decay times must be strictly increasing");
    if (weights.empty()) weights.assign(t.size(), 1.0);
    if (weights.size() != t.size()) throw ValidationError("weights and data differ in length");
    for (double w : weights)
        if (!(w >= 0.0)) throw ValidationError("weights must be >= 0");
    const auto [lo_it, hi_it] = std::minmax_element(y.begin(), y.end());
    if (!(*hi_it - *lo_it > 1e-12 * std::max(std::abs(*hi_it), std::abs(*lo_it))))
        throw FitError("degenerate fit: constant data has no decay");

    const auto m = static_cast<Eigen::Index>(t.size());
    const double ys = std::max(std::abs(*hi_it), std::abs(*lo_it));
    Eigen::VectorXd Y(m), SW(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        Y[i] = y[static_cast<std::size_t>(i)] / ys;
        SW[i] = std::sqrt(weights[static_cast<std::size_t>(i)]);
    }
    double dt_min = t.back() - t.front();
    for (std::size_t k = 1; k < t.size(); ++k) dt_min = std::min(dt_min, t[k] - t[k - 1]);
    const double lo = std::log(std::max(dt_min, 1e-300)), hi = std::log(3.0 * std::max(t.back(), dt_min));

    ResidualFn f = [&](const Eigen::VectorXd& u, Eigen::VectorXd& r) { r = detail::project(t, Y, SW, u).residual; };

    double best_cost = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best;
    std::string last_error;
    for (int s = 0; s < kMultiStarts; ++s) {
        Eigen::VectorXd u0(n_terms);
        for (int k = 0; k < n_terms; ++k)
            u0[k] = lo + (hi - lo) * (k + (s + 0.5) / kMultiStarts) / n_terms;
        try {
            const auto ls = levenberg_marquardt(f, u0, static_cast<int>(m));
            const double cost = ls.residual.squaredNorm();
            if (cost < best_cost) {
                best_cost = cost;
                best = ls.x;
            }
        } catch (const FitError& e) {
            last_error = e.what();
        }
    }
    if (best.size() == 0) throw FitError("no multi-start converged: " + last_error);

    const auto proj = detail::project(t, Y, SW, best);
    std::vector<std::pair<double, double>> terms;
    for (int k = 0; k < n_terms; ++k) terms.emplace_back(std::exp(best[k]), ys * proj.amplitudes[k]);
    std::sort(terms.begin(), terms.end());

    DecayFit out;
    out.n_terms = n_terms;
    out.t_min = t.front();
    out.t_max = t.back();
    for (const auto& [tau, a] : terms) {
        out.taus.push_back(tau);
        out.amplitudes.push_back(a);
    }
    for (int k = 1; k < n_terms; ++k)
        if (out.taus[static_cast<std::size_t>(k)] / out.taus[static_cast<std::size_t>(k) - 1] < kDegenerateTauRatio) out.degenerate = true;

    // Covariance of the full (amplitudes, taus) model from its analytic Jacobian.
    Eigen::MatrixXd J(m, 2 * n_terms);
    double rss = 0.0, raw = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        const double ti = t[static_cast<std::size_t>(i)];
        for (int k = 0; k < n_terms; ++k) {
            const double tau = out.taus[static_cast<std::size_t>(k)];
            const double e = std::exp(-ti / tau);
            J(i, k) = SW[i] * e;
            J(i, n_terms + k) = SW[i] * out.amplitudes[static_cast<std::size_t>(k)] * e * ti / (tau * tau);
        }
        const double r = out(ti) - y[static_cast<std::size_t>(i)];
        rss += weights[static_cast<std::size_t>(i)] * r * r;
        raw += r * r;
    }
    out.residual_rms = std::sqrt(raw / static_cast<double>(m));
    out.covariance = covariance_from(J, rss, static_cast<int>(m) - 2 * n_terms);
    return out;
}

struct Rescaled {
    std::vector<double> values;
    bool extrapolated = false;
};

// Divides raw points by the reference decay at their cumulative pulse count,
// with the reference normalized to 1 at zero pulses.
inline Rescaled rescale_probe_decay(const std::vector<double>& raw, const std::vector<double>& pulse_counts,
                                    const DecayFit& reference) {
    if (raw.size() != pulse_counts.size()) throw ValidationError("raw values and pulse counts differ in length");
    const double r0 = reference(0.0);
    if (!(std::abs(r0) > 0.0)) throw NumericalError("reference decay vanishes at zero pulses");
    Rescaled out;
    for (std::size_t k = 0; k < raw.size(); ++k) {
        if (!(pulse_counts[k] >= 0.0)) throw ValidationError("pulse counts must be >= 0");
        if (pulse_counts[k] > reference.t_max) out.extrapolated = true;
        const double r = reference(pulse_counts[k]) / r0;
        if (!(std::abs(r) > 0.0)) throw NumericalError("reference decay vanishes at pulse count " + std::to_string(pulse_counts[k]));
        out.values.push_back(raw[k] / r);
    }
    return out;
}

// ------- Temperature models -------

inline double boltzmann_temperature(double omega0) { return kHbar * omega0 / kBoltzmann; }

// Gamma_1x / (exp(hbar w0 / kB T) - 1); zero at T = 0.
inline double orbach_rate(double T, double gamma_1x, double omega0) {
    if (T < 0.0) throw ValidationError("temperature must be >= 0");
    if (T == 0.0) return 0.0;
    return gamma_1x / std::expm1(boltzmann_temperature(omega0) / T);
}

struct OrbachFit {
    double gamma_1x = 0.0;
    double b_coupling = 0.0;  // rad/s, from Gamma_1x = Gamma_1 B^2 / (4 w_I^2) when Gamma_1 is given
    double residual_log_rms = 0.0;
    bool zero_temperature = false;
};

// Least squares in log space: log(1/tau) = log Gamma_1x - log(exp(x/T) - 1).
inline OrbachFit fit_orbach(const std::vector<double>& T, const std::vector<double>& tau, double omega0,
                            double gamma1 = 0.0, double omega_I = 0.0) {
    if (T.size() != tau.size() || T.empty()) throw ValidationError("Orbach fit needs matching (T, tau) arrays");
    OrbachFit out;
    const double x = boltzmann_temperature(omega0);
    std::vector<double> d;
    for (std::size_t k = 0; k < T.size(); ++k) {
        if (!(tau[k] > 0.0)) throw ValidationError("lifetimes must be > 0");
        if (T[k] < 0.0) throw ValidationError("temperatures must be >= 0");
        if (T[k] == 0.0) {
            out.zero_temperature = true;
            continue;
        }
        d.push_back(-std::log(tau[k]) + std::log(std::expm1(x / T[k])));
    }
    if (d.empty()) throw FitError("Orbach fit has no finite-temperature points");
    double mean = 0.0;
    for (double v : d) mean += v;
    mean /= static_cast<double>(d.size());
    double ss = 0.0;
    for (double v : d) ss += (v - mean) * (v - mean);
    out.gamma_1x = std::exp(mean);
    out.residual_log_rms = std::sqrt(ss / static_cast<double>(d.size()));
    if (gamma1 > 0.0 && omega_I > 0.0) out.b_coupling = 2.0 * omega_I * std::sqrt(out.gamma_1x / gamma1);
    return out;
}

struct RamanCheck {
    double exponent = 0.0;
    double prefactor = 0.0;
    double residual = 0.0;  // rms in log rate
};

inline RamanCheck raman_check(const std::vector<double>& T, const std::vector<double>& rates) {
    if (T.size() != rates.size() || T.size() < 2) throw ValidationError("Raman check needs >= 2 matching points");
    const double n = static_cast<double>(T.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < T.size(); ++k) {
        if (!(T[k] > 0.0) || !(rates[k] > 0.0)) throw ValidationError("Raman check needs positive temperatures and rates");
        const double lx = std::log(T[k]), ly = std::log(rates[k]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double den = n * sxx - sx * sx;
    if (!(den > 0.0)) throw ValidationError("Raman check needs at least two distinct temperatures");
    RamanCheck out;
    out.exponent = (n * sxy - sx * sy) / den;
    const double b = (sy - out.exponent * sx) / n;
    out.prefactor = std::exp(b);
    double ss = 0.0;
    for (std::size_t k = 0; k < T.size(); ++k) {
        const double r = std::log(rates[k]) - b - out.exponent * std::log(T[k]);
        ss += r * r;
    }
    out.residual = std::sqrt(ss / n);
    return out;
}

// ------- CSV ingestion -------

struct Table {
    std::vector<std::string> header;
    std::map<std::string, std::vector<double>> columns;

    const std::vector<double>& column(const std::string& name) const {
        const auto it = columns.find(name);
        if (it == columns.end()) throw ValidationError("missing CSV column '" + name + "'");
        return it->second;
    }
};

inline Table parse_csv(std::istream& in, const std::string& origin = "csv") {
    Table t;
    std::string line;
    std::size_t row = 0;
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            const auto a = cell.find_first_not_of(" \t\r");
            const auto b = cell.find_last_not_of(" \t\r");
            out.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
        }
        return out;
    };
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line[0] == '#' || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = split(line);
        if (t.header.empty()) {
            t.header = cells;
            for (const auto& h : cells) t.columns[h];
            continue;
        }
        if (cells.size() != t.header.size())
            throw ValidationError(origin + ":" + std::to_string(row) + ": expected " + std::to_string(t.header.size()) + " fields");
        for (std::size_t k = 0; k < cells.size(); ++k) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cells[k], &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != cells[k].size() || cells[k].empty())
                throw ValidationError(origin + ":" + std::to_string(row) + ": bad number '" + cells[k] + "'");
            t.columns[t.header[k]].push_back(v);
        }
    }
    if (t.header.empty()) throw ValidationError(origin + ": empty CSV");
    return t;
}

inline Table read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    return parse_csv(in, path);
}

inline LineScan load_line_scan(const std::string& path) {
    const auto t = read_csv(path);
    LineScan s{t.column("B0_T"), t.column("kappa_i")};
    s.validate();
    return s;
}

struct DecaySeries {
    std::vector<double> t;  // s
    std::vector<double> amplitude;
    std::vector<double> n_pulses;
};

inline DecaySeries load_decay_series(const std::string& path) {
    const auto t = read_csv(path);
    DecaySeries d{t.column("t_s"), t.column("amplitude"), {}};
    if (t.columns.count("n_pulses")) d.n_pulses = t.column("n_pulses");
    return d;
}

struct TemperatureSeries {
    std::vector<double> T;
    std::vector<double> tau;
};

inline TemperatureSeries load_temperature_series(const std::string& path) {
    const auto t = read_csv(path);
    return {t.column("T_K"), t.column("tau_s")};
}

}  // namespace shb::analysis
