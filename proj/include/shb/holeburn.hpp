// holeburn.hpp - pumped rate equations and hole/anti-hole spectra
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "core.hpp"
#include "lattice.hpp"
#include "linalg.hpp"
#include "parallel.hpp"
#include "spin_model.hpp"

namespace shb::holeburn {

using spin::TransitionTable;
using spin::Transition;
using spin::ConditionalEigenSystem;

struct PumpSpec {
    double omega_d = khz(-795.0);  // drive detuning from omega0
    double omega_p = hz(10.0);
    double duration = 120.0;

    void validate() const {
        if (!(duration > 0.0)) throw ValidationError("pump duration must be > 0");
        if (!(omega_p >= 0.0)) throw ValidationError("pump amplitude must be >= 0");
    }
};

// Populations: excited block [0, 2^Ns), ground block [2^Ns, 2^(Ns+1)).
using PopulationVector = Eigen::VectorXd;

struct SpectralDensity {
    struct Meta {
        std::size_t n_configs = 0;
        std::size_t n_detunings = 0;
        std::uint64_t seed = 0;
        double gamma_probe = 0.0;
    };
    std::vector<double> freq;    // rad/s from omega0
    std::vector<double> values;
    Meta meta;
};

inline PopulationVector thermal_state(std::size_t levels) {
    PopulationVector rho = PopulationVector::Zero(static_cast<Eigen::Index>(2 * levels));
    rho.tail(static_cast<Eigen::Index>(levels)).setConstant(1.0 / static_cast<double>(levels));
    return rho;
}

// ------- Rates -------

inline double pump_rate(double element, double delta_ij, double omega_p, double gamma2) {
    return 2.0 * omega_p * omega_p * element * element * gamma2 / (delta_ij * delta_ij + gamma2 * gamma2);
}

// Gamma_ij = Gamma1 |m|^2 / |m_ref|^2 with m_ref = 1/2, so an unmixed excited
// level decays at Gamma1 and the one-flip channel at Gamma1 B^2 / (4 omega_I^2).
inline double relaxation_rate(double element, double gamma1) {
    constexpr double ref = spin::kElectronicElement * spin::kElectronicElement;
    return gamma1 * element * element / ref;
}

inline double total_relaxation(const TransitionTable& t, std::size_t i, double gamma1) {
    constexpr double ref = spin::kElectronicElement * spin::kElectronicElement;
    return gamma1 * t.row_norm[i] / ref;
}

struct RateMatrix {
    Eigen::MatrixXd M;
    std::size_t levels = 0;
    std::size_t dim() const { return 2 * levels; }
};

inline RateMatrix build_rate_matrix(const TransitionTable& table, const PumpSpec& pump, double delta,
                                    double gamma1, double gamma2) {
    check_bath_size(table.ns);
    const std::size_t n = table.levels();
    RateMatrix r;
    r.levels = n;
    r.M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(2 * n), static_cast<Eigen::Index>(2 * n));
    for (const Transition& tr : table.entries) {
        const auto ei = static_cast<Eigen::Index>(tr.i);
        const auto gj = static_cast<Eigen::Index>(n + tr.j);
        const double om = pump_rate(tr.element, tr.offset - pump.omega_d + delta, pump.omega_p, gamma2);
        const double lam = om + relaxation_rate(tr.element, gamma1);
        r.M(ei, gj) += om;
        r.M(gj, gj) -= om;
        r.M(gj, ei) += lam;
        r.M(ei, ei) -= lam;
    }
    return r;
}

// ------- Evolution -------

inline void clamp_populations(PopulationVector& rho) {
    for (Eigen::Index k = 0; k < rho.size(); ++k) {
        if (!std::isfinite(rho[k])) throw NumericalError("non-finite population");
        if (rho[k] < 0.0) {
            if (rho[k] < -1e-9) throw NumericalError("population went negative beyond round-off");
            rho[k] = 0.0;
        }
    }
}

inline PopulationVector evolve_populations(const PopulationVector& rho0, const RateMatrix& M, double t) {
    if (!(t >= 0.0)) throw ValidationError("evolution time must be >= 0");
    if (rho0.size() != M.M.rows()) throw ValidationError("population vector does not match rate matrix");
    if (t == 0.0) return rho0;
    PopulationVector rho = linalg::expm_action(M.M, t, rho0);
    clamp_populations(rho);
    return rho;
}

// Long-time limit of exp(M t) rho0. exp(M h) is squared until t passes
// 1e30 h; each column is renormalized to unit sum after every squaring, so
// round-off cannot leak population however stiff M is. Nuclear transfer in
// small baths can take 1e7 s or more, far beyond what a single exponential
// at large t resolves.
inline PopulationVector steady_state(const PopulationVector& rho0, const RateMatrix& M, double h = 1.0) {
    if (rho0.size() != M.M.rows()) throw ValidationError("population vector does not match rate matrix");
    if (M.M.rows() > linalg::kDenseExpmLimit) throw SizeError("steady state needs a dense propagator; system too large");
    if (!(h > 0.0)) throw ValidationError("steady-state step must be > 0");
    if (!M.M.allFinite()) throw NumericalError("non-finite entries in rate matrix");
    Eigen::MatrixXd E = (M.M * h).exp();
    for (double t = h; t < 1e30 * h; t *= 2.0) {
        E = (E * E).eval();
        for (Eigen::Index c = 0; c < E.cols(); ++c) {
            const double s = E.col(c).sum();
            if (!(s > 0.0)) throw NumericalError("propagator column lost its population");
            E.col(c) /= s;
        }
    }
    PopulationVector rho = E * rho0;
    clamp_populations(rho);
    return rho;
}

inline PopulationVector collapse_excited(const PopulationVector& rho, const TransitionTable& table) {
    const std::size_t n = table.levels();
    PopulationVector out = rho;
    for (std::size_t i = 0; i < n; ++i) {
        const double pe = rho[static_cast<Eigen::Index>(i)];
        if (pe == 0.0) continue;
        for (std::size_t k = table.row_start[i]; k < table.row_start[i + 1]; ++k) {
            const Transition& tr = table.entries[k];
            out[static_cast<Eigen::Index>(n + tr.j)] += pe * spin::branching(table, tr);
        }
        out[static_cast<Eigen::Index>(i)] = 0.0;
    }
    return out;
}

// ------- Detuning distribution -------

enum class DetuningKind { Uniform, Gaussian };

// Uniform on [lo, hi], or a centred Gaussian of width sigma.
struct DetuningModel {
    DetuningKind kind = DetuningKind::Uniform;
    double lo = 0.0;
    double hi = 0.0;
    double sigma = mhz(8.0);

    double density(double d) const {
        if (kind == DetuningKind::Uniform) return (d >= lo && d <= hi) ? 1.0 / (hi - lo) : 0.0;
        return std::exp(-0.5 * d * d / (sigma * sigma)) / (std::sqrt(kTwoPi) * sigma);
    }
    double support_lo() const { return kind == DetuningKind::Uniform ? lo : -8.0 * sigma; }
    double support_hi() const { return kind == DetuningKind::Uniform ? hi : 8.0 * sigma; }
};

// Window covering the probe grid plus three grid widths.
inline DetuningModel uniform_window(const std::vector<double>& grid) {
    const double w = grid.back() - grid.front();
    return DetuningModel{DetuningKind::Uniform, grid.front() - 1.5 * w, grid.back() + 1.5 * w, mhz(8.0)};
}

struct DetuningNode {
    double delta = 0.0;
    double weight = 0.0;  // includes the distribution density
};

// A sharp feature of the integrand in delta: the pump resonance of one table
// entry. `scale` is the saturated core half-width, `reach` the offset beyond
// which its effect drops below tolerance.
struct Resonance {
    double center = 0.0;
    double scale = 0.0;
    double reach = 0.0;
};

// Splits the axis at midpoints between resonances and integrates each piece
// with an n-point Gauss-Legendre rule in u, delta = center + scale tan(u).
inline std::vector<DetuningNode> resonance_quadrature(std::vector<Resonance> res, const DetuningModel& model,
                                                      int n_per_segment) {
    std::vector<DetuningNode> nodes;
    if (res.empty()) return nodes;
    std::sort(res.begin(), res.end(), [](const Resonance& a, const Resonance& b) { return a.center < b.center; });
    std::vector<Resonance> merged;
    for (const auto& r : res) {
        if (!merged.empty() && r.center - merged.back().center <= 1e-3 * std::min(r.scale, merged.back().scale)) {
            merged.back().scale = std::max(merged.back().scale, r.scale);
            merged.back().reach = std::max(merged.back().reach, r.reach);
            continue;
        }
        merged.push_back(r);
    }

    const auto rule = linalg::gauss_legendre(n_per_segment);
    const double lo_support = model.support_lo(), hi_support = model.support_hi();
    for (std::size_t k = 0; k < merged.size(); ++k) {
        const Resonance& r = merged[k];
        double a = k == 0 ? r.center - r.reach : 0.5 * (merged[k - 1].center + r.center);
        double b = k + 1 == merged.size() ? r.center + r.reach : 0.5 * (r.center + merged[k + 1].center);
        a = std::max(a, lo_support);
        b = std::min(b, hi_support);
        if (!(b > a)) continue;
        const double ua = std::atan((a - r.center) / r.scale);
        const double ub = std::atan((b - r.center) / r.scale);
        const double um = 0.5 * (ua + ub), uh = 0.5 * (ub - ua);
        for (std::size_t q = 0; q < rule.x.size(); ++q) {
            const double u = um + uh * rule.x[q];
            const double t = std::tan(u);
            const double d = r.center + r.scale * t;
            const double jac = r.scale * (1.0 + t * t);
            const double w = rule.w[q] * uh * jac * model.density(d);
            if (w > 0.0) nodes.push_back({d, w});
        }
    }
    return nodes;
}

// ------- Probe -------

inline double lorentzian(double x, double gamma) { return gamma / (kPi * (x * x + gamma * gamma)); }

// out[k] += weight * |m_jj|^2 * pop * L(c_j + delta - omega_k)
inline void add_line(std::vector<double>& out, const std::vector<double>& grid, double position, double amplitude,
                     double gamma) {
    for (std::size_t k = 0; k < grid.size(); ++k) out[k] += amplitude * lorentzian(position - grid[k], gamma);
}

// Probe density of ground populations `pops` (length 2^Ns) at one detuning sample.
inline void accumulate_probe(std::vector<double>& out, const ConditionalEigenSystem& es, const TransitionTable& t,
                             const std::vector<double>& grid, double gamma, const Eigen::VectorXd& pops,
                             double delta, double weight) {
    for (std::size_t j = 0; j < t.levels(); ++j) {
        const double p = pops[static_cast<Eigen::Index>(j)];
        if (p == 0.0) continue;
        const double m = t.zero_flip[j];
        add_line(out, grid, es.offset(j, j) + delta, weight * m * m * p, gamma);
    }
}

inline SpectralDensity probe_density(const PopulationVector& rho_prime, const ConditionalEigenSystem& es,
                                     const TransitionTable& t, const std::vector<double>& grid, double gamma,
                                     const std::vector<DetuningNode>& nodes) {
    if (!(gamma > 0.0)) throw ValidationError("probe linewidth must be > 0");
    const std::size_t n = t.levels();
    const Eigen::VectorXd pops = rho_prime.size() == static_cast<Eigen::Index>(2 * n)
                                     ? Eigen::VectorXd(rho_prime.tail(static_cast<Eigen::Index>(n)))
                                     : rho_prime;
    SpectralDensity sd;
    sd.freq = grid;
    sd.values.assign(grid.size(), 0.0);
    for (const auto& node : nodes) accumulate_probe(sd.values, es, t, grid, gamma, pops, node.delta, node.weight);
    sd.meta.n_detunings = nodes.size();
    sd.meta.gamma_probe = gamma;
    return sd;
}

// Detuning-averaged density of the thermal state, integrated exactly over
// delta: closed form for the uniform window, piecewise-linear Cauchy
// quadrature of the Gaussian otherwise.
inline std::vector<double> thermal_density(const ConditionalEigenSystem& es, const TransitionTable& t,
                                           const std::vector<double>& grid, double gamma,
                                           const DetuningModel& model) {
    const std::size_t n = t.levels();
    const double p = 1.0 / static_cast<double>(n);
    std::vector<double> out(grid.size(), 0.0);
    if (model.kind == DetuningKind::Uniform) {
        const double inv_w = 1.0 / (model.hi - model.lo);
        for (std::size_t j = 0; j < n; ++j) {
            const double m = t.zero_flip[j];
            const double c = es.offset(j, j);
            for (std::size_t k = 0; k < grid.size(); ++k)
                out[k] += m * m * p * inv_w *
                          (std::atan((c + model.hi - grid[k]) / gamma) - std::atan((c + model.lo - grid[k]) / gamma)) /
                          kPi;
        }
        return out;
    }
    const int panels = 640;
    std::vector<double> x(panels + 1), f(panels + 1);
    for (int q = 0; q <= panels; ++q) {
        x[static_cast<std::size_t>(q)] = model.support_lo() + (model.support_hi() - model.support_lo()) * q / panels;
        f[static_cast<std::size_t>(q)] = model.density(x[static_cast<std::size_t>(q)]);
    }
    for (std::size_t j = 0; j < n; ++j) {
        const double m = t.zero_flip[j];
        const double c = es.offset(j, j);
        for (std::size_t k = 0; k < grid.size(); ++k) {
            // integral G(d) L(c + d - w) dd = -(1/pi) Im C(w - c + i gamma)
            const std::complex<double> z(grid[k] - c, gamma);
            out[k] += m * m * p * (-linalg::cauchy_integral(x, f, z).imag() / kPi);
        }
    }
    return out;
}

// ------- Pump response at one detuning -------

// Entries are treated exactly inside the "strong" cluster when their
// excitation fraction or population transfer exceeds these thresholds;
// the rest enter at first order in the pump rate.
struct SolverTolerances {
    double excitation = 1e-3;
    double transfer = 1e-3;
    double negligible = 1e-13;
    double reach = 1e-8;
};

struct EntryInfo {
    std::size_t index = 0;  // into table.entries
    double branch = 0.0;
    double relax_total = 0.0;
    double peak = 0.0;      // peak pump rate
    double resonance = 0.0; // delta at which it is resonant
};

// Levels whose ground population changed; values through dp().
struct PumpResponse {
    std::vector<std::uint32_t> touched;
};

class PumpedConfiguration {
public:
    PumpedConfiguration(const ConditionalEigenSystem& es, const TransitionTable& t, const PumpSpec& pump,
                        double gamma1, double gamma2, SolverTolerances tol = {})
        : es_(es), t_(t), pump_(pump), gamma1_(gamma1), gamma2_(gamma2), tol_(tol) {
        const std::size_t n = t.levels();
        relax_.resize(n);
        for (std::size_t i = 0; i < n; ++i) relax_[i] = total_relaxation(t, i, gamma1);
        local_.assign(2 * n, -1);
        dp_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        mark_.assign(n, 0);
    }

    // Entries whose resonance lies inside the detuning support and whose
    // affected lines land within [vis_lo, vis_hi].
    std::vector<EntryInfo> visible_entries(const DetuningModel& model, double vis_lo, double vis_hi) const {
        std::vector<EntryInfo> out;
        for (std::size_t k = 0; k < t_.entries.size(); ++k) {
            const Transition& tr = t_.entries[k];
            const double b = spin::branching(t_, tr);
            if (!(1.0 - b > 0.0)) continue;
            EntryInfo e{k, b, relax_[tr.i], pump_rate(tr.element, 0.0, pump_.omega_p, gamma2_),
                        pump_.omega_d - tr.offset};
            if (e.peak == 0.0) continue;
            if (e.resonance < model.support_lo() || e.resonance > model.support_hi()) continue;
            bool seen = false;
            for (std::size_t q = t_.row_start[tr.i]; q < t_.row_start[tr.i + 1] && !seen; ++q) {
                const std::size_t j = t_.entries[q].j;
                const double line = es_.offset(j, j) + e.resonance;
                seen = line >= vis_lo && line <= vis_hi;
            }
            if (seen) out.push_back(e);
        }
        return out;
    }

    Resonance resonance_of(const EntryInfo& e) const {
        const double eff_t = pump_.duration + 1.0 / e.relax_total;
        const double transfer = eff_t * e.peak * (1.0 - e.branch);
        const double sat = std::max(transfer, 2.0 * e.peak / e.relax_total);
        Resonance r;
        r.center = e.resonance;
        r.scale = gamma2_ * std::sqrt(1.0 + sat);
        r.reach = std::max(r.scale, gamma2_ * std::sqrt(transfer / tol_.reach));
        return r;
    }

    // Clustered solver restricted to `active` entries.
    const PumpResponse& respond(const std::vector<EntryInfo>& active, double delta) {
        reset();
        const std::size_t n = t_.levels();
        const double p0 = 1.0 / static_cast<double>(n);
        const double T = pump_.duration;

        strong_rows_.clear();
        weak_.clear();
        for (const EntryInfo& e : active) {
            const Transition& tr = t_.entries[e.index];
            const double om = pump_rate(tr.element, tr.offset - pump_.omega_d + delta, pump_.omega_p, gamma2_);
            const double eff_t = T + 1.0 / e.relax_total;
            const double transfer = eff_t * om * (1.0 - e.branch);
            if (om > tol_.excitation * e.relax_total || transfer > tol_.transfer) {
                strong_rows_.push_back(tr.i);
            } else if (transfer > tol_.negligible) {
                weak_.push_back({&e, om});
            }
        }

        if (!strong_rows_.empty()) solve_cluster(delta, p0);

        for (const auto& w : weak_) {
            const Transition& tr = t_.entries[w.info->index];
            if (local_[tr.i] >= 0) continue;  // already exact inside the cluster
            const double flux = (T + 1.0 / w.info->relax_total) * w.rate * p0;
            for (std::size_t q = t_.row_start[tr.i]; q < t_.row_start[tr.i + 1]; ++q) {
                const Transition& out = t_.entries[q];
                if (out.j == tr.j) continue;
                const double moved = flux * spin::branching(t_, out);
                add(out.j, moved);
                add(tr.j, -moved);
            }
        }
        return resp_;
    }

    // Reference path: full rate matrix, dense exponential, collapse.
    const PumpResponse& respond_dense(double delta) {
        reset();
        const std::size_t n = t_.levels();
        const RateMatrix M = build_rate_matrix(t_, pump_, delta, gamma1_, gamma2_);
        const PopulationVector rho = collapse_excited(evolve_populations(thermal_state(n), M, pump_.duration), t_);
        const double p0 = 1.0 / static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) add(j, rho[static_cast<Eigen::Index>(n + j)] - p0);
        return resp_;
    }

    const ConditionalEigenSystem& eigensystem() const { return es_; }
    const TransitionTable& table() const { return t_; }

private:
    struct Weak {
        const EntryInfo* info;
        double rate;
    };

    void reset() {
        for (auto j : resp_.touched) {
            dp_[static_cast<Eigen::Index>(j)] = 0.0;
            mark_[j] = 0;
        }
        resp_.touched.clear();
        for (auto k : cluster_) local_[k] = -1;
        cluster_.clear();
    }

    void add(std::size_t j, double v) {
        if (!mark_[j]) {
            mark_[j] = 1;
            resp_.touched.push_back(static_cast<std::uint32_t>(j));
        }
        dp_[static_cast<Eigen::Index>(j)] += v;
    }

    // Local index of level k (excited k < n, ground n + j).
    int slot(std::size_t k) {
        if (local_[k] < 0) {
            local_[k] = static_cast<int>(cluster_.size());
            cluster_.push_back(k);
        }
        return local_[k];
    }

    void solve_cluster(double delta, double p0) {
        const std::size_t n = t_.levels();
        std::sort(strong_rows_.begin(), strong_rows_.end());
        strong_rows_.erase(std::unique(strong_rows_.begin(), strong_rows_.end()), strong_rows_.end());
        for (auto i : strong_rows_) {
            slot(i);
            for (std::size_t q = t_.row_start[i]; q < t_.row_start[i + 1]; ++q) slot(n + t_.entries[q].j);
        }
        const auto d = static_cast<Eigen::Index>(cluster_.size());
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(d, d);
        for (auto i : strong_rows_) {
            const int e = local_[i];
            for (std::size_t q = t_.row_start[i]; q < t_.row_start[i + 1]; ++q) {
                const Transition& tr = t_.entries[q];
                const int g = local_[n + tr.j];
                const double om = pump_rate(tr.element, tr.offset - pump_.omega_d + delta, pump_.omega_p, gamma2_);
                const double lam = om + relaxation_rate(tr.element, gamma1_);
                M(e, g) += om;
                M(g, g) -= om;
                M(g, e) += lam;
                M(e, e) -= lam;
            }
        }
        Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
        for (Eigen::Index k = 0; k < d; ++k)
            if (cluster_[static_cast<std::size_t>(k)] >= n) v[k] = p0;
        v = linalg::expm_action(M, pump_.duration, v);

        // Rows of strong excited levels are complete, so collapsing inside
        // the cluster conserves probability.
        Eigen::VectorXd after = v;
        for (auto i : strong_rows_) {
            const double pe = v[local_[i]];
            after[local_[i]] = 0.0;
            for (std::size_t q = t_.row_start[i]; q < t_.row_start[i + 1]; ++q) {
                const Transition& tr = t_.entries[q];
                after[local_[n + tr.j]] += pe * spin::branching(t_, tr);
            }
        }
        for (Eigen::Index k = 0; k < d; ++k) {
            const std::size_t lvl = cluster_[static_cast<std::size_t>(k)];
            if (lvl < n) continue;
            const double x = std::max(after[k], 0.0);
            if (after[k] < -1e-9) throw NumericalError("negative population in pumped cluster");
            add(lvl - n, x - p0);
        }
    }

    const ConditionalEigenSystem& es_;
    const TransitionTable& t_;
    PumpSpec pump_;
    double gamma1_, gamma2_;
    SolverTolerances tol_;
    std::vector<double> relax_;
    std::vector<int> local_;
    std::vector<std::size_t> cluster_;
    std::vector<std::uint32_t> strong_rows_;
    std::vector<Weak> weak_;
    Eigen::VectorXd dp_;
    std::vector<char> mark_;
    PumpResponse resp_;

public:
    // Sparse view: value for a touched level.
    double dp(std::size_t j) const { return dp_[static_cast<Eigen::Index>(j)]; }
    const std::vector<std::uint32_t>& touched() const { return resp_.touched; }
};

// ------- Ensemble spectra -------

enum class Solver { Clustered, Dense };

struct Ensemble {
    spin::SpinParams spin;
    lattice::LatticeParams lattice;
    double abundance = 0.145;
    lattice::OverrideTable overrides = lattice::default_overrides();
    int ns = 6;
    int n_configs = 64;
    std::uint64_t seed = 1;

    lattice::BathConfiguration bath(std::size_t k) const {
        lattice::SamplingOptions opt;
        opt.abundance = abundance;
        opt.field_direction = spin.field_direction();
        opt.overrides = overrides;
        return lattice::sample_bath(lattice, stream_seed(seed, k), ns, opt);
    }
};

struct ShbScenario {
    Ensemble ensemble;
    PumpSpec pump;
    std::vector<double> grid;        // rad/s from omega0
    double gamma_probe = khz(1.0);
    int n_detunings = 51;            // Gauss-Legendre nodes per resonance segment
    DetuningKind detuning = DetuningKind::Uniform;
    Solver solver = Solver::Clustered;
    SolverTolerances tolerances{};
    int workers = 1;

    DetuningModel detuning_model() const {
        DetuningModel m = uniform_window(grid);
        m.kind = detuning;
        m.sigma = ensemble.spin.sigma;
        return m;
    }

    void validate() const {
        ensemble.spin.validate();
        ensemble.lattice.validate();
        pump.validate();
        check_bath_size(ensemble.ns);
        if (ensemble.n_configs < 1) throw ValidationError("n_configs must be >= 1");
        if (n_detunings < 1) throw ValidationError("n_detunings must be >= 1");
        if (grid.size() < 2) throw ValidationError("probe grid needs at least two points");
        for (std::size_t k = 1; k < grid.size(); ++k)
            if (!(grid[k] > grid[k - 1])) throw ValidationError("probe grid must be strictly increasing");
        if (!(gamma_probe > 0.0)) throw ValidationError("probe linewidth must be > 0");
    }
};

struct ShbSpectrum {
    SpectralDensity ratio;
    std::vector<double> rho1;
    std::vector<double> rho0;
    std::size_t total_nodes = 0;
};

inline std::vector<double> uniform_grid(double lo, double hi, double step) {
    std::vector<double> g;
    const auto n = static_cast<std::size_t>(std::llround((hi - lo) / step));
    for (std::size_t k = 0; k <= n; ++k) g.push_back(lo + step * static_cast<double>(k));
    return g;
}

// Margin beyond the grid inside which a line still counts as visible.
inline double visibility_margin(double gamma_probe) { return 300.0 * gamma_probe; }

struct ConfigSpectrum {
    std::vector<double> rho0;
    std::vector<double> drho;
    std::size_t nodes = 0;
};

inline ConfigSpectrum shb_config(const ShbScenario& sc, std::size_t k) {
    const auto bath = sc.ensemble.bath(k);
    const auto es = spin::build_eigensystem(bath, sc.ensemble.spin);
    const auto table = spin::transition_elements(es);
    const DetuningModel model = sc.detuning_model();

    ConfigSpectrum out;
    out.rho0 = thermal_density(es, table, sc.grid, sc.gamma_probe, model);
    out.drho.assign(sc.grid.size(), 0.0);
    if (sc.pump.omega_p == 0.0) return out;

    PumpedConfiguration pc(es, table, sc.pump, sc.ensemble.spin.gamma1, sc.ensemble.spin.gamma2, sc.tolerances);
    const double margin = visibility_margin(sc.gamma_probe);
    const auto active = pc.visible_entries(model, sc.grid.front() - margin, sc.grid.back() + margin);
    std::vector<Resonance> res;
    res.reserve(active.size());
    for (const auto& e : active) res.push_back(pc.resonance_of(e));
    const auto nodes = resonance_quadrature(res, model, sc.n_detunings);
    out.nodes = nodes.size();

    for (const auto& node : nodes) {
        if (sc.solver == Solver::Dense)
            pc.respond_dense(node.delta);
        else
            pc.respond(active, node.delta);
        for (auto j : pc.touched()) {
            const double v = pc.dp(j);
            if (v == 0.0) continue;
            const double m = table.zero_flip[j];
            add_line(out.drho, sc.grid, es.offset(j, j) + node.delta, node.weight * m * m * v, sc.gamma_probe);
        }
    }
    return out;
}

inline std::vector<double> sum_in_order(const std::vector<std::vector<double>>& parts) {
    std::vector<double> out(parts.front().size(), 0.0);
    for (std::size_t q = 0; q < out.size(); ++q)
        out[q] = linalg::pairwise_sum(0, parts.size(), [&](std::size_t c) { return parts[c][q]; });
    return out;
}

template <class Fn>
auto with_config_index(std::size_t k, Fn&& fn) -> decltype(fn()) {
    const std::string where = "configuration " + std::to_string(k) + ": ";
    try {
        return fn();
    } catch (const SizeError& e) {
        throw SizeError(where + e.what());
    } catch (const ValidationError& e) {
        throw ValidationError(where + e.what());
    } catch (const FitError& e) {
        throw FitError(where + e.what());
    } catch (const NumericalError& e) {
        throw NumericalError(where + e.what());
    }
}

inline ShbSpectrum shb_spectrum(const ShbScenario& sc) {
    sc.validate();
    const auto n = static_cast<std::size_t>(sc.ensemble.n_configs);
    auto parts = parallel_map(n, sc.workers, [&](std::size_t k) {
        return with_config_index(k, [&] { return shb_config(sc, k); });
    });

    std::vector<std::vector<double>> r0, r1;
    std::size_t nodes = 0;
    for (auto& p : parts) {
        std::vector<double> rho1(p.rho0.size());
        for (std::size_t q = 0; q < rho1.size(); ++q) rho1[q] = p.rho0[q] + p.drho[q];
        r0.push_back(std::move(p.rho0));
        r1.push_back(std::move(rho1));
        nodes += p.nodes;
    }
    ShbSpectrum out;
    out.rho0 = sum_in_order(r0);
    out.rho1 = sum_in_order(r1);
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& v : out.rho0) v *= inv;
    for (auto& v : out.rho1) v *= inv;
    out.ratio.freq = sc.grid;
    out.ratio.values.resize(sc.grid.size());
    for (std::size_t q = 0; q < sc.grid.size(); ++q) out.ratio.values[q] = out.rho1[q] / out.rho0[q];
    out.ratio.meta = {n, static_cast<std::size_t>(sc.n_detunings), sc.ensemble.seed, sc.gamma_probe};
    out.total_nodes = nodes;
    return out;
}

// ------- Reset -------

// Defaults follow the measured protocol: 0.5 kHz steps, 10 s per scan,
// 24 scans, 10 dB above the default pump power.
struct SweepSpec {
    double range = mhz(4.0);   // full span, centred on omega0
    int steps = 8000;
    double omega_p = hz(10.0 * 3.1622776601683795);
    double dwell = 1.25e-3;    // s per step
    int scans = 24;

    void validate() const {
        if (steps < 1 || scans < 0) throw ValidationError("sweep needs steps >= 1 and scans >= 0");
        if (!(range > 0.0) || !(dwell > 0.0) || !(omega_p >= 0.0))
            throw ValidationError("sweep range, dwell must be > 0 and power >= 0");
    }
};

// The protocol's outcome: the thermal state of the same bath.
inline PopulationVector reset_sweep(const PopulationVector& state) {
    const auto levels = static_cast<std::size_t>(state.size() / 2);
    return thermal_state(levels);
}

// Populations after pumping a stepped sweep across the line, starting from `rho`.
inline PopulationVector simulate_sweep(PopulationVector rho, const TransitionTable& t, double delta,
                                       const SweepSpec& sw, double gamma1, double gamma2) {
    sw.validate();
    auto step = [&](int k) {
        PumpSpec p;
        p.omega_d = -0.5 * sw.range + sw.range * (k + 0.5) / sw.steps;
        p.omega_p = sw.omega_p;
        p.duration = sw.dwell;
        return build_rate_matrix(t, p, delta, gamma1, gamma2);
    };
    if (sw.scans == 0) return collapse_excited(rho, t);
    if (rho.size() > linalg::kDenseExpmLimit) {
        for (int s = 0; s < sw.scans; ++s)
            for (int k = 0; k < sw.steps; ++k) rho = evolve_populations(rho, step(k), sw.dwell);
        return collapse_excited(rho, t);
    }
    // Every scan repeats the same steps, so one scan's propagator serves all.
    Eigen::MatrixXd P = Eigen::MatrixXd::Identity(rho.size(), rho.size());
    for (int k = 0; k < sw.steps; ++k) {
        const Eigen::MatrixXd E = (step(k).M * sw.dwell).exp();
        P = (E * P).eval();
    }
    for (int s = 0; s < sw.scans; ++s) {
        rho = P * rho;
        clamp_populations(rho);
    }
    return collapse_excited(rho, t);
}

struct ResetReport {
    std::vector<double> freq;
    std::vector<double> ratio_burned;
    std::vector<double> ratio_reset;
    double max_dev_burned = 0.0;
    double max_dev_reset = 0.0;
};

// Burns with sc.pump, then sweeps. Uses the dense path at every node, so keep
// Ns small.
inline ResetReport simulate_reset(const ShbScenario& sc, const SweepSpec& sw) {
    sc.validate();
    sw.validate();
    const auto n = static_cast<std::size_t>(sc.ensemble.n_configs);
    struct Part {
        std::vector<double> rho0, d_burn, d_reset;
    };
    auto parts = parallel_map(n, sc.workers, [&](std::size_t k) {
        return with_config_index(k, [&] {
            const auto bath = sc.ensemble.bath(k);
            const auto es = spin::build_eigensystem(bath, sc.ensemble.spin);
            const auto table = spin::transition_elements(es);
            const auto model = sc.detuning_model();
            const auto& sp = sc.ensemble.spin;
            Part part;
            part.rho0 = thermal_density(es, table, sc.grid, sc.gamma_probe, model);
            part.d_burn.assign(sc.grid.size(), 0.0);
            part.d_reset.assign(sc.grid.size(), 0.0);
            PumpedConfiguration pc(es, table, sc.pump, sp.gamma1, sp.gamma2, sc.tolerances);
            const double margin = visibility_margin(sc.gamma_probe);
            std::vector<Resonance> res;
            for (const auto& e : pc.visible_entries(model, sc.grid.front() - margin, sc.grid.back() + margin))
                res.push_back(pc.resonance_of(e));
            const std::size_t levels = table.levels();
            const PopulationVector thermal = thermal_state(levels);
            for (const auto& node : resonance_quadrature(res, model, sc.n_detunings)) {
                const auto M = build_rate_matrix(table, sc.pump, node.delta, sp.gamma1, sp.gamma2);
                const PopulationVector burned = collapse_excited(evolve_populations(thermal, M, sc.pump.duration), table);
                const PopulationVector after = simulate_sweep(burned, table, node.delta, sw, sp.gamma1, sp.gamma2);
                const Eigen::VectorXd db = burned.tail(static_cast<Eigen::Index>(levels)) - thermal.tail(static_cast<Eigen::Index>(levels));
                const Eigen::VectorXd da = after.tail(static_cast<Eigen::Index>(levels)) - thermal.tail(static_cast<Eigen::Index>(levels));
                accumulate_probe(part.d_burn, es, table, sc.grid, sc.gamma_probe, db, node.delta, node.weight);
                accumulate_probe(part.d_reset, es, table, sc.grid, sc.gamma_probe, da, node.delta, node.weight);
            }
            return part;
        });
    });
    std::vector<std::vector<double>> r0, rb, ra;
    for (auto& p : parts) {
        r0.push_back(p.rho0);
        rb.push_back(p.d_burn);
        ra.push_back(p.d_reset);
    }
    const auto s0 = sum_in_order(r0), sb = sum_in_order(rb), sa = sum_in_order(ra);
    ResetReport rep;
    rep.freq = sc.grid;
    for (std::size_t q = 0; q < sc.grid.size(); ++q) {
        rep.ratio_burned.push_back(1.0 + sb[q] / s0[q]);
        rep.ratio_reset.push_back(1.0 + sa[q] / s0[q]);
        rep.max_dev_burned = std::max(rep.max_dev_burned, std::abs(rep.ratio_burned.back() - 1.0));
        rep.max_dev_reset = std::max(rep.max_dev_reset, std::abs(rep.ratio_reset.back() - 1.0));
    }
    return rep;
}

}  // namespace shb::holeburn
