// echo.hpp - pulse-pair gratings, accumulated echoes and the spectrum/echo Fourier bridge
#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "core.hpp"
#include "holeburn.hpp"
#include "lattice.hpp"
#include "linalg.hpp"
#include "parallel.hpp"
#include "spin_model.hpp"

namespace shb::echo {

using cplx = std::complex<double>;
using spin::ConditionalEigenSystem;
using spin::TransitionTable;

// tau is measured between the starts of the two pulses.
struct PulseSpec {
    double omega1 = mhz(0.25);
    double tp = 1e-6;
    double tau = 100e-6;
    long n_pairs = 3000;
    double wait = 0.2;
    bool pi_half = true;

    void validate() const {
        if (!(tp > 0.0)) throw ValidationError("pulse duration must be > 0");
        if (!(tau > tp)) throw ValidationError("pulse delay tau must exceed the pulse duration");
        if (!(omega1 >= 0.0)) throw ValidationError("Rabi amplitude must be >= 0");
        if (n_pairs < 0) throw ValidationError("number of pulse pairs must be >= 0");
        if (pi_half && std::abs(omega1 * tp - kPi / 2) > 1e-9)
            throw ValidationError("pulse flagged as pi/2 but omega1 * tp != pi/2");
    }
};

// ------- Two-level propagators in the (e, g) basis -------

// R = cos(theta) I - i sin(theta) (sigma_z sin(phi) + sigma_x cos(phi)),
// theta = omega_eff tp / 2, tan(phi) = delta / omega1.
inline Eigen::Matrix2cd pulse_rotation(double delta_total, const PulseSpec& p) {
    const double weff = std::hypot(delta_total, p.omega1);
    Eigen::Matrix2cd R = Eigen::Matrix2cd::Identity();
    if (weff == 0.0) return R;
    const double th = 0.5 * weff * p.tp;
    const double c = std::cos(th), s = std::sin(th);
    const double nz = delta_total / weff, nx = p.omega1 / weff;
    const cplx i(0.0, 1.0);
    R(0, 0) = c - i * s * nz;
    R(1, 1) = c + i * s * nz;
    R(0, 1) = -i * s * nx;
    R(1, 0) = -i * s * nx;
    return R;
}

inline Eigen::Matrix2cd free_evolution(double delta_total, double t) {
    Eigen::Matrix2cd U = Eigen::Matrix2cd::Zero();
    U(0, 0) = std::polar(1.0, -0.5 * delta_total * t);
    U(1, 1) = std::polar(1.0, 0.5 * delta_total * t);
    return U;
}

inline Eigen::Matrix2cd pair_propagator(double delta_total, const PulseSpec& p) {
    const Eigen::Matrix2cd R = pulse_rotation(delta_total, p);
    return R * free_evolution(delta_total, p.tau - p.tp) * R;
}

// Probability of leaving the ground level after one pulse pair.
inline double pair_excitation(double delta_total, const PulseSpec& p) {
    if (p.omega1 == 0.0) return 0.0;
    return std::norm(pair_propagator(delta_total, p)(0, 1));
}

// Coherence left by a single probe pulse from the ground level, conjugated
// so that the echo carries e^{+i Delta t}.
inline cplx probe_coherence(double delta_total, const PulseSpec& p) {
    const Eigen::Matrix2cd R = pulse_rotation(delta_total, p);
    return std::conj(R(0, 1)) * R(1, 1);
}

// Normalized two-pulse power spectrum cos^2(w tau / 2) sinc^2(w tp / 2),
// zero at w = pi (2k + 1) / tau.
inline std::vector<double> pair_power_spectrum(double tau, double tp, const std::vector<double>& freq) {
    if (!(tau > 0.0)) throw ValidationError("tau must be > 0");
    if (!(tp >= 0.0)) throw ValidationError("pulse duration must be >= 0");
    std::vector<double> out;
    out.reserve(freq.size());
    for (double w : freq) {
        const double c = std::cos(0.5 * w * tau);
        const double x = 0.5 * w * tp;
        const double sinc = x == 0.0 ? 1.0 : std::sin(x) / x;
        out.push_back(c * c * sinc * sinc);
    }
    return out;
}

// ------- Pair map -------

// One pair followed by collapse: p <- p - q.p + B^T (q.p), with q the
// per-level excitation and B the normalized branching of the excited levels.
inline std::vector<double> level_excitations(const ConditionalEigenSystem& es, double delta, const PulseSpec& p) {
    std::vector<double> q(es.levels());
    for (std::size_t j = 0; j < q.size(); ++j) q[j] = pair_excitation(delta + es.offset(j, j), p);
    return q;
}

inline void apply_pair_generator(Eigen::VectorXd& pops, const TransitionTable& t, const std::vector<double>& q) {
    const std::size_t n = t.levels();
    if (static_cast<std::size_t>(pops.size()) != n || q.size() != n)
        throw ValidationError("grating state does not match the transition table");
    Eigen::VectorXd out = pops;
    for (std::size_t i = 0; i < n; ++i) {
        const double lifted = q[i] * pops[static_cast<Eigen::Index>(i)];
        if (lifted == 0.0) continue;
        out[static_cast<Eigen::Index>(i)] -= lifted;
        for (std::size_t k = t.row_start[i]; k < t.row_start[i + 1]; ++k) {
            const auto& tr = t.entries[k];
            out[static_cast<Eigen::Index>(tr.j)] += lifted * spin::branching(t, tr);
        }
    }
    pops = out;
}

inline void apply_pair_generator(Eigen::VectorXd& pops, const ConditionalEigenSystem& es, const TransitionTable& t,
                                 const PulseSpec& p, double delta) {
    apply_pair_generator(pops, t, level_excitations(es, delta, p));
}

// Levels connected by nuclear flips. Nuclei that never flip split the
// levels into independent blocks.
struct FlipBlocks {
    std::vector<std::vector<std::uint32_t>> blocks;
};

inline FlipBlocks flip_blocks(const TransitionTable& t) {
    const std::size_t n = t.levels();
    std::uint32_t mobile = 0;
    for (const auto& tr : t.entries)
        if (tr.flip >= 0) mobile |= 1u << tr.flip;
    FlipBlocks fb;
    std::vector<int> id(n, -1);
    for (std::uint32_t j = 0; j < n; ++j) {
        const std::uint32_t key = j & ~mobile;
        if (id[key] < 0) {
            id[key] = static_cast<int>(fb.blocks.size());
            fb.blocks.emplace_back();
        }
        fb.blocks[static_cast<std::size_t>(id[key])].push_back(j);
    }
    return fb;
}

// Closed form of N pair generators on one detuning node: with
// S = D^1/2 (B - I) D^1/2 = V L V^T, G^N = D^-1/2 V (I + L)^N V^T D^1/2.
class PairPowers {
public:
    static constexpr double kExcitationFloor = 1e-12;

    PairPowers(const TransitionTable& t, const FlipBlocks& fb) : t_(t), fb_(fb) {
        const std::size_t n = t.levels();
        local_.assign(n, 0);
        for (const auto& b : fb.blocks)
            for (std::size_t k = 0; k < b.size(); ++k) local_[b[k]] = static_cast<int>(k);
    }

    // Populations after each N in `counts`, starting from the thermal state.
    std::vector<Eigen::VectorXd> evolve(const std::vector<double>& q, const std::vector<long>& counts) {
        const std::size_t n = t_.levels();
        std::vector<Eigen::VectorXd> out(counts.size(), Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 1.0 / n));
        for (const auto& block : fb_.blocks) {
            const auto m = static_cast<Eigen::Index>(block.size());
            Eigen::VectorXd sq(m);
            for (Eigen::Index a = 0; a < m; ++a) sq[a] = std::sqrt(std::max(q[block[static_cast<std::size_t>(a)]], kExcitationFloor));
            Eigen::MatrixXd S = Eigen::MatrixXd::Zero(m, m);
            for (Eigen::Index a = 0; a < m; ++a) {
                const auto i = block[static_cast<std::size_t>(a)];
                S(a, a) -= 1.0;
                for (std::size_t k = t_.row_start[i]; k < t_.row_start[i + 1]; ++k) {
                    const auto& tr = t_.entries[k];
                    S(local_[tr.j], a) += spin::branching(t_, tr);
                }
            }
            // Branching is symmetric; enforce it exactly before the solve.
            S = 0.5 * (S + S.transpose()).eval();
            S = sq.asDiagonal() * S * sq.asDiagonal();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
            const Eigen::VectorXd lam = (eig.eigenvalues().array() + 1.0).matrix();
            const Eigen::MatrixXd& V = eig.eigenvectors();
            const Eigen::VectorXd y = V.transpose() * (sq / static_cast<double>(n));
            for (std::size_t c = 0; c < counts.size(); ++c) {
                if (counts[c] == 0) continue;
                Eigen::VectorXd pw(m);
                for (Eigen::Index a = 0; a < m; ++a) pw[a] = std::pow(lam[a], static_cast<double>(counts[c])) * y[a];
                const Eigen::VectorXd z = V * pw;
                for (Eigen::Index a = 0; a < m; ++a)
                    out[c][static_cast<Eigen::Index>(block[static_cast<std::size_t>(a)])] = std::max(z[a] / sq[a], 0.0);
            }
        }
        return out;
    }

private:
    const TransitionTable& t_;
    FlipBlocks fb_;
    std::vector<int> local_;
};

// ------- Detuning nodes -------

// Midpoint nodes on [-half, half] with a Tukey taper of fraction `taper`;
// weights include the uniform density 1 / (2 half).
inline std::vector<holeburn::DetuningNode> tapered_nodes(double half, double spacing, double taper) {
    if (!(half > 0.0) || !(spacing > 0.0)) throw ValidationError("detuning window and spacing must be > 0");
    if (!(taper >= 0.0 && taper <= 1.0)) throw ValidationError("taper fraction must lie in [0, 1]");
    const auto n = static_cast<long>(std::ceil(2.0 * half / spacing));
    const double h = 2.0 * half / static_cast<double>(n);
    std::vector<holeburn::DetuningNode> nodes;
    nodes.reserve(static_cast<std::size_t>(n));
    const double flat = (1.0 - taper) * half;
    for (long k = 0; k < n; ++k) {
        const double d = -half + (k + 0.5) * h;
        double w = 1.0;
        if (std::abs(d) > flat) w = 0.5 * (1.0 + std::cos(kPi * (std::abs(d) - flat) / (half - flat)));
        nodes.push_back({d, w * h / (2.0 * half)});
    }
    return nodes;
}

// ------- Single-configuration grating -------

struct GratingState {
    std::vector<holeburn::DetuningNode> nodes;
    Eigen::MatrixXd populations;  // levels x nodes
    long n_applied = 0;
};

inline std::vector<GratingState> accumulate_grating(const ConditionalEigenSystem& es, const TransitionTable& t,
                                                    const PulseSpec& p, const std::vector<holeburn::DetuningNode>& nodes,
                                                    const std::vector<long>& checkpoints) {
    p.validate();
    for (long c : checkpoints)
        if (c < 0) throw ValidationError("checkpoint counts must be >= 0");
    const FlipBlocks fb = flip_blocks(t);
    PairPowers pp(t, fb);
    std::vector<GratingState> out(checkpoints.size());
    for (std::size_t c = 0; c < checkpoints.size(); ++c) {
        out[c].nodes = nodes;
        out[c].n_applied = checkpoints[c];
        out[c].populations.resize(static_cast<Eigen::Index>(t.levels()), static_cast<Eigen::Index>(nodes.size()));
    }
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const auto pops = pp.evolve(level_excitations(es, nodes[k].delta, p), checkpoints);
        for (std::size_t c = 0; c < checkpoints.size(); ++c) out[c].populations.col(static_cast<Eigen::Index>(k)) = pops[c];
    }
    return out;
}

struct EchoTrace {
    struct Meta {
        double tau = 0.0;
        long n = 0;
        std::uint64_t seed = 0;
    };
    std::vector<double> time;
    std::vector<cplx> amplitude;
    Meta meta;
};

inline void check_time_grid(const std::vector<double>& t) {
    for (std::size_t k = 1; k < t.size(); ++k)
        if (!(t[k] > t[k - 1])) throw ValidationError("time grid must be strictly increasing");
}

// A(t) = sum over nodes and levels of w p kappa e^{i Delta t}, evaluated
// directly for one configuration.
inline EchoTrace probe_echo(const GratingState& g, const ConditionalEigenSystem& es, const PulseSpec& p,
                            const std::vector<double>& time) {
    check_time_grid(time);
    EchoTrace tr;
    tr.time = time;
    tr.amplitude.assign(time.size(), 0.0);
    tr.meta.tau = p.tau;
    tr.meta.n = g.n_applied;
    for (std::size_t k = 0; k < g.nodes.size(); ++k)
        for (std::size_t j = 0; j < es.levels(); ++j) {
            const double d = g.nodes[k].delta + es.offset(j, j);
            const cplx a = g.nodes[k].weight * g.populations(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) *
                           probe_coherence(d, p);
            for (std::size_t q = 0; q < time.size(); ++q) tr.amplitude[q] += a * std::polar(1.0, d * time[q]);
        }
    return tr;
}

// ------- Spectra on uniform grids -------

// Linear (cloud-in-cell) deposition onto a uniform grid.
template <class T>
struct UniformBins {
    double lo = 0.0;
    double step = 1.0;
    std::vector<T> values;

    UniformBins() = default;
    UniformBins(double lo_, double hi, double step_) : lo(lo_), step(step_) {
        values.assign(static_cast<std::size_t>(std::ceil((hi - lo_) / step_)) + 2, T{});
    }
    void deposit(double x, T v) {
        const double u = (x - lo) / step;
        const auto k = static_cast<long>(std::floor(u));
        if (k < 0 || k + 1 >= static_cast<long>(values.size())) throw NumericalError("spectral deposit outside bin range");
        const double f = u - static_cast<double>(k);
        values[static_cast<std::size_t>(k)] += (1.0 - f) * v;
        values[static_cast<std::size_t>(k) + 1] += f * v;
    }
    double at(std::size_t k) const { return lo + step * static_cast<double>(k); }
    void add(const UniformBins& o) {
        for (std::size_t k = 0; k < values.size(); ++k) values[k] += o.values[k];
    }
};

// sum_k v_k e^{i w_k t} on a uniform frequency grid, by Horner in e^{i step t}.
template <class T>
cplx uniform_transform(const UniformBins<T>& b, double t) {
    const cplx r = std::polar(1.0, b.step * t);
    cplx acc = 0.0;
    for (std::size_t k = b.values.size(); k-- > 0;) acc = acc * r + cplx(b.values[k]);
    return acc * std::polar(1.0, b.lo * t);
}

inline bool is_uniform(const std::vector<double>& f, double rel = 1e-9) {
    if (f.size() < 2) return false;
    const double h = (f.back() - f.front()) / static_cast<double>(f.size() - 1);
    if (!(h > 0.0)) return false;
    for (std::size_t k = 1; k < f.size(); ++k)
        if (std::abs(f[k] - f[k - 1] - h) > rel * h + 1e-12 * std::abs(f[k])) return false;
    return true;
}

using SpectralWeight = std::function<cplx(double)>;

// Impulse response of a sampled density: A(t) = sum rho_k W(w_k) e^{i w_k t} / sum rho_k,
// so a unit DC component gives a unit transient at t = 0 when W = 1.
inline EchoTrace echo_from_density(const holeburn::SpectralDensity& s, const std::vector<double>& time,
                                   const SpectralWeight& weight = {}) {
    if (!is_uniform(s.freq)) throw ValidationError("echo_from_density needs a uniform frequency grid");
    if (s.values.size() != s.freq.size()) throw ValidationError("density and grid sizes differ");
    check_time_grid(time);
    UniformBins<cplx> b;
    b.lo = s.freq.front();
    b.step = (s.freq.back() - s.freq.front()) / static_cast<double>(s.freq.size() - 1);
    double dc = 0.0;
    for (std::size_t k = 0; k < s.values.size(); ++k) {
        b.values.push_back(weight ? s.values[k] * weight(s.freq[k]) : cplx(s.values[k]));
        dc += s.values[k];
    }
    if (dc == 0.0) throw NumericalError("density has zero total weight");
    EchoTrace tr;
    tr.time = time;
    for (double t : time) tr.amplitude.push_back(uniform_transform(b, t) / dc);
    return tr;
}

struct InputPulse {
    double time = 0.0;
    cplx amplitude = 1.0;
};

// Output of a pulse train through the causal impulse response of `s`.
inline EchoTrace delay_line_response(const std::vector<InputPulse>& inputs, const holeburn::SpectralDensity& s,
                                     const std::vector<double>& time, const SpectralWeight& weight = {}) {
    for (const auto& in : inputs)
        if (!(in.time >= 0.0)) throw ValidationError("input pulse times must be >= 0");
    check_time_grid(time);
    EchoTrace out;
    out.time = time;
    out.amplitude.assign(time.size(), 0.0);
    for (const auto& in : inputs) {
        if (in.amplitude == cplx(0.0)) continue;
        std::vector<double> shifted;
        std::vector<std::size_t> where;
        for (std::size_t k = 0; k < time.size(); ++k)
            if (time[k] >= in.time) {
                shifted.push_back(time[k] - in.time);
                where.push_back(k);
            }
        if (shifted.empty()) continue;
        const auto h = echo_from_density(s, shifted, weight);
        for (std::size_t k = 0; k < where.size(); ++k) out.amplitude[where[k]] += in.amplitude * h.amplitude[k];
    }
    return out;
}

// ------- Ensemble accumulation -------

struct EchoScenario {
    holeburn::Ensemble ensemble;
    PulseSpec pulse;
    std::vector<long> checkpoints = {0, 300, 1500, 3000, 6000, 12000, 18000, 36000};
    double window_half = mhz(1.0);
    int nodes_per_period = 12;
    double taper = 0.3;
    double bin = hz(50.0);
    int workers = 1;

    double node_spacing() const { return kTwoPi / pulse.tau / nodes_per_period; }

    void validate() const {
        ensemble.spin.validate();
        ensemble.lattice.validate();
        pulse.validate();
        check_bath_size(ensemble.ns);
        if (ensemble.n_configs < 1) throw ValidationError("n_configs must be >= 1");
        if (nodes_per_period < 2) throw ValidationError("nodes_per_period must be >= 2");
        if (!(bin > 0.0)) throw ValidationError("spectral bin must be > 0");
        if (checkpoints.empty()) throw ValidationError("at least one checkpoint is required");
        for (long c : checkpoints)
            if (c < 0) throw ValidationError("checkpoint counts must be >= 0");
    }
};

// Ensemble spectra per checkpoint: probe-weighted (complex) and plain
// population density of the zero-flip lines, both on the same bins.
struct EchoSpectra {
    std::vector<long> checkpoints;
    std::vector<UniformBins<cplx>> probe;
    std::vector<UniformBins<double>> density;
};

namespace detail {

// Bound on |e_j - g_j| for any bath of the ensemble: each nucleus moves
// the line by at most (|Jz_e| + |Jz_g|) |(A, B)| / 2, and the nearest
// sites are the strongest.
inline double offset_bound(const holeburn::Ensemble& e) {
    lattice::SamplingOptions opt;
    opt.abundance = e.abundance;
    opt.field_direction = e.spin.field_direction();
    opt.overrides = e.overrides;
    double strongest = 0.0;
    for (const auto& site : lattice::coupled_sites(e.lattice, opt)) strongest = std::max(strongest, site.strength());
    return 0.5 * (std::abs(e.spin.jz_e) + std::abs(e.spin.jz_g)) * e.ns * strongest;
}

}  // namespace detail

inline EchoSpectra echo_spectra(const EchoScenario& sc) {
    sc.validate();
    const auto nodes = tapered_nodes(sc.window_half, sc.node_spacing(), sc.taper);
    const double reach = sc.window_half + detail::offset_bound(sc.ensemble) + 4.0 * sc.bin;

    EchoSpectra total;
    total.checkpoints = sc.checkpoints;
    for (std::size_t c = 0; c < sc.checkpoints.size(); ++c) {
        total.probe.emplace_back(-reach, reach, sc.bin);
        total.density.emplace_back(-reach, reach, sc.bin);
    }

    auto one = [&](std::size_t k) {
        return holeburn::with_config_index(k, [&] {
            const auto bath = sc.ensemble.bath(k);
            const auto es = spin::build_eigensystem(bath, sc.ensemble.spin);
            const auto t = spin::transition_elements(es);
            const FlipBlocks fb = flip_blocks(t);
            PairPowers pp(t, fb);
            EchoSpectra part;
            for (std::size_t c = 0; c < sc.checkpoints.size(); ++c) {
                part.probe.emplace_back(-reach, reach, sc.bin);
                part.density.emplace_back(-reach, reach, sc.bin);
            }
            std::vector<cplx> kappa(es.levels());
            for (const auto& node : nodes) {
                const auto q = level_excitations(es, node.delta, sc.pulse);
                for (std::size_t j = 0; j < es.levels(); ++j) kappa[j] = probe_coherence(node.delta + es.offset(j, j), sc.pulse);
                const auto pops = pp.evolve(q, sc.checkpoints);
                for (std::size_t c = 0; c < pops.size(); ++c)
                    for (std::size_t j = 0; j < es.levels(); ++j) {
                        const double w = node.weight * pops[c][static_cast<Eigen::Index>(j)];
                        const double d = node.delta + es.offset(j, j);
                        part.probe[c].deposit(d, w * kappa[j]);
                        part.density[c].deposit(d, w);
                    }
            }
            return part;
        });
    };

    // Fixed batches summed in index order keep the result independent of
    // the worker count while bounding memory.
    const auto n = static_cast<std::size_t>(sc.ensemble.n_configs);
    constexpr std::size_t batch = 8;
    for (std::size_t first = 0; first < n; first += batch) {
        const std::size_t count = std::min(batch, n - first);
        auto parts = parallel_map(count, sc.workers, [&](std::size_t k) { return one(first + k); });
        for (auto& p : parts)
            for (std::size_t c = 0; c < sc.checkpoints.size(); ++c) {
                total.probe[c].add(p.probe[c]);
                total.density[c].add(p.density[c]);
            }
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t c = 0; c < sc.checkpoints.size(); ++c) {
        for (auto& v : total.probe[c].values) v *= inv;
        for (auto& v : total.density[c].values) v *= inv;
    }
    return total;
}

inline EchoTrace probe_trace(const EchoSpectra& s, std::size_t checkpoint, const std::vector<double>& time) {
    check_time_grid(time);
    EchoTrace tr;
    tr.time = time;
    tr.meta.n = s.checkpoints.at(checkpoint);
    for (double t : time) tr.amplitude.push_back(uniform_transform(s.probe[checkpoint], t));
    return tr;
}

inline holeburn::SpectralDensity density_of(const EchoSpectra& s, std::size_t checkpoint) {
    holeburn::SpectralDensity d;
    const auto& b = s.density.at(checkpoint);
    for (std::size_t k = 0; k < b.values.size(); ++k) {
        d.freq.push_back(b.at(k));
        d.values.push_back(b.values[k] / b.step);
    }
    return d;
}

// ------- Grating spectra on a probe grid -------

struct GratingScenario {
    holeburn::Ensemble ensemble;
    PulseSpec pulse;
    std::vector<long> checkpoints = {3000};
    std::vector<double> grid;          // rad/s
    double gamma_probe = khz(1.0);
    double node_spacing = khz(0.25);
    int workers = 1;

    void validate() const {
        ensemble.spin.validate();
        pulse.validate();
        check_bath_size(ensemble.ns);
        if (ensemble.n_configs < 1) throw ValidationError("n_configs must be >= 1");
        if (grid.size() < 2) throw ValidationError("probe grid needs at least two points");
        for (std::size_t k = 1; k < grid.size(); ++k)
            if (!(grid[k] > grid[k - 1])) throw ValidationError("probe grid must be strictly increasing");
        if (!(gamma_probe > 0.0) || !(node_spacing > 0.0)) throw ValidationError("linewidth and spacing must be > 0");
    }
};

struct GratingSpectra {
    std::vector<long> checkpoints;
    std::vector<double> grid;
    std::vector<std::vector<double>> ratio;  // per checkpoint
    std::vector<double> rho0;
};

// rho_N / rho_0 with both densities rendered through the same detuning nodes.
inline GratingSpectra grating_spectra(const GratingScenario& sc) {
    sc.validate();
    const double half = std::max(std::abs(sc.grid.front()), std::abs(sc.grid.back())) +
                        detail::offset_bound(sc.ensemble) + 60.0 * sc.gamma_probe;
    const auto nodes = tapered_nodes(half, sc.node_spacing, 0.0);
    const std::size_t nc = sc.checkpoints.size(), ng = sc.grid.size();

    auto one = [&](std::size_t k) {
        return holeburn::with_config_index(k, [&] {
            const auto bath = sc.ensemble.bath(k);
            const auto es = spin::build_eigensystem(bath, sc.ensemble.spin);
            const auto t = spin::transition_elements(es);
            const FlipBlocks fb = flip_blocks(t);
            PairPowers pp(t, fb);
            std::vector<std::vector<double>> acc(nc + 1, std::vector<double>(ng, 0.0));
            const Eigen::VectorXd thermal = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(es.levels()), 1.0 / es.levels());
            for (const auto& node : nodes) {
                const auto pops = pp.evolve(level_excitations(es, node.delta, sc.pulse), sc.checkpoints);
                for (std::size_t j = 0; j < es.levels(); ++j) {
                    const double m2 = t.zero_flip[j] * t.zero_flip[j];
                    const double pos = node.delta + es.offset(j, j);
                    for (std::size_t c = 0; c <= nc; ++c) {
                        const double p = c == nc ? thermal[static_cast<Eigen::Index>(j)] : pops[c][static_cast<Eigen::Index>(j)];
                        holeburn::add_line(acc[c], sc.grid, pos, node.weight * m2 * p, sc.gamma_probe);
                    }
                }
            }
            return acc;
        });
    };
    const auto n = static_cast<std::size_t>(sc.ensemble.n_configs);
    auto parts = parallel_map(n, sc.workers, one);
    GratingSpectra out;
    out.checkpoints = sc.checkpoints;
    out.grid = sc.grid;
    std::vector<std::vector<double>> sums(nc + 1);
    for (std::size_t c = 0; c <= nc; ++c) {
        std::vector<std::vector<double>> col;
        for (auto& p : parts) col.push_back(p[c]);
        sums[c] = holeburn::sum_in_order(col);
    }
    out.rho0 = sums[nc];
    for (std::size_t c = 0; c < nc; ++c) {
        std::vector<double> r(ng);
        for (std::size_t q = 0; q < ng; ++q) r[q] = sums[c][q] / sums[nc][q];
        out.ratio.push_back(std::move(r));
    }
    return out;
}

// ------- Trace analysis -------

struct EchoPeak {
    double time = 0.0;
    cplx amplitude = 0.0;
};

// Largest |A| within +-halfwidth of `around`.
inline EchoPeak find_peak(const EchoTrace& tr, double around, double halfwidth) {
    EchoPeak best;
    double m = -1.0;
    for (std::size_t k = 0; k < tr.time.size(); ++k) {
        if (std::abs(tr.time[k] - around) > halfwidth) continue;
        const double a = std::abs(tr.amplitude[k]);
        if (a > m) {
            m = a;
            best = {tr.time[k], tr.amplitude[k]};
        }
    }
    if (m < 0.0) throw ValidationError("no trace samples near the requested echo time");
    return best;
}

inline std::vector<double> uniform_times(double t0, double t1, double dt) {
    std::vector<double> t;
    const auto n = static_cast<std::size_t>(std::llround((t1 - t0) / dt));
    for (std::size_t k = 0; k <= n; ++k) t.push_back(t0 + dt * static_cast<double>(k));
    return t;
}

// Anti-hole positions: local maxima of the ratio above 1.
inline std::vector<double> antihole_positions(const std::vector<double>& grid, const std::vector<double>& ratio) {
    std::vector<double> out;
    for (std::size_t k = 1; k + 1 < grid.size(); ++k)
        if (ratio[k] > 1.0 && ratio[k] > ratio[k - 1] && ratio[k] >= ratio[k + 1]) out.push_back(grid[k]);
    return out;
}

// Least-squares slope of anti-hole position against index.
inline double antihole_spacing(const std::vector<double>& grid, const std::vector<double>& ratio) {
    const auto pos = antihole_positions(grid, ratio);
    if (pos.size() < 2) throw NumericalError("fewer than two anti-holes on the grid");
    const double n = static_cast<double>(pos.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < pos.size(); ++k) {
        const double x = static_cast<double>(k);
        sx += x;
        sy += pos[k];
        sxx += x * x;
        sxy += x * pos[k];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Frequency-domain period of the strongest modulation of `values`,
// scanned over [p_lo, p_hi] in steps of `resolution`.
inline double grating_period(const std::vector<double>& grid, const std::vector<double>& values, double p_lo, double p_hi,
                             double resolution) {
    if (!(p_lo > 0.0) || !(p_hi > p_lo) || !(resolution > 0.0)) throw ValidationError("bad period scan range");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double best = p_lo, best_power = -1.0;
    for (double P = p_lo; P <= p_hi; P += resolution) {
        cplx acc = 0.0;
        for (std::size_t k = 0; k < grid.size(); ++k) acc += (values[k] - mean) * std::polar(1.0, kTwoPi * grid[k] / P);
        if (std::norm(acc) > best_power) {
            best_power = std::norm(acc);
            best = P;
        }
    }
    return best;
}

// First-echo amplitudes |A(tau)| per checkpoint, normalized to the t = 0
// transient of the N = 0 run (which must be the first checkpoint).
struct Buildup {
    std::vector<long> n;
    std::vector<cplx> first;
    std::vector<cplx> second;
};

inline Buildup echo_buildup(const EchoSpectra& s, double tau, double dt = 0.1e-6) {
    if (s.checkpoints.empty() || s.checkpoints.front() != 0)
        throw ValidationError("buildup needs N = 0 as the first checkpoint");
    const cplx ref = uniform_transform(s.probe.front(), 0.0);
    if (std::abs(ref) == 0.0) throw NumericalError("reference transient vanishes");
    const auto around1 = uniform_times(0.9 * tau, 1.1 * tau, dt);
    const auto around2 = uniform_times(1.9 * tau, 2.1 * tau, dt);
    Buildup b;
    for (std::size_t c = 0; c < s.checkpoints.size(); ++c) {
        b.n.push_back(s.checkpoints[c]);
        b.first.push_back(find_peak(probe_trace(s, c, around1), tau, 0.1 * tau).amplitude / ref);
        b.second.push_back(find_peak(probe_trace(s, c, around2), 2.0 * tau, 0.1 * tau).amplitude / ref);
    }
    return b;
}

}  // namespace shb::echo
