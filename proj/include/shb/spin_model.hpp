// spin_model.hpp - branch-conditional nuclear Hamiltonians and J_x elements
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <vector>

#include "core.hpp"
#include "lattice.hpp"

namespace shb::spin {

// Gyromagnetic ratios in rad/s/T. The defaults are the measured 17.35 and
// 117 GHz/T; the g-factors 1.247 and 8.38 give 17.45 and 117.3 GHz/T through
// gyromagnetic_from_g().
struct SpinParams {
    Eigen::Vector3d b0{0.0, 0.0, 0.44759123758413477};  // T, crystal frame; omega_I/2pi = 794 kHz
    double gamma_par = ghz(17.35);
    double gamma_perp = ghz(117.0);
    double gamma_w = mhz(1.77394);
    double jz_e = -0.7;
    double jz_g = 0.3;
    double omega0 = ghz(7.839);
    double gamma1 = 5.0;
    double gamma2 = 1.0 / 30e-3;
    double sigma = mhz(8.0);

    void validate() const {
        if (!(b0.norm() > 0.0)) throw ValidationError("|b0| must be > 0");
        if (!(gamma1 > 0.0)) throw ValidationError("gamma1 must be > 0");
        if (!(gamma2 > 0.0)) throw ValidationError("gamma2 must be > 0");
        if (!(sigma > 0.0)) throw ValidationError("sigma must be > 0");
        if (!(gamma_par > 0.0) || !(gamma_perp > 0.0)) throw ValidationError("gyromagnetic ratios must be > 0");
    }

    Eigen::Vector3d field_direction() const { return b0.normalized(); }
};

inline double gyromagnetic_from_g(double g) { return g * kBohrMagneton / kHbar; }

inline double omega_I(const SpinParams& p) { return p.gamma_w * p.b0.norm(); }

inline double electronic_frequency(const SpinParams& p) {
    const double x = p.gamma_perp * p.b0.x();
    const double y = p.gamma_perp * p.b0.y();
    const double z = p.gamma_par * p.b0.z();
    return std::sqrt(x * x + y * y + z * z);
}

enum class Branch { e, g };

// Eigenbasis of h = a I_z + b I_x. Columns of `rotation` are (up, down) with
// energies +omega/2, -omega/2; up = (cos(phi/2), sin(phi/2)).
struct NuclearBasis {
    double omega = 0.0;
    double phi = 0.0;
    double a = 0.0;
    double b = 0.0;
    bool degenerate = false;
    Eigen::Matrix2d rotation = Eigen::Matrix2d::Identity();

    Eigen::Vector2d up() const { return rotation.col(0); }
    Eigen::Vector2d down() const { return rotation.col(1); }
    double mixing() const { return b / a; }
};

inline NuclearBasis conditional_frequencies(const lattice::NuclearSite& site, const SpinParams& p,
                                            Branch branch) {
    const double jz = branch == Branch::e ? p.jz_e : p.jz_g;
    double A = site.A;
    if (site.branch_override) A = branch == Branch::e ? site.branch_override->first : site.branch_override->second;

    NuclearBasis nb;
    nb.a = omega_I(p) + jz * A;
    nb.b = jz * site.B;
    nb.omega = std::hypot(nb.a, nb.b);
    const double scale = std::abs(omega_I(p)) + std::abs(jz * A) + std::abs(jz * site.B);
    if (nb.omega <= 1e-12 * scale) {
        // Accidental cancellation: keep the B -> 0 basis.
        nb.degenerate = true;
        nb.phi = 0.0;
    } else {
        nb.phi = std::atan2(nb.b, nb.a);
    }
    const double c = std::cos(0.5 * nb.phi), s = std::sin(0.5 * nb.phi);
    nb.rotation << c, -s, s, c;
    return nb;
}

// Per-nucleus data. Bit 0 of a ground label is the g "up" state. The excited
// state sharing that bit is whichever e eigenstate overlaps it most; when that
// is e "down", `swapped` is set.
struct NucleusModes {
    NuclearBasis e;
    NuclearBasis g;
    bool swapped = false;
    double lambda = 1.0;
    double xi = 0.0;
    // same[s] = <e state with bit s | g state with bit s>
    // cross[s] = <e state with bit 1-s | g state with bit s>
    double same[2] = {1.0, 1.0};
    double cross[2] = {0.0, 0.0};

    // +1 or -1: sign of the e energy (in units of omega_e/2) for bit s.
    double e_sign(int s) const { return (s == 0) != swapped ? 1.0 : -1.0; }
    static double g_sign(int s) { return s == 0 ? 1.0 : -1.0; }
};

// Energies are measured from the bare branch energies, so e_j - g_j is the
// transition offset from omega0. Nuclear bit l of index j is (j >> l) & 1.
struct ConditionalEigenSystem {
    std::vector<NucleusModes> nuclei;
    std::vector<double> energies_e;
    std::vector<double> energies_g;

    int ns() const { return static_cast<int>(nuclei.size()); }
    std::size_t levels() const { return energies_g.size(); }
    double offset(std::size_t i, std::size_t j) const { return energies_e[i] - energies_g[j]; }
};

inline NucleusModes pair_branches(const NuclearBasis& e, const NuclearBasis& g) {
    NucleusModes m;
    m.e = e;
    m.g = g;
    const double uu = e.up().dot(g.up());
    m.swapped = uu * uu < 0.5;
    const Eigen::Vector2d e_for[2] = {m.swapped ? e.down() : e.up(), m.swapped ? e.up() : e.down()};
    const Eigen::Vector2d g_for[2] = {g.up(), g.down()};
    for (int s = 0; s < 2; ++s) {
        m.same[s] = e_for[s].dot(g_for[s]);
        m.cross[s] = e_for[1 - s].dot(g_for[s]);
    }
    m.lambda = m.same[0] * m.same[0];
    m.xi = 1.0 - m.lambda;
    return m;
}

inline ConditionalEigenSystem build_eigensystem(const lattice::BathConfiguration& bath, const SpinParams& p) {
    const int ns = bath.size();
    check_bath_size(ns);
    ConditionalEigenSystem es;
    for (const auto& site : bath.sites)
        es.nuclei.push_back(pair_branches(conditional_frequencies(site, p, Branch::e),
                                          conditional_frequencies(site, p, Branch::g)));

    const std::size_t n = std::size_t{1} << ns;
    es.energies_e.assign(n, 0.0);
    es.energies_g.assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double ee = 0.0, eg = 0.0;
        for (int l = 0; l < ns; ++l) {
            const int s = static_cast<int>((j >> l) & 1u);
            const auto& m = es.nuclei[static_cast<std::size_t>(l)];
            ee += m.e_sign(s) * 0.5 * m.e.omega;
            eg += NucleusModes::g_sign(s) * 0.5 * m.g.omega;
        }
        es.energies_e[j] = ee;
        es.energies_g[j] = eg;
    }
    return es;
}

// ------- Transition table -------

struct Transition {
    std::uint32_t i = 0;   // excited label
    std::uint32_t j = 0;   // ground label
    int flip = -1;         // flipped nucleus, -1 for the zero-flip line
    double element = 0.0;  // <e_i|J_x|g_j>
    double offset = 0.0;   // e_i - g_j (rad/s)
};

// Entries grouped by excited label: row i occupies [row_start[i], row_start[i+1]),
// zero-flip entry first. Exactly vanishing elements are omitted.
struct TransitionTable {
    int ns = 0;
    std::vector<Transition> entries;
    std::vector<std::size_t> row_start;
    std::vector<double> zero_flip;  // <e_j|J_x|g_j> per j
    std::vector<double> row_norm;   // sum_j |<e_i|J_x|g_j>|^2 over the row

    std::size_t levels() const { return zero_flip.size(); }
};

// Electronic factor: the zero-flip element is 1/2 when every xi vanishes.
inline constexpr double kElectronicElement = 0.5;

inline TransitionTable transition_elements(const ConditionalEigenSystem& es) {
    const int ns = es.ns();
    const std::size_t n = es.levels();
    TransitionTable t;
    t.ns = ns;
    t.zero_flip.assign(n, 0.0);
    t.row_norm.assign(n, 0.0);
    t.row_start.reserve(n + 1);

    std::vector<double> prefix(static_cast<std::size_t>(ns) + 1), suffix(static_cast<std::size_t>(ns) + 1);
    for (std::size_t i = 0; i < n; ++i) {
        t.row_start.push_back(t.entries.size());
        auto bit = [i](int l) { return static_cast<int>((i >> l) & 1u); };
        prefix[0] = 1.0;
        for (int l = 0; l < ns; ++l)
            prefix[static_cast<std::size_t>(l) + 1] = prefix[static_cast<std::size_t>(l)] * es.nuclei[static_cast<std::size_t>(l)].same[bit(l)];
        suffix[static_cast<std::size_t>(ns)] = 1.0;
        for (int l = ns - 1; l >= 0; --l)
            suffix[static_cast<std::size_t>(l)] = suffix[static_cast<std::size_t>(l) + 1] * es.nuclei[static_cast<std::size_t>(l)].same[bit(l)];

        const double m0 = kElectronicElement * prefix[static_cast<std::size_t>(ns)];
        t.zero_flip[i] = m0;
        t.entries.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i), -1, m0, es.offset(i, i)});
        double norm = m0 * m0;
        for (int l = 0; l < ns; ++l) {
            // g_j has bit l opposite to e_i; cross[] is indexed by the g bit.
            const auto& m = es.nuclei[static_cast<std::size_t>(l)];
            const double c = m.cross[1 - bit(l)];
            const double el = kElectronicElement * prefix[static_cast<std::size_t>(l)] * c * suffix[static_cast<std::size_t>(l) + 1];
            if (el == 0.0) continue;
            const std::size_t j = i ^ (std::size_t{1} << l);
            t.entries.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), l, el, es.offset(i, j)});
            norm += el * el;
        }
        t.row_norm[i] = norm;
    }
    t.row_start.push_back(t.entries.size());
    return t;
}

// Normalized branching ratio of e_i -> g_j for an entry of the table.
inline double branching(const TransitionTable& t, const Transition& tr) {
    return tr.element * tr.element / t.row_norm[tr.i];
}

inline double cross_relaxation_rate(double gamma1, double B, double omega_I) {
    if (omega_I == 0.0) throw NumericalError("cross-relaxation rate singular at omega_I = 0");
    return gamma1 * B * B / (4.0 * omega_I * omega_I);
}

}  // namespace shb::spin
