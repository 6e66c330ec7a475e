// lattice.hpp - scheelite W sites around Er, dipolar hyperfine, bath sampling
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"

namespace shb::lattice {

// Default cell: CaWO4 (I4_1/a), a = 0.5243 nm, c = 1.1376 nm, with W on 4a and
// Er substituting the Ca 4b site at (0, 1/4, 5/8).
struct LatticeParams {
    double a_nm = 0.5243;
    double c_nm = 1.1376;
    std::vector<Eigen::Vector3d> w_fractional = {
        {0.0, 0.25, 0.125}, {0.0, 0.75, 0.875}, {0.5, 0.25, 0.375}, {0.5, 0.75, 0.625}};
    Eigen::Vector3d er_site{0.0, 0.25, 0.625};
    double cutoff_nm = 1.2;

    void validate() const {
        if (!(a_nm > 0.0) || !(c_nm > 0.0)) throw ValidationError("lattice constants must be > 0");
        if (!(cutoff_nm > 0.0)) throw ValidationError("cutoff_radius must be > 0");
        if (w_fractional.empty()) throw ValidationError("no W positions in the unit cell");
        auto in_cell = [](const Eigen::Vector3d& f) {
            return (f.array() >= 0.0).all() && (f.array() < 1.0).all();
        };
        for (const auto& f : w_fractional)
            if (!in_cell(f)) throw ValidationError("W fractional coordinate outside [0,1)");
        if (!in_cell(er_site)) throw ValidationError("Er fractional coordinate outside [0,1)");
    }
};

enum class Shell { TypeI, TypeII, TypeIII, Other };

inline const char* shell_name(Shell s) {
    switch (s) {
        case Shell::TypeI: return "TypeI";
        case Shell::TypeII: return "TypeII";
        case Shell::TypeIII: return "TypeIII";
        default: return "Other";
    }
}

inline Shell parse_shell(const std::string& name) {
    if (name == "TypeI") return Shell::TypeI;
    if (name == "TypeII") return Shell::TypeII;
    if (name == "TypeIII") return Shell::TypeIII;
    if (name == "Other") return Shell::Other;
    throw ValidationError("unknown shell label '" + name + "'");
}

// Shell distance bands, +-1 pm.
inline Shell classify_distance(double r_nm) {
    constexpr double tol = 1e-3;
    if (std::abs(r_nm - 0.3707) <= tol) return Shell::TypeI;
    if (std::abs(r_nm - 0.3867) <= tol) return Shell::TypeII;
    if (std::abs(r_nm - 0.5687) <= tol) return Shell::TypeIII;
    return Shell::Other;
}

// Couplings in rad/s. branch_override holds (A_e, A_g) when the isotropic
// term depends on the electronic state.
struct NuclearSite {
    Eigen::Vector3d displacement_nm = Eigen::Vector3d::Zero();
    double distance_nm = 0.0;
    Shell shell = Shell::Other;
    double A = 0.0;
    double B = 0.0;
    std::optional<std::pair<double, double>> branch_override;

    double strength() const {
        double a2 = A * A;
        if (branch_override)
            a2 = std::max(branch_override->first * branch_override->first,
                          branch_override->second * branch_override->second);
        return std::sqrt(a2 + B * B);
    }
};

struct BathConfiguration {
    std::vector<NuclearSite> sites;
    std::uint64_t seed = 0;
    double abundance = 0.145;

    int size() const { return static_cast<int>(sites.size()); }
};

// ------- Geometry -------

inline std::vector<NuclearSite> enumerate_w_sites(const LatticeParams& p) {
    p.validate();
    const Eigen::Vector3d cell(p.a_nm, p.a_nm, p.c_nm);
    const int na = static_cast<int>(std::ceil(p.cutoff_nm / p.a_nm)) + 1;
    const int nc = static_cast<int>(std::ceil(p.cutoff_nm / p.c_nm)) + 1;

    std::vector<NuclearSite> out;
    for (int i = -na; i <= na; ++i)
        for (int j = -na; j <= na; ++j)
            for (int k = -nc; k <= nc; ++k)
                for (const auto& f : p.w_fractional) {
                    const Eigen::Vector3d frac = f + Eigen::Vector3d(i, j, k) - p.er_site;
                    NuclearSite s;
                    s.displacement_nm = frac.cwiseProduct(cell);
                    s.distance_nm = s.displacement_nm.norm();
                    if (s.distance_nm > p.cutoff_nm || s.distance_nm < 1e-9) continue;
                    s.shell = classify_distance(s.distance_nm);
                    out.push_back(s);
                }
    if (out.empty())
        throw DegenerateInput("no W site within cutoff " + std::to_string(p.cutoff_nm) + " nm");

    // Total order: distance, then coordinates, so downstream draws are reproducible.
    std::sort(out.begin(), out.end(), [](const NuclearSite& x, const NuclearSite& y) {
        constexpr double eps = 1e-9;
        if (std::abs(x.distance_nm - y.distance_nm) > eps) return x.distance_nm < y.distance_nm;
        for (int d = 0; d < 3; ++d)
            if (std::abs(x.displacement_nm[d] - y.displacement_nm[d]) > eps)
                return x.displacement_nm[d] < y.displacement_nm[d];
        return false;
    });
    return out;
}

// ------- Dipolar hyperfine -------

// g_e is the Lande factor of the 4I15/2 multiplet; gamma_n = g_n mu_n / hbar.
struct HyperfineConstants {
    double mu0_over_4pi = kMu0Over4Pi;
    double g_e = 6.0 / 5.0;
    double mu_b = kBohrMagneton;
    double gamma_n = kTwoPi * 1.77394e6;
};

// Full tensor in rad/s, crystal frame.
inline Eigen::Matrix3d dipolar_tensor(const Eigen::Vector3d& displacement_nm,
                                      const HyperfineConstants& k = {}) {
    const double r_nm = displacement_nm.norm();
    if (!(r_nm > 0.0)) throw NumericalError("dipolar coupling singular at zero distance");
    const double r = r_nm * 1e-9;
    const double pref = k.mu0_over_4pi / (r * r * r) * k.g_e * k.mu_b * k.gamma_n;
    const Eigen::Vector3d u = displacement_nm / r_nm;
    return pref * (Eigen::Matrix3d::Identity() - 3.0 * u * u.transpose());
}

// (A, B) with z along field_direction: A = A_zz, B = |(A_xz, A_yz)|.
inline std::pair<double, double> dipolar_hyperfine(const NuclearSite& site,
                                                   const Eigen::Vector3d& field_direction,
                                                   const HyperfineConstants& k = {}) {
    if (std::abs(field_direction.norm() - 1.0) > 1e-9)
        throw ValidationError("field direction must be a unit vector");
    const Eigen::Matrix3d T = dipolar_tensor(site.displacement_nm, k);
    const Eigen::Vector3d tn = T * field_direction;
    const double a = field_direction.dot(tn);
    const double b = (tn - a * field_direction).norm();
    return {a, b};
}

// ------- Fitted overrides -------

// Magnitudes in rad/s; signs follow the dipolar A of each site.
struct ShellOverride {
    std::optional<double> a;
    std::optional<double> a_e;
    std::optional<double> a_g;
    std::optional<double> b;
};

using OverrideTable = std::map<Shell, ShellOverride>;

// Fitted hyperfine values. The Type I pair is quoted as "73.0/23.0"
// without saying which belongs to which branch; 23 kHz goes with the excited
// branch here (see README, "Type I branch assignment").
inline OverrideTable default_overrides() {
    OverrideTable t;
    t[Shell::TypeI] = ShellOverride{std::nullopt, khz(23.0), khz(73.0), 0.0};
    t[Shell::TypeII] = ShellOverride{khz(14.8), std::nullopt, std::nullopt, khz(35.7)};
    return t;
}

inline std::vector<NuclearSite> apply_fitted_overrides(std::vector<NuclearSite> sites,
                                                       const OverrideTable& table) {
    for (const auto& [shell, ov] : table) {
        if (shell == Shell::Other) throw ValidationError("overrides for shell 'Other' are not allowed");
        if ((ov.a_e.has_value()) != (ov.a_g.has_value()))
            throw ValidationError(std::string("override for ") + shell_name(shell) +
                                  " needs both a_e and a_g");
    }
    for (auto& s : sites) {
        auto it = table.find(s.shell);
        if (it == table.end()) continue;
        const ShellOverride& ov = it->second;
        const double sign = s.A < 0.0 ? -1.0 : 1.0;
        if (ov.a) s.A = sign * std::abs(*ov.a);
        if (ov.a_e) {
            s.branch_override = std::make_pair(sign * std::abs(*ov.a_e), sign * std::abs(*ov.a_g));
            s.A = 0.5 * (s.branch_override->first + s.branch_override->second);
        }
        if (ov.b) s.B = std::abs(*ov.b);
    }
    return sites;
}

// ------- Bath sampling -------

struct SamplingOptions {
    double abundance = 0.145;
    Eigen::Vector3d field_direction{0.0, 0.0, 1.0};
    HyperfineConstants constants{};
    OverrideTable overrides = default_overrides();
    int max_retries = 4;
    double cutoff_growth = 1.5;
};

inline std::vector<NuclearSite> coupled_sites(const LatticeParams& params, const SamplingOptions& opt) {
    auto sites = enumerate_w_sites(params);
    for (auto& s : sites) std::tie(s.A, s.B) = dipolar_hyperfine(s, opt.field_direction, opt.constants);
    return apply_fitted_overrides(std::move(sites), opt.overrides);
}

// Sites are visited in distance order and each consumes one uniform draw, so
// enlarging the cutoff on retry keeps the inner occupation pattern.
inline BathConfiguration sample_bath(const LatticeParams& params, std::uint64_t seed, int ns_target,
                                     const SamplingOptions& opt = {}) {
    check_bath_size(ns_target);
    if (!(opt.abundance >= 0.0 && opt.abundance <= 1.0))
        throw ValidationError("isotopic abundance must lie in [0, 1]");

    LatticeParams p = params;
    for (int attempt = 0; attempt <= opt.max_retries; ++attempt) {
        const auto sites = coupled_sites(p, opt);
        Rng rng(seed);
        std::vector<NuclearSite> occupied;
        for (const auto& s : sites)
            if (rng.uniform() < opt.abundance) occupied.push_back(s);

        if (static_cast<int>(occupied.size()) >= ns_target) {
            std::stable_sort(occupied.begin(), occupied.end(),
                             [](const NuclearSite& x, const NuclearSite& y) {
                                 return x.strength() > y.strength();
                             });
            occupied.resize(static_cast<std::size_t>(ns_target));
            return BathConfiguration{std::move(occupied), seed, opt.abundance};
        }
        p.cutoff_nm *= opt.cutoff_growth;
    }
    throw DegenerateInput("fewer than " + std::to_string(ns_target) +
                          " occupied W sites after enlarging the cutoff " +
                          std::to_string(opt.max_retries) + " times (seed " + std::to_string(seed) + ")");
}

}  // namespace shb::lattice
