// cli.hpp - scenario configs, runs and run comparison behind shbsim
#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <unistd.h>
#include <vector>

#include "json.hpp"

#include "analysis.hpp"
#include "core.hpp"
#include "echo.hpp"
#include "holeburn.hpp"
#include "parallel.hpp"

#ifndef SHB_VERSION
#define SHB_VERSION "0.0.0"
#endif

namespace shb::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;

enum ExitCode { kOk = 0, kDeviation = 1, kInvalid = 2, kNumerical = 3 };

// ------- Field tables -------

enum class FieldType { Number, Integer, Boolean, String, NumberArray, IntegerArray, StringArray, Object };

struct Field {
    const char* key;
    FieldType type;
    const char* description;
};

struct Section {
    const char* key;
    std::vector<Field> fields;
};

inline const std::vector<Section>& sections() {
    using F = FieldType;
    static const std::vector<Section> s = {
        {"physics",
         {{"b0_T", F::NumberArray, "static field (x, y, z) in the crystal frame"},
          {"gamma_par_GHz_per_T", F::Number, "electron gyromagnetic ratio along c"},
          {"gamma_perp_GHz_per_T", F::Number, "electron gyromagnetic ratio in the ab plane"},
          {"gamma_w_MHz_per_T", F::Number, "183W gyromagnetic ratio"},
          {"jz_e", F::Number, "effective <Jz> of the excited electron state"},
          {"jz_g", F::Number, "effective <Jz> of the ground electron state"},
          {"omega0_GHz", F::Number, "electron transition frequency"},
          {"gamma1_per_s", F::Number, "electron energy relaxation rate"},
          {"gamma2_per_s", F::Number, "electron decoherence rate"},
          {"sigma_MHz", F::Number, "inhomogeneous linewidth (Gaussian detuning model)"},
          {"abundance", F::Number, "183W isotopic abundance"},
          {"cutoff_nm", F::Number, "bath sampling radius"},
          {"overrides", F::Object, "fitted hyperfine values per shell: {TypeI: {a_kHz | a_e_kHz + a_g_kHz, b_kHz}}"}}},
        {"run",
         {{"ns", F::Integer, "nuclei per bath configuration"},
          {"n_configs", F::Integer, "bath configurations"},
          {"n_detunings", F::Integer, "quadrature nodes per resonance segment"},
          {"seed", F::Integer, "master seed"},
          {"n_pairs", F::Integer, "pulse pairs"},
          {"checkpoints", F::IntegerArray, "pulse-pair counts at which results are recorded"}}},
        {"pump",
         {{"offset_kHz", F::Number, "pump detuning from omega0"},
          {"rabi_Hz", F::Number, "pump Rabi amplitude"},
          {"duration_s", F::Number, "pump duration"}}},
        {"probe",
         {{"lo_kHz", F::Number, "probe grid start, from omega0"},
          {"hi_kHz", F::Number, "probe grid end, from omega0"},
          {"step_kHz", F::Number, "probe grid step"},
          {"linewidth_kHz", F::Number, "probe line width"},
          {"node_spacing_kHz", F::Number, "detuning node spacing for grating spectra"},
          {"distribution", F::String, "detuning model: uniform | gaussian"},
          {"solver", F::String, "pump solver: clustered | dense"}}},
        {"pulse",
         {{"rabi_MHz", F::Number, "pulse Rabi amplitude"},
          {"tp_us", F::Number, "pulse duration"},
          {"tau_us", F::Number, "delay between pulse starts"},
          {"wait_s", F::Number, "wait between pairs"},
          {"pi_half", F::Boolean, "require rabi * tp = pi/2"}}},
        {"sampling",
         {{"half_width_MHz", F::Number, "detuning window half width"},
          {"nodes_per_period", F::Integer, "detuning nodes per grating period"},
          {"taper", F::Number, "Tukey taper fraction of the window"},
          {"bin_Hz", F::Number, "spectral bin width"}}},
        {"trace",
         {{"t0_us", F::Number, "first trace time"},
          {"t1_us", F::Number, "last trace time"},
          {"dt_us", F::Number, "trace step"}}},
        {"sweep",
         {{"range_MHz", F::Number, "full sweep span centred on omega0"},
          {"steps", F::Integer, "sweep steps"},
          {"rabi_Hz", F::Number, "sweep Rabi amplitude"},
          {"dwell_ms", F::Number, "dwell per step"},
          {"scans", F::Integer, "number of sweeps"}}},
        {"resonator",
         {{"kappa_c_per_s", F::Number, "coupling rate"},
          {"kappa_i_per_s", F::Number, "internal loss rate"},
          {"g_ens_MHz", F::Number, "ensemble coupling"},
          {"linewidth_kHz", F::Number, "homogeneous spin linewidth"},
          {"mode", F::String, "inversion: self_consistent | first_order | constant_baseline"}}},
        {"input",
         {{"csv", F::String, "input data file"},
          {"reference_csv", F::String, "reference data file"}}},
        {"fit",
         {{"n_terms", F::Integer, "exponential terms"},
          {"reference_terms", F::Integer, "exponential terms for the probe-decay reference"},
          {"weighting", F::String, "uniform | relative"},
          {"gamma_par_GHz_per_T", F::Number, "conversion from field width to frequency width"}}},
        {"io",
         {{"out_dir", F::String, "output directory, relative to the config file"},
          {"formats", F::StringArray, "subset of [csv, json]"}}},
    };
    return s;
}

inline const std::vector<std::string>& kinds() {
    static const std::vector<std::string> k = {"shb",          "echo_accumulate", "echo_probe", "reset",
                                               "analyze_decay", "fit_line",        "fit_s11",    "orbach"};
    return k;
}

inline bool stochastic(const std::string& kind) {
    return kind == "shb" || kind == "echo_accumulate" || kind == "echo_probe" || kind == "reset";
}

inline std::vector<std::string> sections_for(const std::string& kind) {
    if (kind == "shb") return {"physics", "run", "pump", "probe"};
    if (kind == "echo_accumulate") return {"physics", "run", "pulse", "probe"};
    if (kind == "echo_probe") return {"physics", "run", "pulse", "sampling", "trace"};
    if (kind == "reset") return {"physics", "run", "pump", "probe", "sweep"};
    if (kind == "analyze_decay") return {"input", "fit"};
    if (kind == "fit_line") return {"input", "fit"};
    if (kind == "fit_s11") return {"input", "resonator"};
    if (kind == "orbach") return {"physics", "input"};
    throw ValidationError("kind: unknown scenario kind '" + kind + "'");
}

// ------- Defaults and presets -------

inline json presets() {
    return {
        {"desk", {{"run", {{"ns", 6}, {"n_configs", 64}, {"n_detunings", 51}, {"n_pairs", 3000}}}}},
        {"paper", {{"run", {{"ns", 8}, {"n_configs", 500}, {"n_detunings", 51}, {"n_pairs", 18000}}}}},
    };
}

inline json default_section(const std::string& name, const std::string& kind) {
    if (name == "physics")
        return {{"b0_T", {0.0, 0.0, 0.44759123758413477}},
                {"gamma_par_GHz_per_T", 17.35},
                {"gamma_perp_GHz_per_T", 117.0},
                {"gamma_w_MHz_per_T", 1.77394},
                {"jz_e", -0.7},
                {"jz_g", 0.3},
                {"omega0_GHz", 7.839},
                {"gamma1_per_s", 5.0},
                {"gamma2_per_s", 1.0 / 30e-3},
                {"sigma_MHz", 8.0},
                {"abundance", 0.145},
                {"cutoff_nm", 1.2},
                {"overrides",
                 {{"TypeI", {{"a_e_kHz", 23.0}, {"a_g_kHz", 73.0}, {"b_kHz", 0.0}}},
                  {"TypeII", {{"a_kHz", 14.8}, {"b_kHz", 35.7}}}}}};
    if (name == "run") return json::object();  // preset supplies sizes; seed has no default
    if (name == "pump") return {{"offset_kHz", -795.0}, {"rabi_Hz", 10.0}, {"duration_s", 120.0}};
    if (name == "probe") {
        json p = {{"lo_kHz", -60.0}, {"hi_kHz", 60.0},          {"step_kHz", 0.5},
                  {"linewidth_kHz", 1.0}, {"distribution", "uniform"}, {"solver", "clustered"}};
        if (kind == "echo_accumulate") {
            p["node_spacing_kHz"] = 0.25;
            p.erase("distribution");
            p.erase("solver");
        }
        return p;
    }
    if (name == "pulse") return {{"rabi_MHz", 0.25}, {"tp_us", 1.0}, {"tau_us", 100.0}, {"wait_s", 0.2}, {"pi_half", true}};
    if (name == "sampling") return {{"half_width_MHz", 1.0}, {"nodes_per_period", 12}, {"taper", 0.3}, {"bin_Hz", 50.0}};
    if (name == "trace") return {{"t0_us", 0.0}, {"t1_us", 350.0}, {"dt_us", 0.25}};
    if (name == "sweep") return {{"range_MHz", 4.0}, {"steps", 8000}, {"rabi_Hz", 31.622776601683795}, {"dwell_ms", 1.25}, {"scans", 24}};
    if (name == "resonator")
        return {{"kappa_c_per_s", 3e7}, {"kappa_i_per_s", 1e7}, {"g_ens_MHz", 0.5}, {"linewidth_kHz", 1.0}, {"mode", "self_consistent"}};
    if (name == "input") return json::object();
    if (name == "fit") {
        if (kind == "fit_line") return {{"gamma_par_GHz_per_T", 17.35}};
        return {{"n_terms", 2}, {"reference_terms", 3}, {"weighting", "uniform"}};
    }
    return json::object();
}

// ------- Validation -------

inline const char* type_name(FieldType t) {
    switch (t) {
        case FieldType::Number: return "number";
        case FieldType::Integer: return "integer";
        case FieldType::Boolean: return "boolean";
        case FieldType::String: return "string";
        case FieldType::NumberArray: return "array of numbers";
        case FieldType::IntegerArray: return "array of integers";
        case FieldType::StringArray: return "array of strings";
        case FieldType::Object: return "object";
    }
    return "?";
}

inline bool has_type(const json& v, FieldType t) {
    auto all = [&](auto pred) {
        if (!v.is_array()) return false;
        for (const auto& e : v)
            if (!pred(e)) return false;
        return true;
    };
    switch (t) {
        case FieldType::Number: return v.is_number();
        case FieldType::Integer: return v.is_number_integer();
        case FieldType::Boolean: return v.is_boolean();
        case FieldType::String: return v.is_string();
        case FieldType::NumberArray: return all([](const json& e) { return e.is_number(); });
        case FieldType::IntegerArray: return all([](const json& e) { return e.is_number_integer(); });
        case FieldType::StringArray: return all([](const json& e) { return e.is_string(); });
        case FieldType::Object: return v.is_object();
    }
    return false;
}

inline const Section& section(const std::string& name) {
    for (const auto& s : sections())
        if (name == s.key) return s;
    throw ValidationError(name + ": unknown section");
}

inline void check_section(const json& j, const std::string& name) {
    if (!j.is_object()) throw ValidationError(name + ": expected object");
    const auto& sec = section(name);
    for (const auto& [key, value] : j.items()) {
        const Field* f = nullptr;
        for (const auto& cand : sec.fields)
            if (key == cand.key) f = &cand;
        if (!f) throw ValidationError(name + "." + key + ": unknown field");
        if (!has_type(value, f->type)) throw ValidationError(name + "." + key + ": expected " + type_name(f->type));
    }
}

inline void check_overrides(const json& ov) {
    for (const auto& [shell, entry] : ov.items()) {
        const std::string path = "physics.overrides." + shell;
        if (shell != "TypeI" && shell != "TypeII" && shell != "TypeIII")
            throw ValidationError(path + ": unknown shell (TypeI, TypeII or TypeIII)");
        if (!entry.is_object()) throw ValidationError(path + ": expected object");
        for (const auto& [key, value] : entry.items()) {
            if (key != "a_kHz" && key != "a_e_kHz" && key != "a_g_kHz" && key != "b_kHz")
                throw ValidationError(path + "." + key + ": unknown field");
            if (!value.is_number()) throw ValidationError(path + "." + key + ": expected number");
        }
        if (entry.contains("a_e_kHz") != entry.contains("a_g_kHz"))
            throw ValidationError(path + ": a_e_kHz and a_g_kHz go together");
    }
}

// Merges a user config over presets and defaults. Input paths become
// absolute; io is dropped because it names outputs, not the scenario.
inline json resolve_config(const json& raw, const fs::path& base_dir) {
    if (!raw.is_object()) throw ValidationError("config: expected a JSON object");
    if (!raw.contains("schema_version")) throw ValidationError("schema_version: required");
    if (!raw["schema_version"].is_number_integer() || raw["schema_version"].get<int>() != kSchemaVersion)
        throw ValidationError("schema_version: expected " + std::to_string(kSchemaVersion));
    if (!raw.contains("kind") || !raw["kind"].is_string()) throw ValidationError("kind: required string");
    const std::string kind = raw["kind"];
    const auto used = sections_for(kind);

    std::string preset = "desk";
    for (const auto& [key, value] : raw.items()) {
        if (key == "schema_version" || key == "kind" || key == "description") continue;
        if (key == "preset") {
            if (!value.is_string() || !presets().contains(value.get<std::string>()))
                throw ValidationError("preset: expected one of desk, paper");
            preset = value;
            continue;
        }
        bool known = false;
        for (const auto& s : sections()) known = known || key == s.key;
        if (!known) throw ValidationError(key + ": unknown section");
        check_section(value, key);
        if (key != "io" && std::find(used.begin(), used.end(), key) == used.end())
            throw ValidationError(key + ": section not used by kind '" + kind + "'");
    }

    json out = {{"schema_version", kSchemaVersion}, {"kind", kind}};
    const json pre = presets()[preset];
    for (const auto& name : used) {
        json s = default_section(name, kind);
        if (pre.contains(name)) s.update(pre[name]);
        if (raw.contains(name)) {
            // Overrides replace the default table as a whole.
            if (name == "physics" && raw[name].contains("overrides")) s.erase("overrides");
            s.update(raw[name]);
        }
        out[name] = s;
    }
    if (out.contains("physics")) check_overrides(out["physics"]["overrides"]);

    if (stochastic(kind)) {
        if (!out["run"].contains("seed")) throw ValidationError("run.seed: required for kind '" + kind + "'");
        if (out["run"]["seed"].get<std::int64_t>() < 0) throw ValidationError("run.seed: must be >= 0");
        if (kind == "echo_accumulate" || kind == "echo_probe") {
            if (!out["run"].contains("checkpoints")) {
                const long n = out["run"]["n_pairs"];
                out["run"]["checkpoints"] = kind == "echo_probe" ? json{0, n / 10, n / 2, n} : json{n};
            }
            long top = 0;
            for (const auto& c : out["run"]["checkpoints"]) top = std::max(top, c.get<long>());
            out["run"]["n_pairs"] = top;
        } else {
            out["run"].erase("n_pairs");
        }
    }
    if (out.contains("input")) {
        const bool needs_csv = kind != "shb";
        if (needs_csv && !out["input"].contains("csv")) throw ValidationError("input.csv: required for kind '" + kind + "'");
        for (auto& [key, value] : out["input"].items()) {
            fs::path p = value.get<std::string>();
            if (p.is_relative()) p = base_dir / p;
            if (!fs::exists(p)) throw ValidationError("input." + key + ": file not found: " + p.string());
            value = fs::weakly_canonical(p).string();
        }
    }
    return out;
}

// ------- Conversion to library types -------

inline double num(const json& s, const char* key) { return s.at(key).get<double>(); }

inline holeburn::Ensemble ensemble_from(const json& cfg) {
    const json& p = cfg["physics"];
    const json& r = cfg["run"];
    holeburn::Ensemble e;
    const auto& b = p["b0_T"];
    if (b.size() != 3) throw ValidationError("physics.b0_T: expected three components");
    e.spin.b0 = Eigen::Vector3d(b[0].get<double>(), b[1].get<double>(), b[2].get<double>());
    e.spin.gamma_par = ghz(num(p, "gamma_par_GHz_per_T"));
    e.spin.gamma_perp = ghz(num(p, "gamma_perp_GHz_per_T"));
    e.spin.gamma_w = mhz(num(p, "gamma_w_MHz_per_T"));
    e.spin.jz_e = num(p, "jz_e");
    e.spin.jz_g = num(p, "jz_g");
    e.spin.omega0 = ghz(num(p, "omega0_GHz"));
    e.spin.gamma1 = num(p, "gamma1_per_s");
    e.spin.gamma2 = num(p, "gamma2_per_s");
    e.spin.sigma = mhz(num(p, "sigma_MHz"));
    e.abundance = num(p, "abundance");
    e.lattice.cutoff_nm = num(p, "cutoff_nm");
    e.overrides.clear();
    for (const auto& [shell, ov] : p["overrides"].items()) {
        lattice::ShellOverride o;
        if (ov.contains("a_kHz")) o.a = khz(ov["a_kHz"].get<double>());
        if (ov.contains("a_e_kHz")) o.a_e = khz(ov["a_e_kHz"].get<double>());
        if (ov.contains("a_g_kHz")) o.a_g = khz(ov["a_g_kHz"].get<double>());
        if (ov.contains("b_kHz")) o.b = khz(ov["b_kHz"].get<double>());
        e.overrides[lattice::parse_shell(shell)] = o;
    }
    if (r.contains("ns")) e.ns = r["ns"];
    if (r.contains("n_configs")) e.n_configs = r["n_configs"];
    e.seed = r["seed"].get<std::uint64_t>();
    return e;
}

inline std::vector<double> probe_grid(const json& probe) {
    const double step = num(probe, "step_kHz");
    if (!(step > 0.0)) throw ValidationError("probe.step_kHz: must be > 0");
    if (!(num(probe, "hi_kHz") > num(probe, "lo_kHz"))) throw ValidationError("probe.hi_kHz: must exceed lo_kHz");
    return holeburn::uniform_grid(khz(num(probe, "lo_kHz")), khz(num(probe, "hi_kHz")), khz(step));
}

inline holeburn::ShbScenario shb_scenario(const json& cfg, int workers) {
    holeburn::ShbScenario sc;
    sc.ensemble = ensemble_from(cfg);
    const json& pump = cfg["pump"];
    sc.pump.omega_d = khz(num(pump, "offset_kHz"));
    sc.pump.omega_p = hz(num(pump, "rabi_Hz"));
    sc.pump.duration = num(pump, "duration_s");
    const json& probe = cfg["probe"];
    sc.grid = probe_grid(probe);
    sc.gamma_probe = khz(num(probe, "linewidth_kHz"));
    sc.n_detunings = cfg["run"]["n_detunings"];
    const std::string dist = probe["distribution"], solver = probe["solver"];
    if (dist == "uniform")
        sc.detuning = holeburn::DetuningKind::Uniform;
    else if (dist == "gaussian")
        sc.detuning = holeburn::DetuningKind::Gaussian;
    else
        throw ValidationError("probe.distribution: expected uniform or gaussian");
    if (solver == "clustered")
        sc.solver = holeburn::Solver::Clustered;
    else if (solver == "dense")
        sc.solver = holeburn::Solver::Dense;
    else
        throw ValidationError("probe.solver: expected clustered or dense");
    sc.workers = workers;
    return sc;
}

inline echo::PulseSpec pulse_from(const json& cfg) {
    const json& p = cfg["pulse"];
    echo::PulseSpec s;
    s.omega1 = mhz(num(p, "rabi_MHz"));
    s.tp = num(p, "tp_us") * 1e-6;
    s.tau = num(p, "tau_us") * 1e-6;
    s.wait = num(p, "wait_s");
    s.pi_half = p["pi_half"];
    s.n_pairs = cfg["run"]["n_pairs"];
    return s;
}

inline std::vector<long> checkpoints_from(const json& cfg) {
    std::vector<long> c;
    for (const auto& v : cfg["run"]["checkpoints"]) c.push_back(v.get<long>());
    return c;
}

inline analysis::ResonatorModel resonator_from(const json& r) {
    analysis::ResonatorModel m;
    m.kappa_c = num(r, "kappa_c_per_s");
    m.kappa_i = num(r, "kappa_i_per_s");
    m.g_ens = mhz(num(r, "g_ens_MHz"));
    m.gamma_h = khz(num(r, "linewidth_kHz"));
    return m;
}

// ------- Output formatting -------

// Shortest round-trip representation, so equal doubles give equal bytes.
inline std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : n_(header.size()) {
        for (std::size_t k = 0; k < header.size(); ++k) out_ << (k ? "," : "") << header[k];
        out_ << '\n';
    }
    void row(const std::vector<double>& v) {
        if (v.size() != n_) throw std::logic_error("CSV row width mismatch");
        for (std::size_t k = 0; k < v.size(); ++k) out_ << (k ? "," : "") << fmt(v[k]);
        out_ << '\n';
    }
    std::string str() const { return out_.str(); }

private:
    std::size_t n_;
    std::ostringstream out_;
};

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t h) {
    std::ostringstream o;
    o << std::hex << std::setw(16) << std::setfill('0') << h;
    return o.str();
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + p.string() + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json matrix_json(const Eigen::MatrixXd& m) {
    json a = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(finite_or_null(m(i, j)));
        a.push_back(row);
    }
    return a;
}

struct Artifact {
    std::string name;
    std::string content;
    bool csv = true;
};

struct RunOutput {
    std::vector<Artifact> artifacts;
};

// ------- Kinds -------

namespace detail {

inline void add_json(RunOutput& out, const std::string& name, const json& j) {
    out.artifacts.push_back({name, j.dump(2) + "\n", false});
}

inline void add_csv(RunOutput& out, const std::string& name, const CsvWriter& w) {
    out.artifacts.push_back({name, w.str(), true});
}

inline void sidecar(RunOutput& out, const json& cfg) {
    add_json(out, "scenario.json", {{"config", cfg}, {"seed", cfg["run"]["seed"]}});
}

inline RunOutput run_shb(const json& cfg, int workers) {
    const auto sc = shb_scenario(cfg, workers);
    const auto sp = holeburn::shb_spectrum(sc);
    CsvWriter w({"detuning_Hz", "ratio", "rho1", "rho0"});
    for (std::size_t q = 0; q < sc.grid.size(); ++q) w.row({to_hz(sc.grid[q]), sp.ratio.values[q], sp.rho1[q], sp.rho0[q]});
    RunOutput out;
    add_csv(out, "spectrum.csv", w);
    sidecar(out, cfg);
    return out;
}

inline RunOutput run_echo_accumulate(const json& cfg, int workers) {
    echo::GratingScenario sc;
    sc.ensemble = ensemble_from(cfg);
    sc.pulse = pulse_from(cfg);
    sc.checkpoints = checkpoints_from(cfg);
    sc.grid = probe_grid(cfg["probe"]);
    sc.gamma_probe = khz(num(cfg["probe"], "linewidth_kHz"));
    sc.node_spacing = khz(num(cfg["probe"], "node_spacing_kHz"));
    sc.workers = workers;
    const auto gs = echo::grating_spectra(sc);
    RunOutput out;
    json report = {{"checkpoints", json::array()}, {"expected_spacing_Hz", 1.0 / sc.pulse.tau}};
    for (std::size_t c = 0; c < gs.checkpoints.size(); ++c) {
        CsvWriter w({"detuning_Hz", "ratio", "rho1", "rho0"});
        for (std::size_t q = 0; q < gs.grid.size(); ++q)
            w.row({to_hz(gs.grid[q]), gs.ratio[c][q], gs.ratio[c][q] * gs.rho0[q], gs.rho0[q]});
        add_csv(out, "grating_N" + std::to_string(gs.checkpoints[c]) + ".csv", w);
        json entry = {{"n_pairs", gs.checkpoints[c]}};
        try {
            entry["antihole_spacing_Hz"] = to_hz(echo::antihole_spacing(gs.grid, gs.ratio[c]));
        } catch (const NumericalError&) {
            entry["antihole_spacing_Hz"] = nullptr;
        }
        report["checkpoints"].push_back(entry);
    }
    const auto power = echo::pair_power_spectrum(sc.pulse.tau, sc.pulse.tp, gs.grid);
    CsvWriter pw({"detuning_Hz", "power"});
    for (std::size_t q = 0; q < gs.grid.size(); ++q) pw.row({to_hz(gs.grid[q]), power[q]});
    add_csv(out, "power_spectrum.csv", pw);
    add_json(out, "report.json", report);
    sidecar(out, cfg);
    return out;
}

inline RunOutput run_echo_probe(const json& cfg, int workers) {
    echo::EchoScenario sc;
    sc.ensemble = ensemble_from(cfg);
    sc.pulse = pulse_from(cfg);
    sc.checkpoints = checkpoints_from(cfg);
    const json& s = cfg["sampling"];
    sc.window_half = mhz(num(s, "half_width_MHz"));
    sc.nodes_per_period = s["nodes_per_period"];
    sc.taper = num(s, "taper");
    sc.bin = hz(num(s, "bin_Hz"));
    sc.workers = workers;
    const json& tr = cfg["trace"];
    if (!(num(tr, "dt_us") > 0.0) || !(num(tr, "t1_us") > num(tr, "t0_us")))
        throw ValidationError("trace: need dt_us > 0 and t1_us > t0_us");
    const auto time = echo::uniform_times(num(tr, "t0_us") * 1e-6, num(tr, "t1_us") * 1e-6, num(tr, "dt_us") * 1e-6);

    const auto spectra = echo::echo_spectra(sc);
    RunOutput out;
    json report = {{"checkpoints", json::array()}};
    const double tau = sc.pulse.tau;
    for (std::size_t c = 0; c < spectra.checkpoints.size(); ++c) {
        const auto trace = echo::probe_trace(spectra, c, time);
        CsvWriter w({"t_s", "re", "im", "abs"});
        for (std::size_t k = 0; k < time.size(); ++k) {
            const auto a = trace.amplitude[k];
            w.row({time[k], a.real(), a.imag(), std::abs(a)});
        }
        add_csv(out, "echo_N" + std::to_string(spectra.checkpoints[c]) + ".csv", w);
        json echoes = json::array();
        for (int n = 1; n <= 3; ++n) {
            if (n * tau + 0.1 * tau > time.back() || n * tau - 0.1 * tau < time.front()) continue;
            const auto pk = echo::find_peak(trace, n * tau, 0.1 * tau);
            echoes.push_back({{"n", n}, {"time_s", pk.time}, {"abs", std::abs(pk.amplitude)}, {"phase_rad", std::arg(pk.amplitude)}});
        }
        report["checkpoints"].push_back({{"n_pairs", spectra.checkpoints[c]}, {"echoes", echoes}});
    }
    if (spectra.checkpoints.front() == 0) {
        const auto b = echo::echo_buildup(spectra, tau);
        CsvWriter w({"n_pairs", "first_re", "first_im", "first_abs", "second_re", "second_im", "second_abs"});
        for (std::size_t c = 0; c < b.n.size(); ++c)
            w.row({static_cast<double>(b.n[c]), b.first[c].real(), b.first[c].imag(), std::abs(b.first[c]), b.second[c].real(),
                   b.second[c].imag(), std::abs(b.second[c])});
        add_csv(out, "buildup.csv", w);
    }
    add_json(out, "report.json", report);
    sidecar(out, cfg);
    return out;
}

inline RunOutput run_reset(const json& cfg, int workers) {
    const auto sc = shb_scenario(cfg, workers);
    const json& s = cfg["sweep"];
    holeburn::SweepSpec sw;
    sw.range = mhz(num(s, "range_MHz"));
    sw.steps = s["steps"];
    sw.omega_p = hz(num(s, "rabi_Hz"));
    sw.dwell = num(s, "dwell_ms") * 1e-3;
    sw.scans = s["scans"];
    const auto rep = holeburn::simulate_reset(sc, sw);
    CsvWriter w({"detuning_Hz", "ratio_burned", "ratio_reset"});
    for (std::size_t q = 0; q < rep.freq.size(); ++q) w.row({to_hz(rep.freq[q]), rep.ratio_burned[q], rep.ratio_reset[q]});
    RunOutput out;
    add_csv(out, "reset.csv", w);
    add_json(out, "report.json", {{"max_deviation_burned", rep.max_dev_burned}, {"max_deviation_reset", rep.max_dev_reset}});
    sidecar(out, cfg);
    return out;
}

inline json decay_json(const analysis::DecayFit& f, double time_unit) {
    json r = {{"n_terms", f.n_terms}, {"amplitudes", f.amplitudes}, {"residual_rms", f.residual_rms}, {"degenerate", f.degenerate}};
    std::vector<double> taus;
    for (double t : f.taus) taus.push_back(t / time_unit);
    r["taus"] = taus;
    Eigen::MatrixXd c = f.covariance;
    for (int k = 0; k < f.n_terms; ++k) {
        c.row(f.n_terms + k) /= time_unit;
        c.col(f.n_terms + k) /= time_unit;
    }
    r["covariance"] = matrix_json(c);
    return r;
}

inline std::vector<double> relative_weights(const std::vector<double>& y) {
    std::vector<double> w;
    for (double v : y) {
        if (v == 0.0) throw ValidationError("fit.weighting: relative weights need nonzero amplitudes");
        w.push_back(1.0 / (v * v));
    }
    return w;
}

inline RunOutput run_analyze_decay(const json& cfg) {
    const auto series = analysis::load_decay_series(cfg["input"]["csv"]);
    const json& fit = cfg["fit"];
    const std::string weighting = fit["weighting"];
    if (weighting != "uniform" && weighting != "relative") throw ValidationError("fit.weighting: expected uniform or relative");
    json report;
    std::vector<double> y = series.amplitude;
    std::vector<double> rescaled;
    if (cfg["input"].contains("reference_csv")) {
        const auto ref = analysis::read_csv(cfg["input"]["reference_csv"]);
        if (series.n_pulses.empty()) throw ValidationError("input.csv: rescaling needs an n_pulses column");
        const auto ref_fit = analysis::fit_multi_exponential(ref.column("n_pulses"), ref.column("amplitude"), fit["reference_terms"]);
        const auto r = analysis::rescale_probe_decay(series.amplitude, series.n_pulses, ref_fit);
        rescaled = r.values;
        y = rescaled;
        report["reference"] = decay_json(ref_fit, 1.0);
        report["reference"]["time_unit"] = "pulses";
        report["reference_extrapolated"] = r.extrapolated;
    }
    const auto w = weighting == "relative" ? relative_weights(y) : std::vector<double>{};
    const auto f = analysis::fit_multi_exponential(series.t, y, fit["n_terms"], w);
    report["fit"] = decay_json(f, 3600.0);
    report["fit"]["time_unit"] = "h";
    std::vector<std::string> header = {"t_s", "amplitude"};
    if (!rescaled.empty()) header.push_back("rescaled");
    header.push_back("model");
    CsvWriter csv(header);
    for (std::size_t k = 0; k < series.t.size(); ++k) {
        std::vector<double> row = {series.t[k], series.amplitude[k]};
        if (!rescaled.empty()) row.push_back(rescaled[k]);
        row.push_back(f(series.t[k]));
        csv.row(row);
    }
    RunOutput out;
    add_csv(out, "fit.csv", csv);
    add_json(out, "report.json", report);
    return out;
}

inline RunOutput run_fit_line(const json& cfg) {
    const auto scan = analysis::load_line_scan(cfg["input"]["csv"]);
    const auto f = analysis::fit_line(scan, ghz(num(cfg["fit"], "gamma_par_GHz_per_T")));
    json report = {{"center_T", f.center_t},        {"fwhm_mT", f.fwhm_t * 1e3},
                   {"fwhm_MHz", f.fwhm_hz * 1e-6},  {"amplitude_per_s", f.amplitude},
                   {"baseline_per_s", f.baseline},  {"parameters", {"baseline_per_s", "amplitude_per_s", "center_T", "fwhm_T"}},
                   {"covariance", matrix_json(f.covariance)}};
    CsvWriter w({"B0_T", "kappa_i", "model"});
    for (std::size_t k = 0; k < scan.b0.size(); ++k)
        w.row({scan.b0[k], scan.kappa_i[k], analysis::lorentz_line(scan.b0[k], f.baseline, f.amplitude, f.center_t, f.fwhm_t)});
    RunOutput out;
    add_csv(out, "fit.csv", w);
    add_json(out, "report.json", report);
    return out;
}

inline RunOutput run_fit_s11(const json& cfg) {
    const auto table = analysis::read_csv(cfg["input"]["csv"]);
    const auto m = resonator_from(cfg["resonator"]);
    const std::string mode = cfg["resonator"]["mode"];
    std::vector<double> freq;
    for (double f : table.column("detuning_Hz")) freq.push_back(hz(f));
    auto invert = [&](const std::vector<double>& s) {
        if (mode == "constant_baseline") return analysis::constant_baseline_density_from_s11(s, m);
        analysis::InversionOptions opt;
        if (mode == "first_order")
            opt.self_consistent = false;
        else if (mode != "self_consistent")
            throw ValidationError("resonator.mode: expected self_consistent, first_order or constant_baseline");
        return analysis::density_from_s11(s, freq, m, opt);
    };
    const auto rho = invert(table.column("s11_sq"));
    const bool ref = table.columns.count("s11_sq_ref") > 0;
    std::vector<double> rho_ref, ratio;
    if (ref) {
        rho_ref = invert(table.column("s11_sq_ref"));
        ratio = analysis::density_ratio(rho, rho_ref);
    }
    std::vector<std::string> header = {"detuning_Hz", "rho"};
    if (ref) header.insert(header.end(), {"rho_ref", "ratio"});
    CsvWriter w(header);
    for (std::size_t k = 0; k < freq.size(); ++k) {
        std::vector<double> row = {to_hz(freq[k]), rho[k]};
        if (ref) row.insert(row.end(), {rho_ref[k], ratio[k]});
        w.row(row);
    }
    RunOutput out;
    add_csv(out, "density.csv", w);
    return out;
}

inline RunOutput run_orbach(const json& cfg) {
    const auto series = analysis::load_temperature_series(cfg["input"]["csv"]);
    const json& p = cfg["physics"];
    const double omega0 = ghz(num(p, "omega0_GHz"));
    const double gamma1 = num(p, "gamma1_per_s");
    const auto& b = p["b0_T"];
    const double bnorm = Eigen::Vector3d(b[0].get<double>(), b[1].get<double>(), b[2].get<double>()).norm();
    const double omega_I = mhz(num(p, "gamma_w_MHz_per_T")) * bnorm;
    const auto f = analysis::fit_orbach(series.T, series.tau, omega0, gamma1, omega_I);
    std::vector<double> T, rate;
    for (std::size_t k = 0; k < series.T.size(); ++k)
        if (series.T[k] > 0.0) {
            T.push_back(series.T[k]);
            rate.push_back(1.0 / series.tau[k]);
        }
    json report = {{"gamma_1x_per_s", f.gamma_1x},
                   {"b_coupling_kHz", to_khz(f.b_coupling)},
                   {"residual_log_rms", f.residual_log_rms},
                   {"zero_temperature_points", f.zero_temperature},
                   {"boltzmann_temperature_K", analysis::boltzmann_temperature(omega0)}};
    if (T.size() >= 2) {
        const auto r = analysis::raman_check(T, rate);
        report["raman"] = {{"exponent", r.exponent}, {"prefactor", r.prefactor}, {"residual_log_rms", r.residual}};
    }
    CsvWriter w({"T_K", "tau_s", "model_tau_s"});
    for (std::size_t k = 0; k < series.T.size(); ++k) {
        const double rm = analysis::orbach_rate(series.T[k], f.gamma_1x, omega0);
        w.row({series.T[k], series.tau[k], rm > 0.0 ? 1.0 / rm : std::numeric_limits<double>::infinity()});
    }
    RunOutput out;
    add_csv(out, "fit.csv", w);
    add_json(out, "report.json", report);
    return out;
}

}  // namespace detail

inline RunOutput execute(const json& cfg, int workers) {
    const std::string kind = cfg["kind"];
    if (kind == "shb") return detail::run_shb(cfg, workers);
    if (kind == "echo_accumulate") return detail::run_echo_accumulate(cfg, workers);
    if (kind == "echo_probe") return detail::run_echo_probe(cfg, workers);
    if (kind == "reset") return detail::run_reset(cfg, workers);
    if (kind == "analyze_decay") return detail::run_analyze_decay(cfg);
    if (kind == "fit_line") return detail::run_fit_line(cfg);
    if (kind == "fit_s11") return detail::run_fit_s11(cfg);
    if (kind == "orbach") return detail::run_orbach(cfg);
    throw ValidationError("kind: unknown scenario kind '" + kind + "'");
}

// ------- Manifest and atomic output -------

inline std::string config_hash(const json& cfg) { return "fnv1a64:" + hex64(fnv1a64(cfg.dump())); }

inline json manifest(const json& cfg, const RunOutput& out) {
    json m = {{"schema_version", kSchemaVersion}, {"tool", "shbsim"},         {"version", SHB_VERSION},
              {"kind", cfg["kind"]},              {"config_hash", config_hash(cfg)}, {"config", cfg}};
    m["seed"] = cfg.contains("run") && cfg["run"].contains("seed") ? cfg["run"]["seed"] : json(nullptr);
    json inputs = json::array();
    if (cfg.contains("input"))
        for (const auto& [key, path] : cfg["input"].items())
            inputs.push_back({{"field", key}, {"path", path}, {"fnv1a64", hex64(fnv1a64(read_file(path.get<std::string>())))}});
    m["inputs"] = inputs;
    json outputs = json::array();
    for (const auto& a : out.artifacts)
        outputs.push_back({{"file", a.name}, {"bytes", a.content.size()}, {"fnv1a64", hex64(fnv1a64(a.content))}});
    m["outputs"] = outputs;
    return m;
}

// Each file goes to a hidden temp name first, then all are renamed; the
// manifest is renamed last so a directory with a manifest is complete.
inline void write_outputs(const fs::path& dir, const std::vector<Artifact>& files) {
    fs::create_directories(dir);
    const std::string tag = ".tmp." + std::to_string(::getpid());
    std::vector<fs::path> temps;
    try {
        for (const auto& f : files) {
            const fs::path tmp = dir / ("." + f.name + tag);
            temps.push_back(tmp);
            std::ofstream o(tmp, std::ios::binary | std::ios::trunc);
            o << f.content;
            o.close();
            if (!o) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        }
        for (std::size_t k = 0; k < files.size(); ++k) fs::rename(temps[k], dir / files[k].name);
    } catch (...) {
        std::error_code ec;
        for (const auto& t : temps) fs::remove(t, ec);
        throw;
    }
}

struct RunRequest {
    fs::path config;
    std::optional<fs::path> out_dir;
    std::optional<int> workers;
};

inline json load_json(const fs::path& p) {
    const std::string text = read_file(p);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(p.string() + ": " + e.what());
    }
}

// Accepts a scenario config or a manifest written by an earlier run.
inline int run(const RunRequest& req, std::ostream& log = std::cerr) {
    try {
        json raw = load_json(req.config);
        const fs::path base = fs::absolute(req.config).parent_path();
        std::optional<fs::path> out_dir = req.out_dir;
        if (raw.contains("tool") && raw.contains("config")) {
            if (!out_dir) out_dir = base;
            raw = raw["config"];
        }
        const json cfg = resolve_config(raw, base);
        std::vector<std::string> formats = {"csv", "json"};
        if (raw.contains("io")) {
            if (!out_dir && raw["io"].contains("out_dir")) out_dir = base / raw["io"]["out_dir"].get<std::string>();
            if (raw["io"].contains("formats")) {
                formats = raw["io"]["formats"].get<std::vector<std::string>>();
                for (const auto& f : formats)
                    if (f != "csv" && f != "json") throw ValidationError("io.formats: unknown format '" + f + "'");
            }
        }
        if (!out_dir) throw ValidationError("io.out_dir: required (or pass --out)");
        const int workers = req.workers ? *req.workers : default_workers();
        if (workers < 1) throw ValidationError("--workers: must be >= 1");

        auto result = execute(cfg, workers);
        RunOutput kept;
        for (auto& a : result.artifacts) {
            const bool want = a.csv ? std::count(formats.begin(), formats.end(), "csv") : std::count(formats.begin(), formats.end(), "json");
            if (want) kept.artifacts.push_back(std::move(a));
        }
        kept.artifacts.push_back({"manifest.json", manifest(cfg, kept).dump(2) + "\n", false});
        write_outputs(*out_dir, kept.artifacts);
        return kOk;
    } catch (const ValidationError& e) {
        log << "shbsim: validation error: " << e.what() << '\n';
        return kInvalid;
    } catch (const json::exception& e) {
        log << "shbsim: validation error: " << e.what() << '\n';
        return kInvalid;
    } catch (const NumericalError& e) {
        log << "shbsim: numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        log << "shbsim: failure: " << e.what() << '\n';
        return kNumerical;
    }
}

// ------- Compare -------

struct Deviation {
    std::string file;
    std::string column;
    double max_abs = 0.0;
    double max_rel = 0.0;
};

namespace detail {

inline void flatten(const json& j, const std::string& path, std::map<std::string, json>& out) {
    if (j.is_object())
        for (const auto& [k, v] : j.items()) flatten(v, path.empty() ? k : path + "." + k, out);
    else if (j.is_array())
        for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], path + "[" + std::to_string(i) + "]", out);
    else
        out[path] = j;
}

inline void accumulate(Deviation& d, double a, double b) {
    const double diff = std::abs(a - b);
    if (std::isnan(a) != std::isnan(b)) {
        d.max_abs = d.max_rel = std::numeric_limits<double>::infinity();
        return;
    }
    if (std::isnan(a) || a == b) return;
    const double scale = std::max(std::abs(a), std::abs(b));
    d.max_abs = std::max(d.max_abs, diff);
    d.max_rel = std::max(d.max_rel, scale > 0.0 ? diff / scale : 0.0);
}

inline constexpr double kMismatch = std::numeric_limits<double>::infinity();

inline std::vector<Deviation> compare_csv(const std::string& name, const std::string& a, const std::string& b) {
    std::istringstream ia(a), ib(b);
    const auto ta = analysis::parse_csv(ia, name), tb = analysis::parse_csv(ib, name);
    std::vector<Deviation> out;
    for (const auto& h : ta.header) {
        Deviation d{name, h};
        const auto itb = tb.columns.find(h);
        const auto& ca = ta.column(h);
        if (itb == tb.columns.end() || itb->second.size() != ca.size()) {
            d.max_abs = d.max_rel = kMismatch;
        } else {
            for (std::size_t k = 0; k < ca.size(); ++k) accumulate(d, ca[k], itb->second[k]);
        }
        out.push_back(d);
    }
    for (const auto& h : tb.header)
        if (!ta.columns.count(h)) out.push_back({name, h, kMismatch, kMismatch});
    return out;
}

inline std::vector<Deviation> compare_json(const std::string& name, const std::string& a, const std::string& b) {
    std::map<std::string, json> fa, fb;
    flatten(json::parse(a), "", fa);
    flatten(json::parse(b), "", fb);
    std::vector<Deviation> out;
    for (const auto& [path, va] : fa) {
        Deviation d{name, path};
        const auto it = fb.find(path);
        if (it == fb.end()) {
            d.max_abs = d.max_rel = kMismatch;
        } else if (va.is_number() && it->second.is_number()) {
            accumulate(d, va.get<double>(), it->second.get<double>());
        } else if (va != it->second) {
            d.max_abs = d.max_rel = kMismatch;
        }
        out.push_back(d);
    }
    for (const auto& [path, vb] : fb)
        if (!fa.count(path)) out.push_back({name, path, kMismatch, kMismatch});
    return out;
}

}  // namespace detail

struct CompareResult {
    std::vector<Deviation> deviations;
    bool within = true;
};

// A column passes when its max abs deviation is <= abs_tol or its max rel
// deviation is <= rel_tol.
inline CompareResult compare_runs(const fs::path& a, const fs::path& b, double abs_tol = 0.0, double rel_tol = 0.0) {
    const fs::path ma = a / "manifest.json", mb = b / "manifest.json";
    if (!fs::exists(ma)) throw ValidationError("no manifest in '" + a.string() + "'");
    if (!fs::exists(mb)) throw ValidationError("no manifest in '" + b.string() + "'");
    const json ja = load_json(ma), jb = load_json(mb);
    std::vector<std::string> files_a, files_b;
    for (const auto& o : ja.at("outputs")) files_a.push_back(o.at("file"));
    for (const auto& o : jb.at("outputs")) files_b.push_back(o.at("file"));
    CompareResult r;
    for (const auto& f : files_a) {
        if (std::find(files_b.begin(), files_b.end(), f) == files_b.end() || !fs::exists(b / f)) {
            r.deviations.push_back({f, "*", detail::kMismatch, detail::kMismatch});
            continue;
        }
        const std::string ca = read_file(a / f), cb = read_file(b / f);
        const bool is_csv = fs::path(f).extension() == ".csv";
        auto d = is_csv ? detail::compare_csv(f, ca, cb) : detail::compare_json(f, ca, cb);
        r.deviations.insert(r.deviations.end(), d.begin(), d.end());
    }
    for (const auto& f : files_b)
        if (std::find(files_a.begin(), files_a.end(), f) == files_a.end()) r.deviations.push_back({f, "*", detail::kMismatch, detail::kMismatch});
    for (const auto& d : r.deviations)
        if (!(d.max_abs <= abs_tol || d.max_rel <= rel_tol)) r.within = false;
    return r;
}

inline json compare_report(const CompareResult& r, double abs_tol, double rel_tol) {
    json cols = json::array();
    for (const auto& d : r.deviations)
        cols.push_back({{"file", d.file}, {"column", d.column}, {"max_abs", finite_or_null(d.max_abs)}, {"max_rel", finite_or_null(d.max_rel)}});
    return {{"abs_tol", abs_tol}, {"rel_tol", rel_tol}, {"within_tolerance", r.within}, {"columns", cols}};
}

// ------- Schema -------

inline json schema() {
    auto field_schema = [](const Field& f) -> json {
        json s;
        switch (f.type) {
            case FieldType::Number: s = {{"type", "number"}}; break;
            case FieldType::Integer: s = {{"type", "integer"}}; break;
            case FieldType::Boolean: s = {{"type", "boolean"}}; break;
            case FieldType::String: s = {{"type", "string"}}; break;
            case FieldType::NumberArray: s = {{"type", "array"}, {"items", {{"type", "number"}}}}; break;
            case FieldType::IntegerArray: s = {{"type", "array"}, {"items", {{"type", "integer"}}}}; break;
            case FieldType::StringArray: s = {{"type", "array"}, {"items", {{"type", "string"}}}}; break;
            case FieldType::Object: s = {{"type", "object"}}; break;
        }
        s["description"] = f.description;
        return s;
    };
    json props = {{"schema_version", {{"const", kSchemaVersion}}},
                  {"kind", {{"enum", kinds()}}},
                  {"preset", {{"enum", {"desk", "paper"}}}},
                  {"description", {{"type", "string"}}}};
    for (const auto& sec : sections()) {
        json p = json::object();
        for (const auto& f : sec.fields) p[f.key] = field_schema(f);
        props[sec.key] = {{"type", "object"}, {"properties", p}, {"additionalProperties", false}};
    }
    json all_of = json::array();
    for (const auto& k : kinds()) {
        json then = {{"properties", json::object()}};
        if (stochastic(k)) then = {{"required", {"run"}}, {"properties", {{"run", {{"required", {"seed"}}}}}}};
        else if (k != "shb") then = {{"required", {"input"}}, {"properties", {{"input", {{"required", {"csv"}}}}}}};
        all_of.push_back({{"if", {{"properties", {{"kind", {{"const", k}}}}}}}, {"then", then}});
    }
    return {{"$schema", "https://json-schema.org/draft/2020-12/schema"},
            {"title", "shbsim scenario"},
            {"type", "object"},
            {"required", {"schema_version", "kind"}},
            {"properties", props},
            {"additionalProperties", false},
            {"allOf", all_of}};
}

}  // namespace shb::cli
