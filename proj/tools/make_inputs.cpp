// make_inputs - write the synthetic CSV inputs used by scenarios/
//
//   make_inputs <dir>
//
// decay.csv        biexponential hole decay (8.4 h, 841.9 h), 5% noise
// decay_probe.csv  the same decay with probe-induced loss and pulse counts
// probe_reference.csv
//                  that loss against the pulse count alone
// line_scan.csv    Lorentzian kappa_i(B0), 0.62 mT wide
// s11.csv          |S11|^2 of a thermal line and of the same line with a hole
// orbach.csv       Orbach lifetimes from 50 to 220 mK, 5% noise
#include <filesystem>
#include <fstream>
#include <iostream>

#include "shb/analysis.hpp"
#include "shb/cli.hpp"

using namespace shb;
namespace fs = std::filesystem;

namespace {

void save(const fs::path& p, const cli::CsvWriter& w) {
    std::ofstream(p, std::ios::binary) << w.str();
    std::cout << p.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: make_inputs <dir>\n";
        return 2;
    }
    const fs::path dir = argv[1];
    fs::create_directories(dir);
    const double hour = 3600.0;

    {
        Rng rng(41);
        cli::CsvWriter w({"t_s", "amplitude"});
        for (int k = 0; k < 40; ++k) {
            const double t = 0.5 * hour * std::pow(6000.0, k / 39.0);
            const double y = 0.5 * std::exp(-t / (8.4 * hour)) + 0.5 * std::exp(-t / (841.9 * hour));
            w.row({t, y * (1.0 + 0.05 * rng.normal())});
        }
        save(dir / "decay.csv", w);
    }
    {
        // Probe-induced loss measured against the pulse count alone, and a
        // decay series that carries it.
        auto loss = [](double n) { return 0.6 * std::exp(-n / 200.0) + 0.3 * std::exp(-n / 2000.0) + 0.1 * std::exp(-n / 3e4); };
        cli::CsvWriter r({"n_pulses", "amplitude"});
        for (int k = 0; k <= 60; ++k) r.row({100.0 * k, loss(100.0 * k)});
        save(dir / "probe_reference.csv", r);
        cli::CsvWriter w({"t_s", "amplitude", "n_pulses"});
        for (int k = 0; k < 25; ++k) {
            const double t = 10.0 * hour * k, n = 200.0 * k;
            const double y = 0.5 * std::exp(-t / (8.4 * hour)) + 0.5 * std::exp(-t / (841.9 * hour));
            w.row({t, y * loss(n) / loss(0.0), n});
        }
        save(dir / "decay_probe.csv", w);
    }
    {
        cli::CsvWriter w({"B0_T", "kappa_i"});
        for (int k = 0; k <= 120; ++k) {
            const double b = 0.4518 - 4e-3 + 8e-3 * k / 120.0;
            w.row({b, analysis::lorentz_line(b, 1e6, 4e6, 0.4518, 0.62e-3)});
        }
        save(dir / "line_scan.csv", w);
    }
    {
        analysis::ResonatorModel m;
        m.g_ens = khz(10.0);
        holeburn::SpectralDensity ref, burned;
        for (int k = -300; k <= 300; ++k) {
            const double f = khz(2.0 * k);
            const double line = 1e-7 * std::exp(-0.5 * std::pow(f / khz(60.0), 2));
            ref.freq.push_back(f);
            burned.freq.push_back(f);
            ref.values.push_back(line);
            burned.values.push_back(line * (1.0 - 0.3 * std::exp(-std::pow(f / khz(5.0), 2))));
        }
        const auto s1 = analysis::s11_squared(m, burned, ref.freq), s0 = analysis::s11_squared(m, ref, ref.freq);
        cli::CsvWriter w({"detuning_Hz", "s11_sq", "s11_sq_ref"});
        for (std::size_t k = 0; k < ref.freq.size(); ++k) w.row({to_hz(ref.freq[k]), s1[k], s0[k]});
        save(dir / "s11.csv", w);
    }
    {
        Rng rng(43);
        cli::CsvWriter w({"T_K", "tau_s"});
        for (int k = 0; k < 18; ++k) {
            const double T = 0.05 + 0.01 * k;
            w.row({T, 1.0 / analysis::orbach_rate(T, 0.03, ghz(7.839)) * (1.0 + 0.05 * rng.normal())});
        }
        save(dir / "orbach.csv", w);
    }
    return 0;
}
