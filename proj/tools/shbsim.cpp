// shbsim - run, compare and describe hole-burning / echo scenarios
#include <iostream>

#include "CLI11.hpp"
#include "shb/cli.hpp"

namespace cli = shb::cli;

int main(int argc, char** argv) {
    CLI::App app{"Spectral hole burning and spin-echo simulator"};
    app.set_version_flag("--version", SHB_VERSION);
    app.require_subcommand(1);

    cli::RunRequest req;
    std::string config, out;
    int workers = 0;
    auto* run = app.add_subcommand("run", "run a scenario config (or re-run a manifest)");
    run->add_option("config", config, "scenario JSON")->required();
    run->add_option("--out", out, "output directory (overrides io.out_dir)");
    run->add_option("--workers", workers, "worker threads (default: SHB_WORKERS, else all cores)")->check(CLI::PositiveNumber);

    std::string dir_a, dir_b;
    double abs_tol = 0.0, rel_tol = 0.0;
    auto* compare = app.add_subcommand("compare", "compare the outputs of two runs");
    compare->add_option("dir_a", dir_a, "first run directory")->required();
    compare->add_option("dir_b", dir_b, "second run directory")->required();
    compare->add_option("--abs-tol", abs_tol, "absolute tolerance per column");
    compare->add_option("--rel-tol", rel_tol, "relative tolerance per column");

    auto* schema = app.add_subcommand("schema", "print the scenario JSON schema");
    auto* presets = app.add_subcommand("presets", "print the named run presets");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : cli::kInvalid;
    }

    if (*run) {
        req.config = config;
        if (!out.empty()) req.out_dir = out;
        if (workers > 0) req.workers = workers;
        return cli::run(req);
    }
    if (*compare) {
        try {
            const auto r = cli::compare_runs(dir_a, dir_b, abs_tol, rel_tol);
            std::cout << cli::compare_report(r, abs_tol, rel_tol).dump(2) << '\n';
            return r.within ? cli::kOk : cli::kDeviation;
        } catch (const std::exception& e) {
            std::cerr << "shbsim: compare: " << e.what() << '\n';
            return cli::kInvalid;
        }
    }
    if (*schema) std::cout << cli::schema().dump(2) << '\n';
    if (*presets) std::cout << cli::presets().dump(2) << '\n';
    return cli::kOk;
}
