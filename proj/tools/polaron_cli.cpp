#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "polaron/cli.hpp"

using namespace polaron;

namespace {

struct Flags {
    std::string config;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
};

const char* describe(Study s) {
    switch (s) {
        case Study::scattering_rate: return "torus vs free-space scattering length under rescaling";
        case Study::renorm_flow: return "e_0 - E_Lambda and gaps over a cutoff grid";
        case Study::spectrum_gaps: return "lowest levels per total-momentum sector";
        case Study::weyl_identity: return "residual of the Weyl-dressed Hamiltonian";
        case Study::log_term: return "dyadic slope of the divergent double sum";
        case Study::lhy: return "LHY-type sum and its dyadic increments";
        case Study::expansion: return "ground-state energy expansion term by term";
    }
    return "";
}

int run(Study study, const Flags& f) {
    const StudyConfig sc = make_config(study, load_config_file(f.config), f.out, f.seed, f.workers);
    const StudyResult r = run_study(sc);
    std::size_t failed = 0;
    for (const auto& p : r.manifest["points"])
        if (p["status"] != "ok") ++failed;
    std::fprintf(stderr, "%s: %zu points, %zu failed -> %s\n", study_info(study).name,
                 r.manifest["points"].size(), failed, r.csv_path.string().c_str());
    return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bose polaron numerics: sweeps over scattering, renormalization and spectral studies"};
    app.require_subcommand(1);
    app.set_version_flag("--version", version);
    Flags flags;
    std::optional<Study> chosen;
    for (const auto& s : study_names) {
        auto* sub = app.add_subcommand(s.subcommand, describe(s.study));
        sub->add_option("--config", flags.config, "JSON study config or a previous manifest")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--out", flags.out, "output directory (overrides the config)");
        sub->add_option("--seed", flags.seed, "Lanczos seed (overrides the config)");
        sub->add_option("--workers", flags.workers, "worker threads (overrides the config)")
            ->check(CLI::PositiveNumber);
        const Study st = s.study;
        sub->callback([&chosen, st] { chosen = st; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_usage;
    }
    try {
        return run(*chosen, flags);
    } catch (const usage_error& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return exit_usage;
    } catch (const contract_violation& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return exit_usage;
    } catch (const capacity_error& e) {
        std::cerr << "capacity: " << e.what() << '\n';
        return exit_capacity;
    } catch (const accuracy_error& e) {
        std::cerr << "accuracy: " << e.what() << '\n';
        return exit_accuracy;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_accuracy;
    }
}
