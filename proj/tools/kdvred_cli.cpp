#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "kdvred/continuation.hpp"
#include "kdvred/error.hpp"
#include "kdvred/harness/config.hpp"
#include "kdvred/harness/experiments.hpp"

namespace {

constexpr int exit_config = 2;
constexpr int exit_numerical = 3;

struct Options {
    std::optional<std::string> config;
    std::optional<std::string> preset;
    std::optional<int> branch;
    std::string out = "kdvred_out";
};

void add_common(CLI::App* cmd, Options& o, bool with_branch) {
    cmd->add_option("--config", o.config, "INI configuration file (overrides the preset)");
    cmd->add_option("--preset", o.preset, "built-in configuration")->check(CLI::IsMember({"paper-sec5", "desk"}));
    if (with_branch) cmd->add_option("--branch", o.branch, "signed branch index, e.g. 2 or -1");
    cmd->add_option("--out", o.out, "output directory")->capture_default_str();
}

kdvred::harness::RunConfig resolve(const Options& o) {
    auto cfg = kdvred::harness::load_config(o.config, o.preset);
    if (o.branch) {
        cfg.run.branches = {*o.branch};
        cfg.validate();
    }
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    using namespace kdvred::harness;
    CLI::App app{"Multi-species NLS sound waves and their KdV reduction"};
    app.require_subcommand(1);

    Options o;
    auto* spectrum = app.add_subcommand("spectrum", "sound speeds, positivity and degeneracy");
    add_common(spectrum, o, false);
    auto* coeffs = app.add_subcommand("coeffs", "KdV coefficients of every branch (or of --branch)");
    add_common(coeffs, o, true);
    auto* simulate = app.add_subcommand("simulate", "NLS evolution of the branch solitons");
    add_common(simulate, o, true);
    auto* compare = app.add_subcommand("compare", "NLS against the KdV soliton");
    add_common(compare, o, true);
    auto* sweep = app.add_subcommand("sweep-h", "coefficients along the coupling h by continuation");
    add_common(sweep, o, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_config;
    }

    try {
        const auto cfg = resolve(o);
        if (spectrum->parsed()) {
            run_spectrum(cfg, o.out, std::cout);
        } else if (coeffs->parsed()) {
            run_coeffs(cfg, o.branch, o.out, std::cout);
        } else if (simulate->parsed()) {
            for (int b : cfg.run.branches) run_simulate(cfg, b, o.out, std::cout);
        } else if (compare->parsed()) {
            run_compare(cfg, cfg.run.branches, o.out, std::cout);
        } else if (sweep->parsed()) {
            run_sweep(cfg, o.out, std::cout);
        }
    } catch (const kdvred::spectrum::UnstableBackground& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_config;
    } catch (const kdvred::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const kdvred::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return exit_numerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_numerical;
    }
    return 0;
}
