// Command-line front end: subcommands over the config-driven runners plus
// the built-in verification suite. Exit codes: 0 success, 1 verification
// failure, 2 configuration/parse error, 3 numerical failure.

#include "hjens/acceptance.hpp"
#include "hjens/runner.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct CommonArgs {
    std::string config;
    std::string out_dir = "out";
    unsigned seed = 12345;
    bool quiet = false;
};

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config, "run configuration (INI)")->required();
    sub->add_option("--out", args.out_dir, "output directory");
    sub->add_option("--seed", args.seed, "seed for sample-point audits and sampling");
    sub->add_flag("--quiet", args.quiet, "suppress progress output");
}

int dispatch(const std::string& name, const CommonArgs& args) {
    hjens::IniFile ini = hjens::IniFile::parse_file(args.config);
    hjens::RunPaths rp;
    rp.out_dir = args.out_dir;
    rp.prefix = name;
    rp.quiet = args.quiet;
    rp.seed = args.seed;
    if (name == "lagrangian") hjens::run_lagrangian_driver(ini, rp);
    else if (name == "eulerian") hjens::run_eulerian_driver(ini, rp);
    else if (name == "hj") hjens::run_hj_driver(ini, rp);
    else if (name == "prep") hjens::run_prep_driver(ini, rp);
    else if (name == "layers") hjens::run_layers_driver(ini, rp);
    else if (name == "dipole") hjens::run_dipole_driver(ini, rp);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ensemble solvers for Hamilton-Jacobi-type dynamics"};
    app.require_subcommand(1);

    const char* subs[] = {"lagrangian", "eulerian", "hj", "prep", "layers", "dipole"};
    const char* descs[] = {
        "integrate trajectories of ensemble members",
        "march momentum/density fields on a position grid",
        "solve the action equation by characteristics",
        "momentum-representation field evolution",
        "build a multilayer turning-point ensemble",
        "dipole tracer or spin-field advection",
    };
    std::array<CommonArgs, 6> args;
    for (int i = 0; i < 6; ++i)
        add_common(app.add_subcommand(subs[i], descs[i]), args[std::size_t(i)]);

    bool verify_quiet = false;
    CLI::App* verify = app.add_subcommand("verify", "run the acceptance suite");
    verify->add_flag("--quiet", verify_quiet, "print only the summary line");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (verify->parsed()) return hjens::run_acceptance(std::cout, verify_quiet) ? 0 : 1;
        for (int i = 0; i < 6; ++i)
            if (app.get_subcommand(subs[i])->parsed())
                return dispatch(subs[i], args[std::size_t(i)]);
        return 2;
    } catch (const hjens::parse_error& e) {
        std::cerr << "expression error: " << e.what() << "\n";
        return 2;
    } catch (const hjens::format_error& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 2;
    } catch (const hjens::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const hjens::numeric_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
