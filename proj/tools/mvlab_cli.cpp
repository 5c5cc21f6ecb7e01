#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "mvlab/experiments.hpp"

namespace {

struct cli_flags {
    std::string config;
    std::string out = ".";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> particles;
    std::optional<std::size_t> steps;
    std::size_t workers = 1;
};

void add_common(CLI::App* sub, cli_flags& flags, bool run_flags)
{
    sub->add_option("--config", flags.config, "experiment configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "master seed (overrides problem.seed)");
    sub->add_option("--particles", flags.particles, "particle count M (overrides problem.particles)");
    sub->add_option("--steps", flags.steps, "time steps S (overrides problem.steps)");
    if (run_flags) {
        sub->add_option("--out", flags.out, "output directory");
        sub->add_option("--workers", flags.workers, "worker threads; results do not depend on it")
            ->check(CLI::PositiveNumber);
    }
}

mvlab::experiment_config load(const cli_flags& flags)
{
    auto file = mvlab::config_file::load(flags.config);
    if (flags.seed)
        file.set("problem.seed", std::to_string(*flags.seed));
    if (flags.particles)
        file.set("problem.particles", std::to_string(*flags.particles));
    if (flags.steps)
        file.set("problem.steps", std::to_string(*flags.steps));
    return mvlab::load_experiment(file);
}

std::string output_path(const cli_flags& flags, const std::string& name)
{
    std::filesystem::create_directories(flags.out);
    return (std::filesystem::path(flags.out) / (name + ".csv")).string();
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"mvlab: mean-field SPDE particle experiments"};
    app.set_version_flag("--version", std::string(MVLAB_VERSION));
    app.require_subcommand(1);

    cli_flags flags;
    const char* runners[] = {"trotter-kato", "zeroth-order", "parametric", "initial", "moments", "picard"};
    const char* about[] = {"generator family convergence A_n -> A",
                           "small-noise limit against the deterministic evolution",
                           "coefficient family convergence f_n -> f or f_lambda -> f_lambda'",
                           "dependence on the initial law and the constant C",
                           "moment bound with J fitted on a calibration seed",
                           "successive gaps of the law iteration"};
    for (std::size_t i = 0; i < std::size(runners); ++i)
        add_common(app.add_subcommand(runners[i], about[i]), flags, true);
    add_common(app.add_subcommand("simulate", "simulate one ensemble and write its moment trajectory"), flags, true);
    add_common(app.add_subcommand("validate-config", "parse and assemble a configuration without running it"), flags,
               false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        const auto cfg = load(flags);
        const mvlab::run_options opts{flags.workers};
        if (name == "validate-config") {
            mvlab::validate_experiment(cfg);
            std::cout << flags.config << ": ok\n";
            return 0;
        }
        const std::string path = output_path(flags, name);
        if (name == "simulate") {
            mvlab::write_text_file(mvlab::run_simulate(cfg, opts), path);
            std::cout << "wrote " << path << "\n";
            return 0;
        }
        const auto report = mvlab::run_study(name, cfg, opts);
        mvlab::emit_report(report, path);
        std::size_t failed = 0;
        for (const auto& row : report.rows) {
            if (!row.pass) {
                ++failed;
                std::cerr << "FAIL " << row.criterion << " at " << row.sweep_param << "\n";
            }
        }
        std::cout << "wrote " << path << " (" << report.rows.size() << " rows, " << failed << " failed)\n";
        return failed == 0 ? 0 : 2;
    } catch (const std::exception& e) {
        std::cerr << "mvlab-cli " << name << ": " << e.what() << "\n";
        return 1;
    }
}
