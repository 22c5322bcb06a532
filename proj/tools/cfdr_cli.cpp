#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cfdr/environments.hpp"
#include "cfdr/harness.hpp"
#include "cfdr/verify.hpp"

namespace {

struct Overrides {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<cfdr::Index> trials;
    std::optional<unsigned> workers;
    std::optional<std::string> env;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config_path, "JSON experiment config (defaults apply when omitted)");
    cmd->add_option("--seed", o.seed, "Root seed");
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--trials", o.trials, "Trials per cell and policy pair");
    cmd->add_option("--workers", o.workers, "Worker threads (0 = all cores); output does not depend on it");
    cmd->add_option("--env", o.env, "Environment: two_context, heartsteps or sepsis");
}

cfdr::ExperimentConfig build_config(const Overrides& o) {
    cfdr::ExperimentConfig c = o.config_path.empty() ? cfdr::ExperimentConfig{} : cfdr::load_config(o.config_path);
    if (o.env) {
        const auto kind = cfdr::env_kind_from_string(*o.env);
        if (!kind) throw cfdr::ConfigError("unknown env '" + *o.env + "'");
        c.env = *kind;
    }
    if (o.seed) c.seed = *o.seed;
    if (o.out) c.out = *o.out;
    if (o.trials) c.trials = *o.trials;
    if (o.workers) c.workers = *o.workers;
    c.validate();
    return c;
}

std::filesystem::path output_path(const cfdr::ExperimentConfig& c, const std::string& suffix) {
    std::filesystem::path dir(c.out);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw cfdr::IoError("cannot create output directory '" + c.out + "': " + ec.message());
    return dir / (cfdr::to_string(c.env) + suffix);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Off-policy evaluation with counterfactual annotations"};
    app.require_subcommand(1);

    Overrides grid_opts, delta_opts;
    std::uint64_t verify_seed = 0;
    cfdr::Index verify_trials = 20000;
    unsigned verify_workers = 0;

    auto* grid = app.add_subcommand("run-grid", "Run the (eps_G, Delta_G) grid and write <out>/<env>_grid.csv");
    add_common(grid, grid_opts);
    auto* delta = app.add_subcommand("delta", "Delta analysis of DM+-IS against DM / DM+, writes <out>/<env>_delta.csv");
    add_common(delta, delta_opts);
    auto* verify = app.add_subcommand("verify-theorems", "Check closed forms against simulation");
    verify->add_option("--seed", verify_seed, "Root seed");
    verify->add_option("--trials", verify_trials, "Simulated datasets per check");
    verify->add_option("--workers", verify_workers, "Worker threads (0 = all cores)");
    auto* list = app.add_subcommand("list-envs", "List the built-in environments");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (list->parsed()) {
            for (cfdr::EnvKind k : cfdr::all_env_kinds) {
                const auto e = cfdr::make_environment(k);
                std::cout << cfdr::to_string(k) << "  contexts=" << e.env.context_count()
                          << " actions=" << e.env.action_count() << " pairs=" << e.suite.size()
                          << " n=" << e.default_n << '\n';
            }
            return 0;
        }
        if (verify->parsed()) {
            bool ok = true;
            for (const auto& line : cfdr::verify_theorems(verify_seed, verify_trials, verify_workers)) {
                std::cout << cfdr::format_verify_line(line) << '\n';
                ok = ok && line.passed;
            }
            return ok ? 0 : 2;
        }
        if (grid->parsed()) {
            const auto config = build_config(grid_opts);
            const auto result = cfdr::run_grid(config);
            for (const auto& f : result.failures) std::cerr << "warning: " << f << '\n';
            const auto path = output_path(config, "_grid." + config.format);
            cfdr::export_grid(result, path.string(), config.format);
            std::cout << "wrote " << result.rows.size() << " rows to " << path.string() << '\n';
            return 0;
        }
        if (delta->parsed()) {
            const auto config = build_config(delta_opts);
            const auto result = cfdr::delta_analysis(config);
            const auto path = output_path(config, "_delta.csv");
            cfdr::export_delta(result, path.string());
            std::cout << "wrote " << result.rows.size() << " rows to " << path.string() << '\n';
            return 0;
        }
    } catch (const cfdr::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
