// Command-line front end: wgmcav <simulate|sweep|fit|cqed|report> --config PATH
//   [--workers N] [--seed S] [--out DIR]
//
// Exit status: 0 success, 2 when some tasks failed, 1 for configuration or
// input errors.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "wgmcav/orchestrator.hpp"

namespace
{
struct Flags
{
    std::string config;
    std::optional<int> workers;
    std::optional<long long> seed;
    std::optional<std::string> out;
};

void add_flags(CLI::App *cmd, Flags &flags)
{
    cmd->add_option("--config", flags.config, "job configuration (JSON, comments allowed)")->required();
    cmd->add_option("--workers", flags.workers, "worker threads (overrides WGMCAV_WORKERS and the config)");
    cmd->add_option("--seed", flags.seed, "random seed for synthetic spectra");
    cmd->add_option("--out", flags.out, "output directory");
}

int run(wgmcav::app::JobKind kind, const Flags &flags)
{
    using namespace wgmcav::app;
    Job job = parse_config(flags.config, kind);
    if (flags.seed) {
        if (*flags.seed < 0)
            throw ConfigError("--seed", "must be non-negative");
        job.seed = static_cast<std::uint64_t>(*flags.seed);
        job.canonical["seed"] = job.seed;
    }
    if (flags.out)
        job.out_dir = *flags.out;
    const int workers = resolve_workers(flags.workers, job.workers);
    const RunSummary summary = run_job(job, workers);
    std::cout << to_string(kind) << ": " << summary.tasks << " task(s), " << summary.failed << " failed; manifest "
              << summary.manifest_path << '\n';
    return summary.exit_code;
}

} // namespace

int main(int argc, char **argv)
{
    using wgmcav::app::JobKind;
    CLI::App app{"Whispering-gallery microcavity simulation and spectrum analysis"};
    app.require_subcommand(1);

    Flags flags;
    std::optional<JobKind> chosen;
    const std::pair<const char *, const char *> commands[] = {
        {"simulate", "FDTD mode search for one azimuthal number"},
        {"sweep", "FDTD runs over m, etch depth and polarization"},
        {"fit", "detect and fit resonances in a spectrum"},
        {"cqed", "cavity-QED parameters for mode records"},
        {"report", "plot-ready tables from finished runs"},
    };
    for (const auto &[name, help] : commands) {
        CLI::App *cmd = app.add_subcommand(name, help);
        add_flags(cmd, flags);
        const JobKind kind = wgmcav::app::job_kind_from_string(name);
        cmd->callback([&chosen, kind] { chosen = kind; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : wgmcav::app::kExitConfig;
    }

    try {
        return run(*chosen, flags);
    } catch (const wgmcav::ValidationError &e) {
        std::cerr << "configuration error: " << e.what() << '\n';
    } catch (const wgmcav::app::MissingResultsError &e) {
        std::cerr << "missing results: " << e.what() << '\n';
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
    }
    return wgmcav::app::kExitConfig;
}
