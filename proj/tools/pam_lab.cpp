#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pamlab/cli/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"pam-lab: batch experiments for the parabolic Anderson model on compact manifolds"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    int threads = 0;
    std::uint64_t seed = 0;
    auto* run = app.add_subcommand("run", "run one experiment described by a JSON config");
    run->add_option("config", config_path, "experiment config (JSON)")->required();
    auto* out_opt = run->add_option("--out", out_dir, "output directory (default: config \"output\" or results/<id>)");
    auto* threads_opt = run->add_option("--threads", threads, "worker threads (fallback: PAM_LAB_THREADS, then hardware)")->check(CLI::PositiveNumber);
    auto* seed_opt = run->add_option("--seed", seed, "overrides the config seed");

    std::string report_dir;
    auto* report = app.add_subcommand("report", "traceability matrix over every results.json under DIR");
    report->add_option("dir", report_dir, "results directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : pamlab::cli::kExitConfig;
    }

    if (*report) return pamlab::cli::report_command(report_dir, std::cout, std::cerr);

    pamlab::cli::RunOptions opt;
    if (*out_opt) opt.out = out_dir;
    if (*threads_opt) opt.threads = threads;
    if (*seed_opt) opt.seed = seed;
    return pamlab::cli::run_command(config_path, opt, std::cout, std::cerr);
}
