#include <iostream>

#include "CLI11.hpp"
#include "ltime/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Local-time laws and integral functionals of one-dimensional diffusions"};
    app.require_subcommand(1);

    ltime::cli::RunOptions opts;
    std::uint64_t seed = 0;
    CLI::App* analyze = app.add_subcommand("analyze", "Run the tasks of a scenario file and write a JSON report");
    analyze->add_option("scenario", opts.scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
    analyze->add_option("-o,--output", opts.output, "Report path")->required();
    CLI::Option* seed_opt = analyze->add_option("--seed", seed, "Override every seed in the scenario");
    analyze->add_option("--threads", opts.threads, "Worker threads (default: LTIME_THREADS or all cores)")
        ->check(CLI::Range(1, 4096));
    analyze->add_flag("-q,--quiet", opts.quiet, "No progress output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : ltime::cli::kInputError;
    }
    if (*seed_opt) opts.seed = seed;
    return ltime::cli::run(opts, std::cerr);
}
