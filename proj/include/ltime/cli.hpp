#pragma once

// Scenario runner behind the `ltime analyze` command. Field names of the
// scenario and report documents are listed in docs/FORMAT.md.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ltime/errors.hpp"
#include "ltime/localtime.hpp"

namespace ltime::cli {

class IoError : public Error {
public:
    using Error::Error;
};

enum ExitCode : int { kOk = 0, kInputError = 1, kPreconditionFailed = 2, kInconclusive = 3 };

struct RunOptions {
    std::filesystem::path scenario;
    std::filesystem::path output;
    std::optional<std::uint64_t> seed;  // overrides every seed in the scenario
    int threads = 0;                    // 0: LTIME_THREADS or the OpenMP default
    bool quiet = false;
};

struct Outcome {
    int exit_code = kOk;
    nlohmann::ordered_json report;     // empty when the scenario was rejected
    std::vector<std::string> errors;   // input errors (exit code 1)
};

// Validates and runs a parsed scenario. Relative output paths inside the
// scenario resolve against `base_dir`.
Outcome run_scenario(const nlohmann::json& scenario, const RunOptions& opts, const std::filesystem::path& base_dir,
                     std::ostream* progress = nullptr);

// Reads the scenario, runs it and writes the report. Messages go to `err`.
int run(const RunOptions& opts, std::ostream& err);

// Thread count from LTIME_THREADS, or 0 when unset or invalid.
int env_threads();

// CSV with columns l, survival_analytic and, when samples are given,
// survival_empirical. PreconditionFailed unless the grid is nonempty and
// nondecreasing, IoError when the file cannot be written.
void emit_survival_curve(const LocalTimeLaw& law, std::span<const double> l_grid, const std::filesystem::path& path,
                         std::span<const double> samples = {});

}  // namespace ltime::cli
