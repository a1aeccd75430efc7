#pragma once

// Euler-Maruyama path simulator used as an independent check of the analytic
// laws: window estimates of the local time at a target level, hitting flags
// and times, and Riemann sums of integral functionals.

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ltime/functionals.hpp"
#include "ltime/localtime.hpp"
#include "ltime/scale.hpp"

namespace ltime::mc {

// StoppedAtTarget only occurs with stop_on_hit.
enum class ExitKind { UpperBarrier, LowerBarrier, StoppedAtTarget, TimedOut, Failed };
std::string_view to_string(ExitKind kind);

struct SimConfig {
    double dt = 1e-3;
    double t_max = 1e4;
    double upper_barrier = 30.0;
    double lower_barrier = -30.0;
    std::size_t n_paths = 10000;
    std::uint64_t seed = 0;
    double epsilon = 0.05;   // half-width of the local-time window
    bool stop_on_hit = false;  // end a path at its first hit of the target

    // PreconditionFailed unless dt, t_max, epsilon > 0 and lower < x < upper.
    void validate(double x) const;
    // Soft problems, currently epsilon^2 / (sup a^2 dt) < 10 on the barrier range.
    std::vector<std::string> warnings(const DiffusionModel& model) const;
};

struct PathSummary {
    std::uint64_t stream_id = 0;
    double occupation_time = 0.0;  // time spent within epsilon of the target
    double local_time_estimate = 0.0;
    double j_estimate = 0.0;
    ExitKind exit = ExitKind::TimedOut;
    double exit_time = 0.0;
    bool hit_target = false;
    std::optional<double> hit_time;  // present iff hit_target
    std::string error;               // set when exit == Failed
};

// One path of X from x on the grid t_n = n dt. The RNG stream depends only on
// (cfg.seed, stream_id).
PathSummary simulate_path(const DiffusionModel& model, double x, double y_target, const FunctionSpec* f,
                          const SimConfig& cfg, std::uint64_t stream_id);

// a(y)^2 occupation / (2 epsilon).
double estimate_local_time(double occupation_time, double y, double epsilon, const DiffusionModel& model);

struct Ensemble {
    std::vector<PathSummary> paths;          // indexed by stream_id
    std::map<std::string, std::size_t> failures;  // error message -> count
    std::size_t n_failed() const;
    std::vector<double> local_times() const;
    std::vector<double> j_estimates() const;
    double hit_fraction() const;
    std::size_t count(ExitKind kind) const;
};

// Paths are distributed over OpenMP threads (0: runtime default). Output does
// not depend on the thread count.
Ensemble run_ensemble(const DiffusionModel& model, double x, double y_target, const FunctionSpec* f,
                      const SimConfig& cfg, int threads = 0);
// Reference version looping on the calling thread.
Ensemble run_ensemble_serial(const DiffusionModel& model, double x, double y_target, const FunctionSpec* f,
                             const SimConfig& cfg);

struct LaplaceEstimate {
    double value = 0.0;
    double std_error = 0.0;
    double timed_out_fraction = 0.0;
    std::size_t n = 0;
    std::optional<std::string> warning;
};

// E exp(-lambda tau_0^x) with exp(-lambda inf) = 0, paths stopped at the first
// hit of 0.
LaplaceEstimate estimate_hitting_laplace(const DiffusionModel& model, double x, double lambda,
                                         const SimConfig& cfg, int threads = 0);

struct EmpiricalComparison {
    std::size_t n = 0;
    double empirical_mean = 0.0;
    double empirical_variance = 0.0;
    double analytic_mean = 0.0;
    double mean_z_score = 0.0;
    double ks_distance = 0.0;
    double atom_fraction = 0.0;
};

// KS distance to the defective exponential law, z-score of the mean against
// (1 - atom_prob) / rate. Samples <= atom_threshold count towards the atom.
EmpiricalComparison compare_samples(std::span<const double> samples, const LocalTimeLaw& law,
                                    double atom_threshold = 0.0);
EmpiricalComparison compare_local_time(const std::vector<PathSummary>& paths, const LocalTimeLaw& law,
                                       double atom_threshold = 0.0);

// sup_l |F_n(l) - F(l)| for the defective exponential CDF F.
double ks_distance(std::span<const double> samples, const LocalTimeLaw& law);

struct MeanComparison {
    std::size_t n = 0;
    double mean = 0.0;
    double variance = 0.0;  // unbiased
    double std_error = 0.0;
    double analytic = 0.0;
    double z_score = 0.0;
};

MeanComparison compare_mean(std::span<const double> samples, double analytic);

// Columns: stream_id, local_time_estimate, j_estimate, exit, hit_target, hit_time.
void write_paths_csv(std::ostream& out, const std::vector<PathSummary>& paths);

}  // namespace ltime::mc
