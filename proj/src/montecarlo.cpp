#include "ltime/montecarlo.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <omp.h>

#include "ltime/errors.hpp"

namespace ltime::mc {

namespace {

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32)};
    return std::mt19937_64(seq);
}

void collect_failures(Ensemble& e) {
    for (const PathSummary& p : e.paths)
        if (p.exit == ExitKind::Failed) ++e.failures[p.error];
}

}  // namespace

std::string_view to_string(ExitKind kind) {
    switch (kind) {
        case ExitKind::UpperBarrier: return "UpperBarrier";
        case ExitKind::LowerBarrier: return "LowerBarrier";
        case ExitKind::StoppedAtTarget: return "StoppedAtTarget";
        case ExitKind::TimedOut: return "TimedOut";
        case ExitKind::Failed: return "Failed";
    }
    return "?";
}

void SimConfig::validate(double x) const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw PreconditionFailed("dt must be positive");
    if (!(t_max > 0.0)) throw PreconditionFailed("t_max must be positive");
    if (!(epsilon > 0.0)) throw PreconditionFailed("epsilon must be positive");
    if (!(lower_barrier < x && x < upper_barrier)) {
        std::ostringstream msg;
        msg << "start " << x << " must lie strictly between the barriers " << lower_barrier << " and "
            << upper_barrier;
        throw PreconditionFailed(msg.str());
    }
}

std::vector<std::string> SimConfig::warnings(const DiffusionModel& model) const {
    std::vector<std::string> out;
    double sup_a2 = 0.0;
    constexpr int kSamples = 1000;
    for (int i = 0; i <= kSamples; ++i) {
        const double u = lower_barrier + (upper_barrier - lower_barrier) * i / kSamples;
        try {
            const double av = model.a(u);
            sup_a2 = std::max(sup_a2, av * av);
        } catch (const Error&) {
        }
    }
    const double resolution = epsilon * epsilon / (sup_a2 * dt);
    if (resolution < 10.0) {
        std::ostringstream msg;
        msg << "epsilon^2 / (sup a^2 dt) = " << resolution << " < 10: the local-time window is coarse";
        out.push_back(msg.str());
    }
    return out;
}

PathSummary simulate_path(const DiffusionModel& model, double x, double y_target, const FunctionSpec* f,
                          const SimConfig& cfg, std::uint64_t stream_id) {
    PathSummary out;
    out.stream_id = stream_id;
    try {
        std::mt19937_64 rng = make_stream(cfg.seed, stream_id);
        std::normal_distribution<double> normal;
        const double sqrt_dt = std::sqrt(cfg.dt);
        const double proximity = std::fabs(model.a(y_target)) * sqrt_dt;
        const auto max_steps = static_cast<std::uint64_t>(std::ceil(cfg.t_max / cfg.dt));

        double state = x;
        double window_steps = 0.0;
        double j = 0.0;
        auto check_hit = [&](double prev, double cur, std::uint64_t n) {
            if (out.hit_target) return;
            const bool crossed = (prev - y_target) * (cur - y_target) <= 0.0 && n > 0;
            if (crossed || std::fabs(cur - y_target) <= proximity) {
                out.hit_target = true;
                out.hit_time = static_cast<double>(n) * cfg.dt;
            }
        };
        check_hit(state, state, 0);

        std::uint64_t n = 0;
        out.exit = ExitKind::TimedOut;
        while (true) {
            if (cfg.stop_on_hit && out.hit_target) {
                out.exit = ExitKind::StoppedAtTarget;
                break;
            }
            if (n >= max_steps) break;
            if (std::fabs(state - y_target) <= cfg.epsilon) window_steps += 1.0;
            if (f) j += (*f)(state);
            const double next = state + model.b(state) * cfg.dt + model.a(state) * sqrt_dt * normal(rng);
            if (!std::isfinite(next)) throw Error("non-finite state (explosion)");
            ++n;
            check_hit(state, next, n);
            state = next;
            if (state >= cfg.upper_barrier) {
                out.exit = ExitKind::UpperBarrier;
                break;
            }
            if (state <= cfg.lower_barrier) {
                out.exit = ExitKind::LowerBarrier;
                break;
            }
        }
        out.exit_time = static_cast<double>(n) * cfg.dt;
        out.occupation_time = window_steps * cfg.dt;
        out.local_time_estimate = estimate_local_time(out.occupation_time, y_target, cfg.epsilon, model);
        out.j_estimate = j * cfg.dt;
    } catch (const std::exception& e) {
        out.exit = ExitKind::Failed;
        out.error = e.what();
    }
    return out;
}

double estimate_local_time(double occupation_time, double y, double epsilon, const DiffusionModel& model) {
    if (!(epsilon > 0.0)) throw PreconditionFailed("epsilon must be positive");
    if (occupation_time == 0.0) return 0.0;
    const double av = model.a(y);
    return av * av * occupation_time / (2.0 * epsilon);
}

std::size_t Ensemble::n_failed() const { return count(ExitKind::Failed); }

std::size_t Ensemble::count(ExitKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(paths.begin(), paths.end(), [kind](const PathSummary& p) { return p.exit == kind; }));
}

std::vector<double> Ensemble::local_times() const {
    std::vector<double> out;
    out.reserve(paths.size());
    for (const PathSummary& p : paths)
        if (p.exit != ExitKind::Failed) out.push_back(p.local_time_estimate);
    return out;
}

std::vector<double> Ensemble::j_estimates() const {
    std::vector<double> out;
    out.reserve(paths.size());
    for (const PathSummary& p : paths)
        if (p.exit != ExitKind::Failed) out.push_back(p.j_estimate);
    return out;
}

double Ensemble::hit_fraction() const {
    std::size_t ok = 0, hit = 0;
    for (const PathSummary& p : paths) {
        if (p.exit == ExitKind::Failed) continue;
        ++ok;
        if (p.hit_target) ++hit;
    }
    return ok == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(ok);
}

Ensemble run_ensemble_serial(const DiffusionModel& model, double x, double y_target, const FunctionSpec* f,
                             const SimConfig& cfg) {
    cfg.validate(x);
    Ensemble e;
    e.paths.resize(cfg.n_paths);
    for (std::size_t i = 0; i < cfg.n_paths; ++i) e.paths[i] = simulate_path(model, x, y_target, f, cfg, i);
    collect_failures(e);
    return e;
}

Ensemble run_ensemble(const DiffusionModel& model, double x, double y_target, const FunctionSpec* f,
                      const SimConfig& cfg, int threads) {
    cfg.validate(x);
    Ensemble e;
    e.paths.resize(cfg.n_paths);
    const auto n = static_cast<std::int64_t>(cfg.n_paths);
    const int nthreads = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 16) num_threads(nthreads)
    for (std::int64_t i = 0; i < n; ++i) {
        const auto id = static_cast<std::uint64_t>(i);
        e.paths[id] = simulate_path(model, x, y_target, f, cfg, id);
    }
    collect_failures(e);
    return e;
}

LaplaceEstimate estimate_hitting_laplace(const DiffusionModel& model, double x, double lambda, const SimConfig& cfg,
                                         int threads) {
    if (!(lambda > 0.0)) throw PreconditionFailed("lambda must be positive");
    SimConfig run = cfg;
    run.stop_on_hit = true;
    Ensemble e = run_ensemble(model, x, 0.0, nullptr, run, threads);

    std::vector<double> values;
    std::size_t timed_out = 0;
    for (const PathSummary& p : e.paths) {
        if (p.exit == ExitKind::Failed) continue;
        if (p.exit == ExitKind::TimedOut) ++timed_out;
        values.push_back(p.hit_target ? std::exp(-lambda * *p.hit_time) : 0.0);
    }
    LaplaceEstimate out;
    out.n = values.size();
    if (out.n == 0) return out;
    MeanComparison m = compare_mean(values, 0.0);
    out.value = m.mean;
    out.std_error = m.std_error;
    out.timed_out_fraction = static_cast<double>(timed_out) / static_cast<double>(out.n);
    if (out.timed_out_fraction > 0.01) {
        std::ostringstream msg;
        msg << "timed-out fraction " << out.timed_out_fraction << " > 1%: truncation bias";
        out.warning = msg.str();
    }
    return out;
}

double ks_distance(std::span<const double> samples, const LocalTimeLaw& law) {
    if (samples.empty()) return 0.0;
    std::vector<double> s(samples.begin(), samples.end());
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    auto cdf_at = [&](double l) { return cdf(law, l); };
    auto cdf_before = [&](double l) { return l <= 0.0 ? 0.0 : cdf(law, l); };  // only the atom jumps
    double d = 0.0;
    for (std::size_t i = 0; i < s.size();) {
        std::size_t j = i;
        while (j < s.size() && s[j] == s[i]) ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / n - cdf_before(s[i])));
        d = std::max(d, std::fabs(static_cast<double>(j) / n - cdf_at(s[i])));
        i = j;
    }
    return std::min(d, 1.0);
}

MeanComparison compare_mean(std::span<const double> samples, double analytic) {
    MeanComparison out;
    out.n = samples.size();
    out.analytic = analytic;
    if (out.n == 0) return out;
    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= static_cast<double>(out.n);
    double ss = 0.0;
    for (double v : samples) ss += (v - mean) * (v - mean);
    out.mean = mean;
    out.variance = out.n > 1 ? ss / static_cast<double>(out.n - 1) : 0.0;
    out.std_error = std::sqrt(out.variance / static_cast<double>(out.n));
    const double diff = mean - analytic;
    if (out.std_error > 0.0) out.z_score = diff / out.std_error;
    else out.z_score = diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
    return out;
}

EmpiricalComparison compare_samples(std::span<const double> samples, const LocalTimeLaw& law,
                                    double atom_threshold) {
    if (samples.empty()) throw PreconditionFailed("no samples to compare");
    const MeanComparison m = compare_mean(samples, (1.0 - law.atom_prob) / law.rate);
    EmpiricalComparison out;
    out.n = m.n;
    out.empirical_mean = m.mean;
    out.empirical_variance = m.variance;
    out.analytic_mean = m.analytic;
    out.mean_z_score = m.z_score;
    out.ks_distance = ks_distance(samples, law);
    const auto atoms = std::count_if(samples.begin(), samples.end(), [&](double v) { return v <= atom_threshold; });
    out.atom_fraction = static_cast<double>(atoms) / static_cast<double>(samples.size());
    return out;
}

EmpiricalComparison compare_local_time(const std::vector<PathSummary>& paths, const LocalTimeLaw& law,
                                       double atom_threshold) {
    std::vector<double> samples;
    samples.reserve(paths.size());
    for (const PathSummary& p : paths)
        if (p.exit != ExitKind::Failed) samples.push_back(p.local_time_estimate);
    return compare_samples(samples, law, atom_threshold);
}

void write_paths_csv(std::ostream& out, const std::vector<PathSummary>& paths) {
    auto num = [](double v) {
        char buf[32];
        auto res = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, res.ptr);
    };
    out << "stream_id,local_time_estimate,j_estimate,exit,hit_target,hit_time\n";
    for (const PathSummary& p : paths) {
        out << p.stream_id << ',' << num(p.local_time_estimate) << ',' << num(p.j_estimate) << ','
            << to_string(p.exit) << ',' << (p.hit_target ? "true" : "false") << ',';
        if (p.hit_time) out << num(*p.hit_time);
        out << '\n';
    }
}

}  // namespace ltime::mc
