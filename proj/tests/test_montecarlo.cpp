#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "ltime/errors.hpp"
#include "ltime/montecarlo.hpp"

using namespace ltime;
using namespace ltime::mc;

namespace {

const DiffusionModel kDrifted("1", "1");
const DiffusionModel kBrownian("1", "0");

SimConfig small(std::size_t n, double lo, double hi, std::uint64_t seed = 1) {
    SimConfig cfg;
    cfg.n_paths = n;
    cfg.lower_barrier = lo;
    cfg.upper_barrier = hi;
    cfg.seed = seed;
    return cfg;
}

std::vector<double> draw_law(const LocalTimeLaw& law, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::exponential_distribution<double> ex(law.rate);
    std::vector<double> out(n);
    for (double& v : out) v = u(rng) < law.atom_prob ? 0.0 : ex(rng);
    return out;
}

bool same(const PathSummary& a, const PathSummary& b) {
    return a.stream_id == b.stream_id && a.local_time_estimate == b.local_time_estimate &&
           a.j_estimate == b.j_estimate && a.exit == b.exit && a.hit_target == b.hit_target &&
           a.hit_time == b.hit_time && a.exit_time == b.exit_time;
}

}  // namespace

TEST_CASE("local time estimator") {
    CHECK(estimate_local_time(0.0, 0.0, 0.05, kDrifted) == 0.0);
    CHECK(estimate_local_time(0.1, 0.0, 0.05, kDrifted) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(estimate_local_time(0.1, 0.0, 0.05, DiffusionModel("2", "1")) == doctest::Approx(4.0).epsilon(1e-14));
    CHECK_THROWS_AS(estimate_local_time(0.1, 0.0, 0.0, kDrifted), PreconditionFailed);
}

TEST_CASE("KS distance") {
    const LocalTimeLaw exp1{0.0, 1.0};
    const std::size_t n = 10000;
    std::vector<double> own = draw_law(exp1, n, 7);
    CHECK(ks_distance(own, exp1) <= 1.36 / std::sqrt(static_cast<double>(n)));
    CHECK(ks_distance(own, LocalTimeLaw{0.0, 2.0}) > 0.15);
    CHECK(ks_distance(own, LocalTimeLaw{0.0, 2.0}) == doctest::Approx(0.25).epsilon(0.1));

    std::vector<double> zeros(100, 0.0);
    CHECK(ks_distance(zeros, LocalTimeLaw{1.0, 1.0}) == 0.0);
    CHECK(ks_distance(zeros, exp1) == 1.0);

    const LocalTimeLaw defective{0.3, 2.0};
    std::vector<double> mixed = draw_law(defective, n, 9);
    EmpiricalComparison c = compare_samples(mixed, defective);
    CHECK(c.ks_distance <= 1.36 / std::sqrt(static_cast<double>(n)));
    CHECK(std::fabs(c.mean_z_score) < 3.0);
    CHECK(c.analytic_mean == doctest::Approx(0.35));
    CHECK(std::fabs(c.atom_fraction - 0.3) < 0.02);
    CHECK_THROWS_AS(compare_samples(std::vector<double>{}, exp1), PreconditionFailed);
}

TEST_CASE("mean comparison") {
    std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    MeanComparison m = compare_mean(v, 2.0);
    CHECK(m.mean == 2.5);
    CHECK(m.variance == doctest::Approx(5.0 / 3.0));
    CHECK(m.z_score == doctest::Approx(0.5 / std::sqrt(5.0 / 12.0)));
    std::vector<double> flat{1.0, 1.0};
    CHECK(compare_mean(flat, 1.0).z_score == 0.0);
    CHECK(std::isinf(compare_mean(flat, 0.0).z_score));
}

TEST_CASE("config validation") {
    SimConfig cfg = small(10, -1.0, 1.0);
    CHECK_NOTHROW(cfg.validate(0.0));
    CHECK_THROWS_AS(cfg.validate(1.0), PreconditionFailed);
    cfg.dt = 0.0;
    CHECK_THROWS_AS(cfg.validate(0.0), PreconditionFailed);
    cfg.dt = 1e-3;
    cfg.epsilon = -1.0;
    CHECK_THROWS_AS(cfg.validate(0.0), PreconditionFailed);
    cfg.epsilon = 0.05;
    CHECK(cfg.warnings(kDrifted).size() == 1);
    cfg.epsilon = 0.2;
    CHECK(cfg.warnings(kDrifted).empty());
    CHECK(cfg.warnings(DiffusionModel("3", "0")).size() == 1);
}

TEST_CASE("single paths") {
    SimConfig cfg = small(1, -30.0, 30.0);
    PathSummary p = simulate_path(kDrifted, 0.0, 0.0, nullptr, cfg, 3);
    CHECK(p.exit == ExitKind::UpperBarrier);
    CHECK(p.hit_target);
    CHECK(*p.hit_time == 0.0);
    CHECK(p.j_estimate == 0.0);
    CHECK(p.local_time_estimate > 0.0);

    FunctionSpec zero("0");
    CHECK(simulate_path(kDrifted, 0.0, 1.0, &zero, cfg, 4).j_estimate == 0.0);

    cfg.t_max = 0.5;
    PathSummary timed = simulate_path(kDrifted, 0.0, 5.0, nullptr, cfg, 5);
    CHECK(timed.exit == ExitKind::TimedOut);
    CHECK(timed.exit_time == doctest::Approx(0.5));
    CHECK_FALSE(timed.hit_time.has_value());

    DiffusionModel bad("1", "log(x)");
    PathSummary failed = simulate_path(bad, 0.5, 0.0, nullptr, small(1, -5.0, 5.0), 0);
    CHECK(failed.exit == ExitKind::Failed);
    CHECK_FALSE(failed.error.empty());
}

TEST_CASE("ensembles") {
    CHECK(run_ensemble(kDrifted, 0.0, 0.0, nullptr, small(0, -1.0, 1.0)).paths.empty());

    Ensemble drift = run_ensemble(kDrifted, 0.0, 0.0, nullptr, small(200, -30.0, 30.0));
    CHECK(drift.count(ExitKind::UpperBarrier) == 200);

    const std::size_t n = 2000;
    Ensemble sym = run_ensemble(kBrownian, 0.0, 0.0, nullptr, small(n, -1.0, 1.0));
    const double up = static_cast<double>(sym.count(ExitKind::UpperBarrier)) / n;
    CHECK(std::fabs(up - 0.5) <= 3.0 * std::sqrt(0.25 / n));

    DiffusionModel bad("1", "log(x)");
    Ensemble failing = run_ensemble(bad, 0.5, 0.0, nullptr, small(20, -5.0, 5.0));
    CHECK(failing.n_failed() > 0);
    CHECK(failing.n_failed() + failing.count(ExitKind::UpperBarrier) == 20);
    std::size_t counted = 0;
    for (const auto& [msg, count] : failing.failures) counted += count;
    CHECK(counted == failing.n_failed());
}

TEST_CASE("ensembles are deterministic") {
    FunctionSpec f("step(x)*step(1-x)");
    SimConfig cfg = small(300, -5.0, 5.0, 42);
    Ensemble serial = run_ensemble_serial(kDrifted, 0.0, 0.0, &f, cfg);
    for (int threads : {1, 2, 3}) {
        Ensemble par = run_ensemble(kDrifted, 0.0, 0.0, &f, cfg, threads);
        REQUIRE(par.paths.size() == serial.paths.size());
        bool all = true;
        for (std::size_t i = 0; i < par.paths.size(); ++i) all = all && same(par.paths[i], serial.paths[i]);
        CHECK(all);
    }
    std::ostringstream a, b;
    write_paths_csv(a, serial.paths);
    write_paths_csv(b, run_ensemble(kDrifted, 0.0, 0.0, &f, cfg, 2).paths);
    CHECK(a.str() == b.str());
    CHECK(a.str().rfind("stream_id,local_time_estimate,j_estimate,exit,hit_target,hit_time\n0,", 0) == 0);

    cfg.seed = 43;
    CHECK_FALSE(same(run_ensemble_serial(kDrifted, 0.0, 0.0, &f, cfg).paths[0], serial.paths[0]));
}

TEST_CASE("hit fraction") {
    SimConfig cfg = small(2000, -10.0, 10.0, 5);
    cfg.stop_on_hit = true;
    Ensemble e = run_ensemble(kDrifted, 1.0, 0.0, nullptr, cfg);
    const double p = std::exp(-2.0);
    CHECK(std::fabs(e.hit_fraction() - p) <= 3.0 * std::sqrt(p * (1 - p) / 2000));
    CHECK(e.count(ExitKind::StoppedAtTarget) == static_cast<std::size_t>(std::lround(e.hit_fraction() * 2000)));
    CHECK(e.count(ExitKind::TimedOut) == 0);
}

TEST_CASE("hitting-time Laplace transform") {
    SimConfig cfg = small(2000, -10.0, 10.0, 11);
    cfg.dt = 1e-4;
    LaplaceEstimate at_target = estimate_hitting_laplace(kDrifted, 0.0, 1.0, cfg);
    CHECK(at_target.value == 1.0);
    LaplaceEstimate est = estimate_hitting_laplace(kDrifted, -1.0, 0.5, cfg);
    const double exact = std::exp(1.0 - std::sqrt(2.0));
    CHECK(std::fabs(est.value - exact) <= 3.0 * est.std_error);
    CHECK_FALSE(est.warning.has_value());
    CHECK(estimate_hitting_laplace(kDrifted, -1.0, 200.0, cfg).value < 1e-3);

    SimConfig short_run = small(200, -10.0, 10.0);
    short_run.t_max = 0.01;
    LaplaceEstimate cut = estimate_hitting_laplace(kDrifted, -1.0, 0.5, short_run);
    CHECK(cut.timed_out_fraction > 0.5);
    CHECK(cut.warning.has_value());
    CHECK_THROWS_AS(estimate_hitting_laplace(kDrifted, -1.0, 0.0, cfg), PreconditionFailed);
}

TEST_CASE("functional estimator matches the mean of J") {
    FunctionSpec f("step(x)*step(1-x)");
    Ensemble e = run_ensemble(kDrifted, 0.0, 0.0, &f, small(2000, -10.0, 10.0, 8));
    MeanComparison m = compare_mean(e.j_estimates(), 1.0);
    CHECK(std::fabs(m.z_score) < 3.0);
}

TEST_CASE("window and step halving moves the local-time mean towards its limit") {
    // Expected window bias for a = b = 1 at x = y = 0: 1/2 + (1 - e^{-2 eps}) / (4 eps).
    double previous = 0.0;
    for (auto [eps, dt] : {std::pair{0.4, 0.016}, {0.2, 0.004}, {0.1, 0.001}}) {
        SimConfig cfg = small(10000, -10.0, 10.0, 21);
        cfg.epsilon = eps;
        cfg.dt = dt;
        Ensemble e = run_ensemble(kDrifted, 0.0, 0.0, nullptr, cfg);
        EmpiricalComparison c = compare_local_time(e.paths, LocalTimeLaw{0.0, 1.0});
        const double window = 0.5 + (1 - std::exp(-2 * eps)) / (4 * eps);
        CHECK(std::fabs(c.empirical_mean - window) <= 4.0 * std::sqrt(c.empirical_variance / c.n) + 0.02);
        CHECK(c.empirical_mean > previous);
        CHECK(c.empirical_mean < 1.0);
        previous = c.empirical_mean;
    }
}
