// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ltime/errors.hpp"
#include "ltime/expr.hpp"
#include "ltime/functionals.hpp"
#include "ltime/localtime.hpp"
#include "ltime/montecarlo.hpp"
#include "ltime/quadrature.hpp"
#include "ltime/scale.hpp"

using namespace ltime;
using std::numbers::pi;

namespace {

const DiffusionModel kDrifted("1", "1");
const DiffusionModel kArctan("sqrt(x^2+1)", "x");
const DiffusionModel kWobbly("1 + 0.3*sin(x)", "0.5 + 0.2*cos(2*x)");
const FunctionSpec kUnit("step(x)*step(1-x)");

struct Result {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            if (!detail.empty()) detail += "; ";
            detail += "failed: " + what;
        }
    }
    void note(const std::string& what) {
        if (!detail.empty()) detail += "; ";
        detail += what;
    }
};

std::string fmt(double v, int digits = 6) {
    std::ostringstream s;
    s << std::setprecision(digits) << v;
    return s.str();
}

double rel_err(double got, double want) { return std::fabs(got - want) / std::max(std::fabs(want), 1e-300); }

mc::SimConfig sim(std::size_t n, double lo, double hi, std::uint64_t seed) {
    mc::SimConfig cfg;
    cfg.n_paths = n;
    cfg.lower_barrier = lo;
    cfg.upper_barrier = hi;
    cfg.seed = seed;
    return cfg;
}

std::vector<double> grid41() {
    std::vector<double> xs;
    for (int i = 0; i <= 40; ++i) xs.push_back(-5.0 + 0.25 * i);
    return xs;
}

// Ensemble for a = b = 1, f = 1[0,1] from x; shared by the J criteria.
const mc::Ensemble& unit_ensemble(double x) {
    static std::map<double, mc::Ensemble> cache;
    auto it = cache.find(x);
    if (it == cache.end())
        it = cache.emplace(x, mc::run_ensemble(kDrifted, x, 0.0, &kUnit, sim(10000, -10.0, 10.0, 606))).first;
    return it->second;
}

Result ac1() {
    Result r;
    double e1 = 0.0, e2 = 0.0;
    for (double x : grid41()) {
        e1 = std::max(e1, std::fabs(big_phi(kDrifted, 0.0, x) - 0.5 * (1.0 - std::exp(-2.0 * x))));
        e2 = std::max(e2, std::fabs(big_phi(kArctan, 0.0, x) - std::atan(x)));
    }
    r.require(e1 <= 1e-8, "example 1 max error " + fmt(e1));
    r.require(e2 <= 1e-8, "example 2 max error " + fmt(e2));
    r.note("max |err| " + fmt(e1, 3) + ", " + fmt(e2, 3));
    return r;
}

Result ac2() {
    Result r;
    double worst = 0.0;
    for (double x : {-2.0, -1.0, 0.0, 1.0, 2.0}) worst = std::max(worst, std::fabs(psi0(kDrifted, x) - 1.0));
    const double p2 = psi0(kArctan, 0.0);
    r.require(worst <= 1e-6, "example 1 psi0 error " + fmt(worst));
    r.require(std::fabs(p2 - 2.0 / pi) <= 1e-6, "example 2 psi0 = " + fmt(p2, 12));
    r.note("psi0 example 2 = " + fmt(p2, 12));
    return r;
}

Result ac3() {
    Result r;
    const double exact = 1.0 - std::exp(-2.0);
    const double p = prob_never_hit(kDrifted, 1.0, 0.0).p_never_hit;
    r.require(std::fabs(p - exact) <= 1e-8, "P(never hit) = " + fmt(p, 12));

    mc::SimConfig cfg = sim(10000, -10.0, 40.0, 303);
    cfg.stop_on_hit = true;
    const mc::Ensemble e = mc::run_ensemble(kDrifted, 1.0, 0.0, nullptr, cfg);
    const double hit = 1.0 - exact;
    const double se = std::sqrt(hit * (1.0 - hit) / 10000.0);
    const double frac = e.hit_fraction();
    r.require(std::fabs(frac - hit) <= 3.0 * se, "MC hit fraction " + fmt(frac));
    r.require(e.count(mc::ExitKind::TimedOut) == 0 && e.n_failed() == 0, "timeouts or failures");
    r.note("hit fraction " + fmt(frac) + " vs " + fmt(hit) + " (3 SE = " + fmt(3 * se, 3) + ")");
    return r;
}

Result ac4() {
    Result r;
    mc::SimConfig cfg = sim(10000, -10.0, 10.0, 404);
    cfg.epsilon = 0.05;
    const mc::Ensemble e = mc::run_ensemble(kDrifted, 0.0, 0.0, nullptr, cfg);
    const LocalTimeLaw law = local_time_law(kDrifted, 0.0, 0.0);
    const mc::EmpiricalComparison c = mc::compare_local_time(e.paths, law);
    r.require(c.empirical_mean >= 0.93 && c.empirical_mean <= 1.07, "mean " + fmt(c.empirical_mean));
    r.require(c.ks_distance <= 0.05, "KS " + fmt(c.ks_distance));
    r.note("mean " + fmt(c.empirical_mean) + ", KS " + fmt(c.ks_distance, 4));
    return r;
}

Result ac5() {
    Result r;
    double worst = 0.0;
    for (int k = 1; k <= 3; ++k) {
        const double generic = local_time_moment(kDrifted, 0.0, 0.0, k);
        const double upward = local_time_moment_upward(kDrifted, 0.0, 0.0, k);
        worst = std::max({worst, rel_err(generic, factorial(k)), rel_err(upward, factorial(k))});
    }
    r.require(worst <= 1e-10, "relative error " + fmt(worst));
    r.note("max rel err " + fmt(worst, 3));
    return r;
}

Result ac6() {
    Result r;
    const double m0 = mean_j(kDrifted, kUnit, 0.0);
    const double m2 = mean_j(kDrifted, kUnit, 2.0);
    const double want2 = std::exp(-4.0) * (std::exp(2.0) - 1.0) / 2.0;
    r.require(std::fabs(m0 - 1.0) <= 1e-8, "mean_j(0) = " + fmt(m0, 12));
    r.require(std::fabs(m2 - want2) <= 1e-8, "mean_j(2) = " + fmt(m2, 12));
    const mc::MeanComparison c = mc::compare_mean(unit_ensemble(0.0).j_estimates(), m0);
    r.require(std::fabs(c.z_score) <= 3.0, "MC z-score " + fmt(c.z_score));
    r.note("MC mean " + fmt(c.mean) + " +- " + fmt(c.std_error, 3) + ", z " + fmt(c.z_score, 3));
    return r;
}

// int_c^d f/a^2 E L^x(y) dy, split at the kink y = x.
double occupation_mean(const DiffusionModel& m, const FunctionSpec& f, double x, double c, double d) {
    auto g = [&](double y) {
        const double fv = f(y);
        if (fv == 0.0) return 0.0;
        const double av = m.a(y);
        return fv / (av * av) * local_time_moment(m, x, y, 1);
    };
    quad::Tolerance tol{1e-10, 1e-13};
    if (x <= c || x >= d) return quad::integrate(g, c, d, tol).value;
    return quad::integrate(g, c, x, tol).value + quad::integrate(g, x, d, tol).value;
}

Result ac7() {
    Result r;
    std::mt19937_64 rng(7007);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    const DiffusionModel models[] = {kDrifted, kWobbly, DiffusionModel("1.5", "-0.8"),
                                     DiffusionModel("1 + 0.5*atan(x)", "1 + 0.25*sin(x)"),
                                     DiffusionModel("sqrt(1 + 0.5*cos(x)^2)", "0.7")};
    double worst = 0.0;
    for (int i = 0; i < 5; ++i) {
        const double c = u(rng), d = c + 0.5 + 0.5 * (u(rng) + 1.5), x = u(rng);
        std::ostringstream text;
        text << std::setprecision(17) << "step(x-(" << c << "))*step((" << d << ")-x)*(1+0.5*cos(3*x))";
        const FunctionSpec f(text.str());
        worst = std::max(worst, rel_err(mean_j(models[i], f, x), occupation_mean(models[i], f, x, c, d)));
    }
    r.require(worst <= 1e-6, "relative error " + fmt(worst));
    r.note("max rel err " + fmt(worst, 3));
    return r;
}

Result ac8() {
    Result r;
    for (double x : {0.0, 0.5, 2.0}) {
        const std::vector<double> js = unit_ensemble(x).j_estimates();
        double m2 = 0.0;
        for (double v : js) m2 += v * v;
        const double rms = std::sqrt(m2 / static_cast<double>(js.size()));
        const double bound = moment_bound_j(kDrifted, kUnit, x, 2);
        r.require(rms < bound, "x=" + fmt(x) + ": " + fmt(rms) + " >= " + fmt(bound));
        r.note("x=" + fmt(x) + ": " + fmt(rms, 4) + " < " + fmt(bound, 4));
    }
    return r;
}

Result ac9() {
    Result r;
    const PotentialBound p = potential_bound(kDrifted, kUnit, {}, {});
    const double lambda = 0.5 / p.value;
    const double bound = exp_moment_bound(p.value, lambda);
    std::vector<double> ex;
    for (double v : unit_ensemble(0.0).j_estimates()) ex.push_back(std::exp(lambda * v));
    const mc::MeanComparison c = mc::compare_mean(ex, bound);
    r.require(c.mean <= bound + 3.0 * c.std_error, "E exp(lambda J) = " + fmt(c.mean) + " vs " + fmt(bound));
    r.note("P0 " + fmt(p.value, 10) + ", E exp " + fmt(c.mean) + " +- " + fmt(c.std_error, 3) + " <= " + fmt(bound));
    return r;
}

expr::NodePtr random_tree(std::mt19937_64& rng, int depth) {
    using namespace expr;
    std::uniform_int_distribution<int> pick(0, depth <= 0 ? 2 : 8);
    switch (pick(rng)) {
        case 0: return make_literal(std::uniform_int_distribution<int>(0, 400)(rng) / 16.0);
        case 1: return make_variable();
        case 2: return make_constant(std::uniform_int_distribution<int>(0, 1)(rng) ? Constant::Pi : Constant::E);
        case 3: return make_negate(random_tree(rng, depth - 1));
        case 4:
        case 5:
        case 6: {
            auto op = static_cast<BinaryOp>(std::uniform_int_distribution<int>(0, 4)(rng));
            return make_binary(op, random_tree(rng, depth - 1), random_tree(rng, depth - 1));
        }
        default: {
            auto fn = static_cast<Function>(std::uniform_int_distribution<int>(0, 7)(rng));
            return make_call(fn, random_tree(rng, depth - 1));
        }
    }
}

Result ac10() {
    Result r;
    const DiffusionModel* models[] = {&kDrifted, &kArctan, &kWobbly};

    std::mt19937_64 rng(1010);
    std::uniform_real_distribution<double> pt(-3.0, 3.0);
    double cocycle = 0.0;
    for (int i = 0; i < 200; ++i) {
        const DiffusionModel& m = *models[i % 3];
        const double x0 = pt(rng), x1 = pt(rng), x2 = pt(rng);
        const double p01 = phi(m, x0, x1);
        cocycle = std::max(cocycle, rel_err(phi(m, x0, x2), p01 * phi(m, x1, x2)));
        const double lhs = big_phi(m, x0, x2), rhs = big_phi(m, x0, x1) + p01 * big_phi(m, x1, x2);
        cocycle = std::max(cocycle, std::fabs(lhs - rhs) / std::max(1.0, std::fabs(lhs)));
    }
    r.require(cocycle <= 1e-8, "cocycle/additivity " + fmt(cocycle));

    std::uniform_real_distribution<double> ls(0.0, 4.0);
    double markov = 0.0;
    for (int i = 0; i < 100; ++i) {
        const DiffusionModel& m = *models[i % 3];
        const double x = pt(rng) * 0.8, y = pt(rng) * 0.8, l = ls(rng);
        const double lhs = survival(local_time_law(m, x, y), l);
        const double rhs = (1 - prob_never_hit(m, x, y).p_never_hit) * survival(local_time_law(m, y, y), l);
        markov = std::max(markov, std::fabs(lhs - rhs) / std::max(rhs, 1e-300));
    }
    r.require(markov <= 1e-6, "strong Markov factorisation " + fmt(markov));

    QuadratureConfig tight;
    tight.rel_tol = 1e-13;
    tight.abs_tol = 1e-15;
    bool h2 = true;
    for (const DiffusionModel* m : models) {
        auto g = [&](double z) { return big_phi(*m, 0.2, z, tight); };
        double prev = std::fabs(apply_generator(*m, g, 0.9, 0.2));
        for (double h : {0.1, 0.05, 0.025}) {
            const double cur = std::fabs(apply_generator(*m, g, 0.9, h));
            h2 = h2 && cur < prev && std::fabs(prev / cur - 4.0) <= 0.6;
            prev = cur;
        }
    }
    r.require(h2, "generator on the scale function does not decay as h^2");

    int round_trips = 0;
    for (int i = 0; i < 1000; ++i) {
        expr::NodePtr tree = random_tree(rng, 5);
        const std::string text = expr::to_string(*tree);
        expr::NodePtr again = expr::parse(text);
        if (expr::structurally_equal(*tree, *again) && expr::to_string(*again) == text) ++round_trips;
    }
    r.require(round_trips == 1000, "parser round trips " + std::to_string(round_trips) + "/1000");

    const mc::SimConfig cfg = sim(400, -6.0, 6.0, 1111);
    std::ostringstream serial, parallel;
    mc::write_paths_csv(serial, mc::run_ensemble_serial(kWobbly, 0.0, 0.5, &kUnit, cfg).paths);
    mc::write_paths_csv(parallel, mc::run_ensemble(kWobbly, 0.0, 0.5, &kUnit, cfg, 3).paths);
    r.require(serial.str() == parallel.str(), "ensemble output depends on the thread count");

    r.note("cocycle " + fmt(cocycle, 3) + ", markov " + fmt(markov, 3) + ", round trips " +
           std::to_string(round_trips) + ", csv bytes " + std::to_string(serial.str().size()));
    return r;
}

struct Criterion {
    const char* id;
    const char* title;
    double time_limit;  // seconds, 0 = none
    std::function<Result()> run;
};

}  // namespace

int main() {
    const Criterion criteria[] = {
        {"AC1", "scale golden tests", 5.0, ac1},
        {"AC2", "psi0 golden values", 0.0, ac2},
        {"AC3", "hitting probability", 120.0, ac3},
        {"AC4", "local-time law by simulation", 300.0, ac4},
        {"AC5", "local-time moments", 0.0, ac5},
        {"AC6", "mean of J", 0.0, ac6},
        {"AC7", "occupation density consistency", 0.0, ac7},
        {"AC8", "moment bound against simulation", 0.0, ac8},
        {"AC9", "exponential moment bound", 0.0, ac9},
        {"AC10", "property suites", 0.0, ac10},
    };
    int failed = 0;
    const auto suite_start = std::chrono::steady_clock::now();
    for (const Criterion& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Result r;
        try {
            r = c.run();
        } catch (const std::exception& e) {
            r.require(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.time_limit > 0.0) r.require(secs < c.time_limit, "runtime over " + fmt(c.time_limit) + " s");
        if (!r.pass) ++failed;
        std::printf("%-4s %s  %s (%.1f s): %s\n", c.id, r.pass ? "PASS" : "FAIL", c.title, secs, r.detail.c_str());
        std::fflush(stdout);
    }
    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - suite_start).count();
    std::printf("%d/%zu criteria passed in %.1f s\n", static_cast<int>(std::size(criteria)) - failed,
                std::size(criteria), total);
    return failed == 0 ? 0 : 1;
}
