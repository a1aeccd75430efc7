#include "ltime/functionals.hpp"

#include <array>
#include <cmath>
#include <exception>
#include <span>
#include <sstream>

#include <omp.h>

#include "ltime/errors.hpp"
#include "ltime/localtime.hpp"

namespace ltime {

namespace {

// Inner running integrals are computed this much tighter than the outer one.
constexpr double kInnerTightening = 1e-2;

// Carries q(u) = int_x^u beta (oriented from x) together with
//   s(u) = exp(2e q(u)) int_x^u k(v) exp(-2e q(v)) dv,
// a running integral kept on the scale of its integrand so that neither factor
// overflows. The integrand of the outer integral is outer(u, q, s).
template <class K, class Outer>
struct AccumRule {
    struct State {
        double q = 0.0;
        double s = 0.0;
    };
    const DiffusionModel& model;
    K& k;
    Outer& outer;
    double e;
    const QuadratureConfig& cfg;
    quad::Tolerance inner_tol;
    std::span<const double> breaks;

    std::pair<quad::Estimate, State> operator()(double from, double to, const State& start) {
        const auto pos = quad::gk15_nodes(from, to);
        std::array<double, 15> fv{};
        State cur = start;
        double prev = from;
        for (std::size_t i = 0; i < 15; ++i) {
            advance(cur, prev, pos[i]);
            prev = pos[i];
            fv[i] = outer(pos[i], cur.q, cur.s);
        }
        advance(cur, prev, to);
        return {quad::gk15_combine(from, to, fv), cur};
    }

    void advance(State& st, double a, double b) {
        if (a == b) return;
        // r(v) = q(v) - q(a) on the gap.
        auto g = [this](double v, double r) {
            const double kv = k(v);
            return kv == 0.0 ? 0.0 : kv * std::exp(-2.0 * e * r);
        };
        double r_b = 0.0;
        const double gap = integrate_scaled(model, a, b, 0.0, g, cfg, inner_tol, &r_b, breaks).value;
        if (st.s != 0.0 || gap != 0.0) st.s = std::exp(2.0 * e * r_b) * (st.s + gap);
        st.q += r_b;
    }
};

std::vector<double> merged_breaks(const DiffusionModel& model, const FunctionSpec& f) {
    std::vector<double> out = model.breakpoints();
    out.insert(out.end(), f.breakpoints().begin(), f.breakpoints().end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

quad::Tolerance inner_tolerance(const QuadratureConfig& cfg) {
    return {kInnerTightening * cfg.rel_tol, kInnerTightening * cfg.abs_tol};
}

// Weight |f|/a^2 (or f/a^2), zero where f vanishes.
struct Weight {
    const DiffusionModel& model;
    const FunctionSpec& f;
    bool absolute;
    bool* saw_negative;

    double operator()(double u) const {
        double fv = f(u);
        if (fv < 0.0 && saw_negative) *saw_negative = true;
        if (absolute) fv = std::fabs(fv);
        if (fv == 0.0) return 0.0;
        const double av = model.a(u);
        return fv / (av * av);
    }
};

// int_x^inf w Phi(u,+inf) du, rewritten by Fubini as int_x^inf s(z) dz with
// s(z) = int_x^z w(u) phi(u,z) du.
TailVerdict right_tail(const DiffusionModel& model, const FunctionSpec& f, double x, bool absolute,
                       const QuadratureConfig& cfg, bool* saw_negative = nullptr) {
    Weight w{model, f, absolute, saw_negative};
    auto outer = [](double, double, double s) { return s; };
    const std::vector<double> breaks = merged_breaks(model, f);
    AccumRule<Weight, decltype(outer)> rule{model, w, outer, -1.0, cfg, inner_tolerance(cfg), breaks};
    return integrate_tail_rule(rule, x, Direction::Up, {}, cfg, breaks);
}

// int_{-inf}^x w Phi(u,+inf)^p phi(u,x)^(1-p) du for p in [0, 1). Going down
// from x, Phi(u,+inf) = phi(u,x) Phi(x,+inf) + int_u^x phi(u,z) dz is the
// carried s.
TailVerdict left_tail(const DiffusionModel& model, const FunctionSpec& f, double x, bool absolute, double p,
                      double phi_x, const QuadratureConfig& cfg, bool* saw_negative = nullptr) {
    Weight w{model, f, absolute, saw_negative};
    const std::vector<double> breaks = merged_breaks(model, f);
    TailVerdict v;
    if (p == 0.0) {
        auto g = [&](double u, double q) {
            const double wv = w(u);
            return wv == 0.0 ? 0.0 : wv * std::exp(2.0 * q);
        };
        v = integrate_tail(model, x, Direction::Down, g, cfg, breaks);
    } else {
        auto k = [](double) { return -1.0; };
        auto outer = [&](double u, double q, double s) {
            const double wv = w(u);
            if (wv == 0.0) return 0.0;
            return wv * std::exp(p * std::log(s) + 2.0 * (1.0 - p) * q);
        };
        AccumRule<decltype(k), decltype(outer)> rule{model, k, outer, 1.0, cfg, inner_tolerance(cfg), breaks};
        v = integrate_tail_rule(rule, x, Direction::Down, {0.0, phi_x}, cfg, breaks);
    }
    if (v.value) *v.value = -*v.value;
    return v;
}

// Upward-transient copy of the problem, mirrored when the model drifts down.
struct Oriented {
    DiffusionModel model;
    FunctionSpec f;
    double sign;
};

Oriented orient(const DiffusionModel& model, const FunctionSpec& f, const QuadratureConfig& cfg) {
    const Regime r = classify(model, cfg);
    switch (r) {
        case Regime::TransientUp: return {model, f, 1.0};
        case Regime::TransientDown: return {model.reflected(), f.reflected(), -1.0};
        case Regime::TransientBoth:
            throw PreconditionFailed("mean and moment bounds of J are only available for models transient in one "
                                     "direction; this model is TransientBoth");
        case Regime::Recurrent: break;
    }
    throw RecurrentModelError("J is undefined for a recurrent model");
}

[[noreturn]] void diverged(const char* what, double x) {
    std::ostringstream msg;
    msg << what << " diverges for x=" << x;
    throw PreconditionFailed(msg.str());
}

constexpr const char* kRightName = "int_x^inf |f|/a^2 Phi(u,+inf) du (I1)";
constexpr const char* kLeftName = "int_{-inf}^x |f|/a^2 phi(u,x) du";

double finite_value(const TailVerdict& v, const char* what, double x) {
    if (!v.finite()) diverged(what, x);
    return *v.value;
}

double bracket(const Oriented& o, double x, const QuadratureConfig& cfg) {
    const double right = finite_value(right_tail(o.model, o.f, x, true, cfg), kRightName, o.sign * x);
    const double phi_x = finite_phi_limit(o.model, x, Direction::Up, cfg);
    const double left = finite_value(left_tail(o.model, o.f, x, true, 0.0, phi_x, cfg), kLeftName, o.sign * x);
    return right + phi_x * left;
}

PotentialBound refine(const Oriented& o, const QuadratureConfig& cfg, const std::vector<double>& grid,
                      const std::vector<double>& values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;

    PotentialBound out;
    out.value = values[best];
    out.argmax = grid[best];
    // A flat plateau reaching the edge is not a warning; a slope towards it is.
    const double flat = 1e-8 * std::max(std::fabs(values[best]), 1e-300);
    if (best == 0) out.boundary_warning = values[0] - values[1] > flat;
    if (best + 1 == values.size()) out.boundary_warning = values[best] - values[best - 1] > flat;

    // Golden-section search on the bracketing cell.
    double a = grid[best == 0 ? 0 : best - 1];
    double b = grid[std::min(best + 1, grid.size() - 1)];
    const double inv_phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    double fc = bracket(o, c, cfg), fd = bracket(o, d, cfg);
    for (int it = 0; it < 60 && (b - a) > 1e-8 * std::max(1.0, std::fabs(a) + std::fabs(b)); ++it) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = bracket(o, c, cfg);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = bracket(o, d, cfg);
        }
    }
    for (auto [xv, fv] : {std::pair{c, fc}, {d, fd}}) {
        if (fv > out.value) {
            out.value = fv;
            out.argmax = xv;
        }
    }
    out.value *= 2.0;
    out.argmax *= o.sign;
    return out;
}

std::vector<double> make_grid(const SearchWindow& search, double sign) {
    std::vector<double> grid(static_cast<std::size_t>(search.n_grid));
    double lo = search.x_lo, hi = search.x_hi;
    if (sign < 0) {
        lo = -search.x_hi;
        hi = -search.x_lo;
    }
    for (int i = 0; i < search.n_grid; ++i)
        grid[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (search.n_grid - 1);
    return grid;
}

}  // namespace

std::string_view to_string(AsVerdict v) {
    switch (v) {
        case AsVerdict::FiniteAS: return "FiniteAS";
        case AsVerdict::InfiniteAS: return "InfiniteAS";
        case AsVerdict::NotApplicable: return "NotApplicable";
    }
    return "?";
}

void SearchWindow::validate() const {
    if (!(x_lo < x_hi)) throw PreconditionFailed("search window needs x_lo < x_hi");
    if (n_grid < 2) throw PreconditionFailed("search window needs n_grid >= 2");
}

TailVerdict i1(const DiffusionModel& model, const FunctionSpec& f, const QuadratureConfig& cfg) {
    if (!phi_limit(model, 0.0, Direction::Up, cfg).finite())
        throw PreconditionFailed("I1 needs Phi(0,+inf) finite");
    return right_tail(model, f, 0.0, true, cfg);
}

TailVerdict i2(const DiffusionModel& model, const FunctionSpec& f, const QuadratureConfig& cfg) {
    if (!phi_limit(model, 0.0, Direction::Down, cfg).finite())
        throw PreconditionFailed("I2 needs Phi(0,-inf) finite");
    // I1 of the mirrored problem.
    return right_tail(model.reflected(), f.reflected(), 0.0, true, cfg);
}

Finiteness finiteness(const DiffusionModel& model, const FunctionSpec& f, const QuadratureConfig& cfg) {
    const Classification c = classify_detailed(model, cfg);
    if (c.regime == Regime::Recurrent) throw RecurrentModelError("J is undefined for a recurrent model unless f = 0");
    Finiteness out;
    out.regime = c.regime;
    if (c.up.finite()) {
        out.i1 = i1(model, f, cfg);
        out.on_a_plus = out.i1->finite() ? AsVerdict::FiniteAS : AsVerdict::InfiniteAS;
    }
    if (c.down.finite()) {
        out.i2 = i2(model, f, cfg);
        out.on_a_minus = out.i2->finite() ? AsVerdict::FiniteAS : AsVerdict::InfiniteAS;
    }
    return out;
}

double mean_j(const DiffusionModel& model, const FunctionSpec& f, double x, const QuadratureConfig& cfg) {
    const Oriented o = orient(model, f, cfg);
    const double ox = o.sign * x;
    const double phi_x = finite_phi_limit(o.model, ox, Direction::Up, cfg);
    // Integrability of |f| first; signed values only when f went negative.
    bool negative = false;
    double right = finite_value(right_tail(o.model, o.f, ox, true, cfg, &negative), kRightName, x);
    double left = finite_value(left_tail(o.model, o.f, ox, true, 0.0, phi_x, cfg, &negative), kLeftName, x);
    if (negative) {
        right = finite_value(right_tail(o.model, o.f, ox, false, cfg), kRightName, x);
        if (left != 0.0) left = finite_value(left_tail(o.model, o.f, ox, false, 0.0, phi_x, cfg), kLeftName, x);
    }
    return 2.0 * right + 2.0 * phi_x * left;
}

double moment_bound_j(const DiffusionModel& model, const FunctionSpec& f, double x, int k,
                      const QuadratureConfig& cfg) {
    if (k < 1) throw PreconditionFailed("moment order must be >= 1");
    const Oriented o = orient(model, f, cfg);
    const double ox = o.sign * x;
    const double inv_k = 1.0 / k;
    const double phi_x = finite_phi_limit(o.model, ox, Direction::Up, cfg);
    const double right = finite_value(right_tail(o.model, o.f, ox, true, cfg), kRightName, x);
    const double left = finite_value(left_tail(o.model, o.f, ox, true, 1.0 - inv_k, phi_x, cfg),
                                     "int_{-inf}^x |f|/a^2 Phi(u,+inf)^(1-1/k) phi(u,x)^(1/k) du", x);
    return 2.0 * std::pow(factorial(k), inv_k) * (right + std::pow(phi_x, inv_k) * left);
}

double potential_integrand(const DiffusionModel& model, const FunctionSpec& f, double x,
                           const QuadratureConfig& cfg) {
    const Oriented o = orient(model, f, cfg);
    return bracket(o, o.sign * x, cfg);
}

PotentialBound potential_bound_serial(const DiffusionModel& model, const FunctionSpec& f,
                                      const QuadratureConfig& cfg, const SearchWindow& search) {
    search.validate();
    const Oriented o = orient(model, f, cfg);
    const std::vector<double> grid = make_grid(search, o.sign);
    std::vector<double> values(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) values[i] = bracket(o, grid[i], cfg);
    return refine(o, cfg, grid, values);
}

PotentialBound potential_bound(const DiffusionModel& model, const FunctionSpec& f, const QuadratureConfig& cfg,
                               const SearchWindow& search, int threads) {
    search.validate();
    const Oriented o = orient(model, f, cfg);
    const std::vector<double> grid = make_grid(search, o.sign);
    const int n = static_cast<int>(grid.size());
    std::vector<double> values(grid.size());
    std::vector<std::exception_ptr> failures(grid.size());
    const int nthreads = threads > 0 ? threads : omp_get_max_threads();

#pragma omp parallel for schedule(dynamic) num_threads(nthreads)
    for (int i = 0; i < n; ++i) {
        try {
            values[static_cast<std::size_t>(i)] = bracket(o, grid[static_cast<std::size_t>(i)], cfg);
        } catch (...) {
            failures[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (const auto& e : failures)
        if (e) std::rethrow_exception(e);
    return refine(o, cfg, grid, values);
}

double exp_moment_bound(double potential, double lambda) {
    if (!(lambda > 0.0)) throw PreconditionFailed("lambda must be positive");
    if (!(lambda * potential < 1.0)) {
        std::ostringstream msg;
        msg << "lambda * P0 = " << lambda * potential << " >= 1";
        throw LambdaTooLarge(msg.str());
    }
    return 1.0 / (1.0 - lambda * potential);
}

double exp_moment_bound(const DiffusionModel& model, const FunctionSpec& f, double lambda,
                        const QuadratureConfig& cfg, const SearchWindow& search, int threads) {
    return exp_moment_bound(potential_bound(model, f, cfg, search, threads).value, lambda);
}

FunctionalReport analyze_functional(const DiffusionModel& model, const FunctionSpec& f, double x,
                                    const std::vector<int>& k_list, const std::vector<double>& lambda_list,
                                    const SearchWindow& search, const QuadratureConfig& cfg, int threads) {
    FunctionalReport out;
    out.finiteness = finiteness(model, f, cfg);
    try {
        out.mean = mean_j(model, f, x, cfg);
    } catch (const PreconditionFailed& e) {
        out.notes.push_back(std::string("mean: ") + e.what());
    }
    for (int k : k_list) {
        try {
            out.moment_bounds[k] = moment_bound_j(model, f, x, k, cfg);
        } catch (const PreconditionFailed& e) {
            out.notes.push_back("moment bound k=" + std::to_string(k) + ": " + e.what());
        }
    }
    try {
        out.potential = potential_bound(model, f, cfg, search, threads);
        if (out.potential->boundary_warning)
            out.notes.push_back("potential: maximum sits on the search window boundary");
    } catch (const PreconditionFailed& e) {
        out.notes.push_back(std::string("potential: ") + e.what());
    }
    for (double lambda : lambda_list) {
        if (!out.potential) break;
        try {
            out.exp_moment_bounds.emplace_back(lambda, exp_moment_bound(out.potential->value, lambda));
        } catch (const Error& e) {
            out.notes.push_back("exp moment bound: " + std::string(e.what()));
        }
    }
    return out;
}

}  // namespace ltime
