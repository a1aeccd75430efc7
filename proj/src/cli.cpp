#include "ltime/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <numbers>
#include <ostream>
#include <sstream>
#include <variant>

#include "ltime/errors.hpp"
#include "ltime/functionals.hpp"
#include "ltime/montecarlo.hpp"
#include "ltime/scale.hpp"

namespace ltime::cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Scenario model

struct ClassifyTask {};

struct LocalTimeTask {
    double x = 0.0;
    double y = 0.0;
    int k_max = 3;
    std::vector<double> survival_grid;
    std::optional<std::string> survival_csv;
};

struct FunctionalTask {
    std::string f;
    double x = 0.0;
    std::vector<int> k_list{2};
    std::vector<double> lambda_list;
    SearchWindow window;
};

struct SimulateTask {
    double x = 0.0;
    double y = 0.0;
    std::optional<std::string> f;
    mc::SimConfig sim;
    bool compare = true;
    std::vector<double> lambda_list;
    SearchWindow window;
    std::optional<std::string> csv;
    std::vector<double> survival_grid;
    std::optional<std::string> survival_csv;
};

struct VerifyTask {
    std::vector<std::string> checks;
};

using Task = std::variant<ClassifyTask, LocalTimeTask, FunctionalTask, SimulateTask, VerifyTask>;

struct Scenario {
    std::string name;
    std::string a, b;
    QuadratureConfig quad;
    std::uint64_t seed = 0;
    std::vector<Task> tasks;
};

// Collects input errors (wrong types, bad expressions) and precondition
// violations (values out of range) with a path to the offending field.
struct Diagnostics {
    std::vector<std::string> errors;
    std::vector<std::string> violations;

    void error(const std::string& where, const std::string& what) { errors.push_back(where + ": " + what); }
    void violation(const std::string& where, const std::string& what) { violations.push_back(where + ": " + what); }
};

template <class T>
bool read(const json& obj, const char* key, T& out, Diagnostics& d, const std::string& where) {
    if (!obj.contains(key)) return false;
    const json& v = obj.at(key);
    try {
        if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number()) throw std::invalid_argument("expected a number");
        } else if constexpr (std::is_same_v<T, int> || std::is_same_v<T, std::uint64_t> ||
                             std::is_same_v<T, std::size_t>) {
            if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
            if constexpr (!std::is_same_v<T, int>)
                if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)
                    throw std::invalid_argument("expected a nonnegative integer");
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw std::invalid_argument("expected true or false");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw std::invalid_argument("expected a string");
        }
        out = v.get<T>();
        return true;
    } catch (const std::exception& e) {
        d.error(where + "." + key, e.what());
        return false;
    }
}

template <class T>
void read_list(const json& obj, const char* key, std::vector<T>& out, Diagnostics& d, const std::string& where) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    const bool integral = std::is_integral_v<T>;
    if (!v.is_array() || !std::all_of(v.begin(), v.end(), [&](const json& e) {
            return integral ? e.is_number_integer() : e.is_number();
        })) {
        d.error(where + "." + key, integral ? "expected an array of integers" : "expected an array of numbers");
        return;
    }
    out = v.get<std::vector<T>>();
}

void read_optional_string(const json& obj, const char* key, std::optional<std::string>& out, Diagnostics& d,
                          const std::string& where) {
    std::string s;
    if (read(obj, key, s, d, where)) out = s;
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, Diagnostics& d,
                const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return key == k; }))
            d.error(where, "unknown field '" + key + "'");
    }
}

void check_expression(const std::string& text, Diagnostics& d, const std::string& where) {
    try {
        expr::Expr e(text);
    } catch (const ParseError& e) {
        d.error(where, "cannot parse '" + text + "': " + e.what());
    }
}

void read_window(const json& obj, SearchWindow& w, Diagnostics& d, const std::string& where) {
    if (!obj.contains("search_window")) return;
    const json& s = obj.at("search_window");
    const std::string at = where + ".search_window";
    if (!s.is_object()) {
        d.error(at, "expected an object");
        return;
    }
    check_keys(s, {"x_lo", "x_hi", "n_grid"}, d, at);
    read(s, "x_lo", w.x_lo, d, at);
    read(s, "x_hi", w.x_hi, d, at);
    read(s, "n_grid", w.n_grid, d, at);
    try {
        w.validate();
    } catch (const PreconditionFailed& e) {
        d.violation(at, e.what());
    }
}

void check_grid(const std::vector<double>& grid, Diagnostics& d, const std::string& where) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (grid[i] < 0.0) d.violation(where, "survival grid values must be >= 0");
        if (i > 0 && grid[i] < grid[i - 1]) d.violation(where, "survival grid must be nondecreasing");
    }
}

void check_lambdas(const std::vector<double>& lambdas, Diagnostics& d, const std::string& where) {
    for (double l : lambdas)
        if (!(l > 0.0)) d.violation(where, "lambda values must be positive");
}

void read_sim(const json& obj, mc::SimConfig& sim, double x, Diagnostics& d, const std::string& where) {
    if (obj.contains("sim")) {
        const json& s = obj.at("sim");
        const std::string at = where + ".sim";
        if (!s.is_object()) {
            d.error(at, "expected an object");
            return;
        }
        check_keys(s, {"dt", "t_max", "upper_barrier", "lower_barrier", "n_paths", "seed", "epsilon", "stop_on_hit"},
                   d, at);
        read(s, "dt", sim.dt, d, at);
        read(s, "t_max", sim.t_max, d, at);
        read(s, "upper_barrier", sim.upper_barrier, d, at);
        read(s, "lower_barrier", sim.lower_barrier, d, at);
        read(s, "n_paths", sim.n_paths, d, at);
        read(s, "seed", sim.seed, d, at);
        read(s, "epsilon", sim.epsilon, d, at);
        read(s, "stop_on_hit", sim.stop_on_hit, d, at);
    }
    try {
        sim.validate(x);
    } catch (const PreconditionFailed& e) {
        d.violation(where + ".sim", e.what());
    }
}

const std::vector<std::string>& verify_catalog();

Task parse_task(const json& t, const Scenario& sc, Diagnostics& d, const std::string& where) {
    if (!t.is_object() || t.size() != 1) {
        d.error(where, "a task is an object with exactly one key naming its type");
        return ClassifyTask{};
    }
    const std::string type = t.begin().key();
    const json& body = t.begin().value();
    const std::string at = where + "." + type;
    if (!body.is_object()) {
        d.error(at, "expected an object");
        return ClassifyTask{};
    }
    if (type == "classify") {
        check_keys(body, {}, d, at);
        return ClassifyTask{};
    }
    if (type == "localtime") {
        LocalTimeTask task;
        check_keys(body, {"x", "y", "k_max", "survival_grid", "survival_csv"}, d, at);
        if (!read(body, "x", task.x, d, at)) d.error(at, "missing field 'x'");
        if (!read(body, "y", task.y, d, at)) d.error(at, "missing field 'y'");
        read(body, "k_max", task.k_max, d, at);
        read_list(body, "survival_grid", task.survival_grid, d, at);
        read_optional_string(body, "survival_csv", task.survival_csv, d, at);
        if (task.k_max < 1) d.violation(at + ".k_max", "must be >= 1");
        check_grid(task.survival_grid, d, at + ".survival_grid");
        if (task.survival_csv && task.survival_grid.empty())
            d.violation(at + ".survival_grid", "needed (nonempty) when survival_csv is given");
        return task;
    }
    if (type == "functional") {
        FunctionalTask task;
        check_keys(body, {"f", "x", "k_list", "lambda_list", "search_window"}, d, at);
        if (!read(body, "f", task.f, d, at)) d.error(at, "missing field 'f'");
        else check_expression(task.f, d, at + ".f");
        read(body, "x", task.x, d, at);
        read_list(body, "k_list", task.k_list, d, at);
        read_list(body, "lambda_list", task.lambda_list, d, at);
        read_window(body, task.window, d, at);
        for (int k : task.k_list)
            if (k < 1) d.violation(at + ".k_list", "moment orders must be >= 1");
        check_lambdas(task.lambda_list, d, at + ".lambda_list");
        return task;
    }
    if (type == "simulate") {
        SimulateTask task;
        task.sim.seed = sc.seed;
        check_keys(body,
                   {"x", "y", "f", "sim", "compare", "lambda_list", "search_window", "csv", "survival_grid",
                    "survival_csv"},
                   d, at);
        if (!read(body, "x", task.x, d, at)) d.error(at, "missing field 'x'");
        if (!read(body, "y", task.y, d, at)) d.error(at, "missing field 'y'");
        read_optional_string(body, "f", task.f, d, at);
        if (task.f) check_expression(*task.f, d, at + ".f");
        read_sim(body, task.sim, task.x, d, at);
        read(body, "compare", task.compare, d, at);
        read_list(body, "lambda_list", task.lambda_list, d, at);
        read_window(body, task.window, d, at);
        read_optional_string(body, "csv", task.csv, d, at);
        read_list(body, "survival_grid", task.survival_grid, d, at);
        read_optional_string(body, "survival_csv", task.survival_csv, d, at);
        check_lambdas(task.lambda_list, d, at + ".lambda_list");
        if (!task.lambda_list.empty() && !task.f) d.violation(at + ".lambda_list", "needs a functional 'f'");
        check_grid(task.survival_grid, d, at + ".survival_grid");
        if (task.survival_csv && task.survival_grid.empty())
            d.violation(at + ".survival_grid", "needed (nonempty) when survival_csv is given");
        return task;
    }
    if (type == "verify") {
        VerifyTask task;
        check_keys(body, {"checks"}, d, at);
        if (body.contains("checks")) {
            const json& c = body.at("checks");
            if (!c.is_array() || !std::all_of(c.begin(), c.end(), [](const json& e) { return e.is_string(); }))
                d.error(at + ".checks", "expected an array of check names");
            else
                task.checks = c.get<std::vector<std::string>>();
        }
        const auto& catalog = verify_catalog();
        for (const std::string& name : task.checks)
            if (std::find(catalog.begin(), catalog.end(), name) == catalog.end())
                d.violation(at + ".checks", "unknown check '" + name + "'");
        if (task.checks.empty()) task.checks = catalog;
        return task;
    }
    d.error(where, "unknown task type '" + type + "'");
    return ClassifyTask{};
}

Scenario parse_scenario(const json& doc, const RunOptions& opts, Diagnostics& d) {
    Scenario sc;
    if (!doc.is_object()) {
        d.error("scenario", "expected an object");
        return sc;
    }
    check_keys(doc, {"name", "model", "quadrature", "seed", "tasks"}, d, "scenario");
    read(doc, "name", sc.name, d, "scenario");
    read(doc, "seed", sc.seed, d, "scenario");
    if (opts.seed) sc.seed = *opts.seed;

    if (!doc.contains("model") || !doc.at("model").is_object()) {
        d.error("model", "missing object with fields 'a' and 'b'");
    } else {
        const json& m = doc.at("model");
        check_keys(m, {"a", "b"}, d, "model");
        if (!read(m, "a", sc.a, d, "model")) d.error("model", "missing field 'a'");
        else check_expression(sc.a, d, "model.a");
        if (!read(m, "b", sc.b, d, "model")) d.error("model", "missing field 'b'");
        else check_expression(sc.b, d, "model.b");
    }

    if (doc.contains("quadrature")) {
        const json& q = doc.at("quadrature");
        if (!q.is_object()) {
            d.error("quadrature", "expected an object");
        } else {
            check_keys(q,
                       {"rel_tol", "abs_tol", "max_subdivisions", "tail_start", "tail_growth", "tail_rounds",
                        "divergence_ratio"},
                       d, "quadrature");
            read(q, "rel_tol", sc.quad.rel_tol, d, "quadrature");
            read(q, "abs_tol", sc.quad.abs_tol, d, "quadrature");
            read(q, "max_subdivisions", sc.quad.max_subdivisions, d, "quadrature");
            read(q, "tail_start", sc.quad.tail_start, d, "quadrature");
            read(q, "tail_growth", sc.quad.tail_growth, d, "quadrature");
            read(q, "tail_rounds", sc.quad.tail_rounds, d, "quadrature");
            read(q, "divergence_ratio", sc.quad.divergence_ratio, d, "quadrature");
            try {
                sc.quad.validate();
            } catch (const PreconditionFailed& e) {
                d.violation("quadrature", e.what());
            }
        }
    }

    if (doc.contains("tasks")) {
        const json& tasks = doc.at("tasks");
        if (!tasks.is_array()) {
            d.error("tasks", "expected an array");
        } else {
            for (std::size_t i = 0; i < tasks.size(); ++i)
                sc.tasks.push_back(parse_task(tasks[i], sc, d, "tasks[" + std::to_string(i) + "]"));
        }
    }
    if (opts.seed) {
        for (Task& t : sc.tasks)
            if (auto* s = std::get_if<SimulateTask>(&t)) s->sim.seed = *opts.seed;
    }
    return sc;
}

// ---------------------------------------------------------------------------
// Report helpers

// Non-finite numbers are written as tags: infinities as "Divergent", NaN as
// "Inconclusive".
ordered_json num(double v) {
    if (std::isfinite(v)) return v;
    return std::isnan(v) ? "Inconclusive" : "Divergent";
}

ordered_json verdict_json(const TailVerdict& v) {
    ordered_json out;
    out["kind"] = std::string(to_string(v.kind));
    if (v.value) out["value"] = num(*v.value);
    out["error_estimate"] = num(v.error_estimate);
    out["truncation_used"] = num(v.truncation_used);
    out["rounds"] = v.rounds;
    return out;
}

ordered_json law_json(const LocalTimeLaw& law) {
    return ordered_json{{"atom_prob", num(law.atom_prob)}, {"rate", num(law.rate)}};
}

ordered_json sim_json(const mc::SimConfig& s) {
    return ordered_json{{"dt", s.dt},
                        {"t_max", s.t_max},
                        {"upper_barrier", s.upper_barrier},
                        {"lower_barrier", s.lower_barrier},
                        {"n_paths", s.n_paths},
                        {"seed", s.seed},
                        {"epsilon", s.epsilon},
                        {"stop_on_hit", s.stop_on_hit}};
}

ordered_json window_json(const SearchWindow& w) {
    return ordered_json{{"x_lo", w.x_lo}, {"x_hi", w.x_hi}, {"n_grid", w.n_grid}};
}

ordered_json mean_json(const mc::MeanComparison& m) {
    return ordered_json{{"n", m.n},
                        {"empirical_mean", num(m.mean)},
                        {"empirical_variance", num(m.variance)},
                        {"std_error", num(m.std_error)},
                        {"analytic_mean", num(m.analytic)},
                        {"z_score", num(m.z_score)}};
}

ordered_json comparison_json(const mc::EmpiricalComparison& c) {
    return ordered_json{{"n", c.n},
                        {"empirical_mean", num(c.empirical_mean)},
                        {"empirical_variance", num(c.empirical_variance)},
                        {"analytic_mean", num(c.analytic_mean)},
                        {"mean_z_score", num(c.mean_z_score)},
                        {"ks_distance", num(c.ks_distance)},
                        {"atom_fraction", num(c.atom_fraction)}};
}

std::string timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm utc{};
    gmtime_r(&now, &utc);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
    return buf;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

// Exit-code class of a failure raised while running a task.
std::pair<int, std::string> classify_error(const std::exception& e) {
    if (dynamic_cast<const RecurrentModelError*>(&e)) return {kPreconditionFailed, "RecurrentModel"};
    if (dynamic_cast<const LambdaTooLarge*>(&e)) return {kPreconditionFailed, "LambdaTooLarge"};
    if (dynamic_cast<const PreconditionFailed*>(&e)) return {kPreconditionFailed, "PreconditionFailed"};
    if (dynamic_cast<const DomainError*>(&e)) return {kPreconditionFailed, "DomainError"};
    if (dynamic_cast<const InconclusiveError*>(&e)) return {kInconclusive, "Inconclusive"};
    if (dynamic_cast<const QuadratureError*>(&e)) return {kInconclusive, "QuadratureError"};
    return {kInconclusive, "Error"};
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

// ---------------------------------------------------------------------------
// Task runners

struct Context {
    const Scenario& sc;
    DiffusionModel model;
    int threads;
    std::filesystem::path base_dir;
};

ordered_json run_classify(const Context& c) {
    const Classification cl = classify_detailed(c.model, c.sc.quad);
    return ordered_json{{"regime", std::string(to_string(cl.regime))},
                        {"phi_plus", verdict_json(cl.up)},
                        {"phi_minus", verdict_json(cl.down)}};
}

ordered_json run_localtime(const Context& c, const LocalTimeTask& t) {
    const HittingReport hit = prob_never_hit(c.model, t.x, t.y, c.sc.quad);
    ordered_json out;
    out["regime"] = std::string(to_string(hit.regime));
    out["phi_plus"] = verdict_json(hit.phi_plus);
    out["phi_minus"] = verdict_json(hit.phi_minus);
    out["p_never_hit"] = num(hit.p_never_hit);
    const LocalTimeLaw law = local_time_law(c.model, t.x, t.y, c.sc.quad);
    out["law"] = law_json(law);
    ordered_json moments = ordered_json::array();
    for (int k = 1; k <= t.k_max; ++k) {
        ordered_json m{{"k", k}, {"moment", num(law_moment(law, k))}};
        if (hit.regime == Regime::TransientUp)
            m["moment_upward"] = num(local_time_moment_upward(c.model, t.x, t.y, k, c.sc.quad));
        moments.push_back(m);
    }
    out["moments"] = moments;
    if (!t.survival_grid.empty()) {
        ordered_json curve = ordered_json::array();
        for (double l : t.survival_grid) curve.push_back(ordered_json{{"l", l}, {"survival", num(survival(law, l))}});
        out["survival"] = curve;
    }
    if (t.survival_csv) {
        emit_survival_curve(law, t.survival_grid, resolve(c.base_dir, *t.survival_csv));
        out["survival_csv"] = *t.survival_csv;
    }
    return out;
}

ordered_json run_functional(const Context& c, const FunctionalTask& t) {
    const FunctionSpec f(t.f);
    const FunctionalReport r =
        analyze_functional(c.model, f, t.x, t.k_list, t.lambda_list, t.window, c.sc.quad, c.threads);
    ordered_json out;
    out["regime"] = std::string(to_string(r.finiteness.regime));
    out["i1"] = r.finiteness.i1 ? verdict_json(*r.finiteness.i1) : ordered_json();
    out["i2"] = r.finiteness.i2 ? verdict_json(*r.finiteness.i2) : ordered_json();
    out["verdict_on_a_plus"] = std::string(to_string(r.finiteness.on_a_plus));
    out["verdict_on_a_minus"] = std::string(to_string(r.finiteness.on_a_minus));
    out["mean"] = r.mean ? num(*r.mean) : ordered_json();
    ordered_json bounds = ordered_json::array();
    for (const auto& [k, v] : r.moment_bounds) bounds.push_back(ordered_json{{"k", k}, {"bound", num(v)}});
    out["moment_bounds"] = bounds;
    if (r.potential) {
        out["potential_bound"] = ordered_json{{"value", num(r.potential->value)},
                                              {"argmax", num(r.potential->argmax)},
                                              {"boundary_warning", r.potential->boundary_warning}};
    } else {
        out["potential_bound"] = nullptr;
    }
    ordered_json exp_bounds = ordered_json::array();
    for (const auto& [lambda, v] : r.exp_moment_bounds)
        exp_bounds.push_back(ordered_json{{"lambda", lambda}, {"bound", num(v)}});
    out["exp_moment_bounds"] = exp_bounds;
    out["notes"] = r.notes;
    return out;
}

// Runs `fn`, turning precondition failures of the analytic formulas into a note.
template <class F>
void attempt(ordered_json& notes, const std::string& what, F&& fn) {
    try {
        fn();
    } catch (const RecurrentModelError& e) {
        notes.push_back(what + ": " + e.what());
    } catch (const PreconditionFailed& e) {
        notes.push_back(what + ": " + e.what());
    } catch (const LambdaTooLarge& e) {
        notes.push_back(what + ": " + e.what());
    }
}

ordered_json run_simulate(const Context& c, const SimulateTask& t) {
    std::optional<FunctionSpec> f;
    if (t.f) f.emplace(*t.f);
    const mc::Ensemble e = mc::run_ensemble(c.model, t.x, t.y, f ? &*f : nullptr, t.sim, c.threads);

    ordered_json out;
    out["sim"] = sim_json(t.sim);
    out["warnings"] = t.sim.warnings(c.model);
    out["paths"] = e.paths.size();
    ordered_json exits;
    for (mc::ExitKind k : {mc::ExitKind::UpperBarrier, mc::ExitKind::LowerBarrier,
                           mc::ExitKind::StoppedAtTarget, mc::ExitKind::TimedOut,
                           mc::ExitKind::Failed})
        exits[std::string(mc::to_string(k))] = e.count(k);
    out["exits"] = exits;
    ordered_json failures = ordered_json::object();
    for (const auto& [msg, count] : e.failures) failures[msg] = count;
    out["failures"] = failures;

    const std::vector<double> ls = e.local_times();
    const std::vector<double> js = e.j_estimates();
    const std::size_t n = ls.size();
    out["hit_fraction"] = num(e.hit_fraction());
    if (n > 0) {
        const mc::MeanComparison lm = mc::compare_mean(ls, 0.0);
        out["local_time"] = ordered_json{{"mean", num(lm.mean)}, {"variance", num(lm.variance)},
                                         {"std_error", num(lm.std_error)}};
        if (f) {
            const mc::MeanComparison jm = mc::compare_mean(js, 0.0);
            out["j"] = ordered_json{{"mean", num(jm.mean)}, {"variance", num(jm.variance)},
                                    {"std_error", num(jm.std_error)}};
        }
    }

    if (t.csv) {
        const std::filesystem::path path = resolve(c.base_dir, *t.csv);
        std::ofstream csv = open_output(path);
        mc::write_paths_csv(csv, e.paths);
        if (!csv) throw IoError("failed writing " + path.string());
        out["csv"] = *t.csv;
    }

    if (!t.compare || n == 0) return out;
    ordered_json cmp;
    ordered_json notes = ordered_json::array();
    const QuadratureConfig& q = c.sc.quad;

    attempt(notes, "hitting", [&] {
        const double p_hit = 1.0 - prob_never_hit(c.model, t.x, t.y, q).p_never_hit;
        const double se = std::sqrt(std::max(p_hit * (1.0 - p_hit), 0.0) / static_cast<double>(n));
        const double emp = e.hit_fraction();
        cmp["hitting"] = ordered_json{{"analytic", num(p_hit)},
                                      {"empirical", num(emp)},
                                      {"std_error", num(se)},
                                      {"z_score", num(se > 0 ? (emp - p_hit) / se : 0.0)}};
    });
    std::optional<LocalTimeLaw> law;
    attempt(notes, "local_time", [&] {
        law = local_time_law(c.model, t.x, t.y, q);
        ordered_json lt = comparison_json(mc::compare_samples(ls, *law));
        lt["law"] = law_json(*law);
        cmp["local_time"] = lt;
    });
    if (f) {
        attempt(notes, "mean_j", [&] { cmp["mean_j"] = mean_json(mc::compare_mean(js, mean_j(c.model, *f, t.x, q))); });
        attempt(notes, "moment_bound", [&] {
            double m2 = 0.0;
            for (double v : js) m2 += v * v;
            const double rms = std::sqrt(m2 / static_cast<double>(js.size()));
            const double bound = moment_bound_j(c.model, *f, t.x, 2, q);
            cmp["moment_bound"] =
                ordered_json{{"k", 2}, {"empirical_root_moment", num(rms)}, {"bound", num(bound)}, {"holds", rms <= bound}};
        });
        if (!t.lambda_list.empty()) {
            attempt(notes, "exp_moment", [&] {
                const PotentialBound p = potential_bound(c.model, *f, q, t.window, c.threads);
                ordered_json rows = ordered_json::array();
                for (double lambda : t.lambda_list) {
                    if (!(lambda * p.value < 1.0)) {
                        notes.push_back("exp_moment: lambda " + std::to_string(lambda) + " has lambda * P0 >= 1");
                        continue;
                    }
                    std::vector<double> ex(js.size());
                    std::transform(js.begin(), js.end(), ex.begin(), [&](double v) { return std::exp(lambda * v); });
                    const double bound = exp_moment_bound(p.value, lambda);
                    const mc::MeanComparison m = mc::compare_mean(ex, bound);
                    rows.push_back(ordered_json{{"lambda", lambda},
                                                {"empirical_mean", num(m.mean)},
                                                {"std_error", num(m.std_error)},
                                                {"bound", num(bound)},
                                                {"holds", m.mean <= bound + 3.0 * m.std_error}});
                }
                cmp["exp_moment"] = ordered_json{{"potential_bound", num(p.value)}, {"rows", rows}};
            });
        }
    }
    if (t.survival_csv && law) {
        emit_survival_curve(*law, t.survival_grid, resolve(c.base_dir, *t.survival_csv), ls);
        out["survival_csv"] = *t.survival_csv;
    }
    out["comparisons"] = cmp;
    out["notes"] = notes;
    return out;
}

// ---------------------------------------------------------------------------
// Golden checks against the closed forms of the two reference models.

struct Check {
    double expected;
    double computed;
    double tolerance;
    std::string quantity;
};

using CheckFn = std::function<Check(const QuadratureConfig&)>;

const DiffusionModel& drifted() {
    static const DiffusionModel m("1", "1");
    return m;
}
const DiffusionModel& arctan_model() {
    static const DiffusionModel m("sqrt(x^2+1)", "x");
    return m;
}

// Worst point of a grid comparison.
Check worst_of(const std::string& what, double tol, const std::function<std::pair<double, double>(double)>& at) {
    Check worst{0.0, 0.0, tol, what};
    double worst_err = -1.0;
    for (int i = 0; i <= 40; ++i) {
        const double x = -5.0 + 0.25 * i;
        auto [exp, got] = at(x);
        if (std::fabs(got - exp) > worst_err) {
            worst_err = std::fabs(got - exp);
            worst = {exp, got, tol, what + " at x=" + std::to_string(x)};
        }
    }
    return worst;
}

const std::vector<std::pair<std::string, CheckFn>>& checks() {
    const double e2 = std::exp(-2.0);
    static const std::vector<std::pair<std::string, CheckFn>> table = {
        {"scale_drifted",
         [](const QuadratureConfig& q) {
             return worst_of("Phi(0,x) for a=1, b=1", 1e-8, [&](double x) {
                 return std::pair{0.5 * (1.0 - std::exp(-2.0 * x)), big_phi(drifted(), 0.0, x, q)};
             });
         }},
        {"scale_arctan",
         [](const QuadratureConfig& q) {
             return worst_of("Phi(0,x) for a=sqrt(x^2+1), b=x", 1e-8,
                             [&](double x) { return std::pair{std::atan(x), big_phi(arctan_model(), 0.0, x, q)}; });
         }},
        {"psi_drifted",
         [](const QuadratureConfig& q) {
             Check worst{1.0, 1.0, 1e-6, "psi0 for a=1, b=1"};
             for (double x : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
                 const double v = psi0(drifted(), x, q);
                 if (std::fabs(v - 1.0) >= std::fabs(worst.computed - 1.0)) worst.computed = v;
             }
             return worst;
         }},
        {"psi_arctan",
         [](const QuadratureConfig& q) {
             return Check{2.0 / std::numbers::pi, psi0(arctan_model(), 0.0, q), 1e-6, "psi0(0) for a=sqrt(x^2+1), b=x"};
         }},
        {"hitting_drifted",
         [e2](const QuadratureConfig& q) {
             return Check{1.0 - e2, prob_never_hit(drifted(), 1.0, 0.0, q).p_never_hit, 1e-8,
                          "P(never hit 0 from 1) for a=1, b=1"};
         }},
        {"moments_drifted",
         [](const QuadratureConfig& q) {
             Check worst{1.0, 1.0, 1e-10, "E L^k / k! at x=y=0 for a=1, b=1"};
             for (int k = 1; k <= 3; ++k) {
                 const double v = local_time_moment(drifted(), 0.0, 0.0, k, q) / factorial(k);
                 if (std::fabs(v - 1.0) >= std::fabs(worst.computed - 1.0)) worst.computed = v;
             }
             return worst;
         }},
        {"mean_j_drifted",
         [](const QuadratureConfig& q) {
             return Check{1.0, mean_j(drifted(), FunctionSpec("step(x)*step(1-x)"), 0.0, q), 1e-8,
                          "E J(1[0,1]) from 0 for a=1, b=1"};
         }},
        {"mean_j_drifted_x2",
         [](const QuadratureConfig& q) {
             return Check{std::exp(-4.0) * (std::exp(2.0) - 1.0) / 2.0,
                          mean_j(drifted(), FunctionSpec("step(x)*step(1-x)"), 2.0, q), 1e-8,
                          "E J(1[0,1]) from 2 for a=1, b=1"};
         }},
        {"moment_bound_drifted",
         [](const QuadratureConfig& q) {
             return Check{std::sqrt(2.0), moment_bound_j(drifted(), FunctionSpec("step(x)*step(1-x)"), 0.0, 2, q),
                          1e-8, "(E J^2)^(1/2) bound for 1[0,1] from 0, a=1, b=1"};
         }},
        {"potential_drifted",
         [](const QuadratureConfig& q) {
             return Check{1.0, potential_bound(drifted(), FunctionSpec("step(x)*step(1-x)"), q, {}).value, 1e-7,
                          "P0 for 1[0,1], a=1, b=1"};
         }},
    };
    return table;
}

const std::vector<std::string>& verify_catalog() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& [name, fn] : checks()) out.push_back(name);
        return out;
    }();
    return names;
}

ordered_json run_verify(const Context& c, const VerifyTask& t) {
    ordered_json rows = ordered_json::array();
    bool all = true;
    for (const std::string& name : t.checks) {
        const auto it = std::find_if(checks().begin(), checks().end(), [&](const auto& p) { return p.first == name; });
        const Check r = it->second(c.sc.quad);
        const double err = std::fabs(r.computed - r.expected);
        const bool passed = err <= r.tolerance;
        all = all && passed;
        rows.push_back(ordered_json{{"name", name},
                                    {"quantity", r.quantity},
                                    {"expected", num(r.expected)},
                                    {"computed", num(r.computed)},
                                    {"abs_error", num(err)},
                                    {"tolerance", r.tolerance},
                                    {"passed", passed}});
    }
    return ordered_json{{"checks", rows}, {"all_passed", all}};
}

ordered_json task_inputs(const Task& task) {
    return std::visit(
        [](const auto& t) -> ordered_json {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, ClassifyTask>) {
                return ordered_json::object();
            } else if constexpr (std::is_same_v<T, LocalTimeTask>) {
                return ordered_json{{"x", t.x}, {"y", t.y}, {"k_max", t.k_max}, {"survival_grid", t.survival_grid}};
            } else if constexpr (std::is_same_v<T, FunctionalTask>) {
                return ordered_json{{"f", t.f},
                                    {"x", t.x},
                                    {"k_list", t.k_list},
                                    {"lambda_list", t.lambda_list},
                                    {"search_window", window_json(t.window)}};
            } else if constexpr (std::is_same_v<T, SimulateTask>) {
                ordered_json in{{"x", t.x}, {"y", t.y}, {"f", t.f ? ordered_json(*t.f) : ordered_json()},
                                {"compare", t.compare}, {"lambda_list", t.lambda_list}};
                if (!t.lambda_list.empty()) in["search_window"] = window_json(t.window);
                return in;
            } else {
                return ordered_json{{"checks", t.checks}};
            }
        },
        task);
}

const char* task_type(const Task& task) {
    static constexpr const char* names[] = {"classify", "localtime", "functional", "simulate", "verify"};
    return names[task.index()];
}

}  // namespace

int env_threads() {
    const char* v = std::getenv("LTIME_THREADS");
    if (!v) return 0;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (end == v || *end != '\0' || n < 1 || n > 4096) return 0;
    return static_cast<int>(n);
}

void emit_survival_curve(const LocalTimeLaw& law, std::span<const double> l_grid, const std::filesystem::path& path,
                         std::span<const double> samples) {
    if (l_grid.empty()) throw PreconditionFailed("survival grid is empty");
    for (std::size_t i = 1; i < l_grid.size(); ++i)
        if (l_grid[i] < l_grid[i - 1]) throw PreconditionFailed("survival grid must be nondecreasing");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());

    std::ofstream out = open_output(path);
    auto fmt = [](double v, bool decimal) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.10g", v);
        std::string s(buf);
        if (decimal && s.find_first_of(".e") == std::string::npos) s += ".0";
        return s;
    };
    out << "l,survival_analytic";
    if (!sorted.empty()) out << ",survival_empirical";
    out << '\n';
    for (double l : l_grid) {
        out << fmt(l, false) << ',' << fmt(survival(law, l), true);
        if (!sorted.empty()) {
            const auto above = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), l);
            out << ',' << fmt(static_cast<double>(above) / static_cast<double>(sorted.size()), true);
        }
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

Outcome run_scenario(const json& doc, const RunOptions& opts, const std::filesystem::path& base_dir,
                     std::ostream* progress) {
    Outcome outcome;
    Diagnostics diag;
    const Scenario sc = parse_scenario(doc, opts, diag);
    if (!diag.errors.empty()) {
        outcome.exit_code = kInputError;
        outcome.errors = diag.errors;
        return outcome;
    }

    ordered_json& report = outcome.report;
    report["tool"] = "ltime";
    report["version"] = kToolVersion;
    report["generated_at"] = timestamp();
    report["scenario"] = sc.name;
    report["model"] = ordered_json{{"a", sc.a}, {"b", sc.b}};
    report["quadrature"] = ordered_json{{"rel_tol", sc.quad.rel_tol},
                                        {"abs_tol", sc.quad.abs_tol},
                                        {"max_subdivisions", sc.quad.max_subdivisions},
                                        {"tail_start", sc.quad.tail_start},
                                        {"tail_growth", sc.quad.tail_growth},
                                        {"tail_rounds", sc.quad.tail_rounds},
                                        {"divergence_ratio", sc.quad.divergence_ratio}};
    report["seed"] = sc.seed;
    report["violations"] = diag.violations;
    report["tasks"] = ordered_json::array();

    if (!diag.violations.empty()) {
        outcome.exit_code = kPreconditionFailed;
        report["status"] = "precondition_failed";
        report["exit_code"] = outcome.exit_code;
        return outcome;
    }

    const int threads = opts.threads > 0 ? opts.threads : env_threads();
    Context ctx{sc, DiffusionModel(sc.a, sc.b), threads, base_dir};
    int exit_code = kOk;
    bool io_failed = false;
    for (std::size_t i = 0; i < sc.tasks.size(); ++i) {
        const Task& task = sc.tasks[i];
        if (progress) *progress << "[" << (i + 1) << "/" << sc.tasks.size() << "] " << task_type(task) << '\n';
        ordered_json entry;
        entry["type"] = task_type(task);
        entry["inputs"] = task_inputs(task);
        try {
            ordered_json result = std::visit(
                [&](const auto& t) -> ordered_json {
                    using T = std::decay_t<decltype(t)>;
                    if constexpr (std::is_same_v<T, ClassifyTask>) return run_classify(ctx);
                    else if constexpr (std::is_same_v<T, LocalTimeTask>) return run_localtime(ctx, t);
                    else if constexpr (std::is_same_v<T, FunctionalTask>) return run_functional(ctx, t);
                    else if constexpr (std::is_same_v<T, SimulateTask>) return run_simulate(ctx, t);
                    else return run_verify(ctx, t);
                },
                task);
            entry["status"] = "ok";
            entry["result"] = std::move(result);
        } catch (const IoError& e) {
            io_failed = true;
            entry["status"] = "error";
            entry["error"] = ordered_json{{"kind", "IoError"}, {"message", e.what()}};
            if (progress) *progress << "error: " << e.what() << '\n';
        } catch (const Error& e) {
            auto [code, kind] = classify_error(e);
            exit_code = std::max(exit_code, code);
            entry["status"] = "error";
            entry["error"] = ordered_json{{"kind", kind}, {"message", e.what()}};
        }
        report["tasks"].push_back(std::move(entry));
    }
    // An unwritable output file outranks analytic failures.
    if (io_failed) exit_code = kInputError;
    outcome.exit_code = exit_code;
    report["status"] = exit_code == kOk                   ? "ok"
                       : exit_code == kInputError         ? "io_error"
                       : exit_code == kPreconditionFailed ? "precondition_failed"
                                                          : "inconclusive";
    report["exit_code"] = exit_code;
    return outcome;
}

int run(const RunOptions& opts, std::ostream& err) {
    std::ifstream in(opts.scenario);
    if (!in) {
        err << "error: cannot open scenario " << opts.scenario << '\n';
        return kInputError;
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        err << "error: " << opts.scenario.string() << ": " << e.what() << '\n';
        return kInputError;
    }

    std::filesystem::path base = opts.output.parent_path();
    if (base.empty()) base = ".";
    Outcome outcome;
    try {
        outcome = run_scenario(doc, opts, base, opts.quiet ? nullptr : &err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    }
    if (!outcome.errors.empty()) {
        for (const std::string& msg : outcome.errors) err << "error: " << msg << '\n';
        return outcome.exit_code;
    }
    for (const auto& v : outcome.report["violations"]) err << "precondition: " << v.get<std::string>() << '\n';

    std::ofstream out(opts.output);
    if (!out) {
        err << "error: cannot write report " << opts.output << '\n';
        return kInputError;
    }
    out << outcome.report.dump(2) << '\n';
    if (!out) {
        err << "error: failed writing report " << opts.output << '\n';
        return kInputError;
    }
    if (!opts.quiet) err << "report written to " << opts.output.string() << " (exit " << outcome.exit_code << ")\n";
    return outcome.exit_code;
}

}  // namespace ltime::cli
