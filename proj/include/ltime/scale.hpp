#pragma once

// Scale density phi(x0, x) = exp(-2 * int_{x0}^{x} b/a^2), scale function
// Phi(x0, x) = int_{x0}^{x} phi(x0, z) dz, their improper limits at +-infinity
// and the four-way regime of a diffusion dX = b(X) dt + a(X) dW.

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <stop_token>
#include <string>
#include <string_view>
#include <vector>

#include "ltime/expr.hpp"
#include "ltime/quadrature.hpp"

namespace ltime {

struct QuadratureConfig {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    int max_subdivisions = 60;  // bisection depth
    double tail_start = 1.0;
    double tail_growth = 2.0;
    int tail_rounds = 60;
    double divergence_ratio = 0.999;
    std::stop_token stop;

    // Throws PreconditionFailed on non-positive tolerances or growth <= 1.
    void validate() const;

    // Same settings with both tolerances multiplied by `factor`; used for
    // integrals nested inside integrands.
    QuadratureConfig tightened(double factor) const;

    quad::Tolerance tolerance() const { return {rel_tol, abs_tol}; }
    quad::Limits limits() const { return {max_subdivisions, 100000}; }
};

enum class TailKind { Finite, Divergent };
enum class Direction { Up, Down };
enum class Regime { Recurrent, TransientUp, TransientDown, TransientBoth };

std::string_view to_string(TailKind kind);
std::string_view to_string(Direction dir);
std::string_view to_string(Regime regime);

struct TailVerdict {
    TailKind kind = TailKind::Divergent;
    std::optional<double> value;  // present iff Finite
    double truncation_used = 0.0;
    double error_estimate = 0.0;
    int rounds = 0;

    bool finite() const noexcept { return kind == TailKind::Finite; }
};

class DiffusionModel {
public:
    DiffusionModel(expr::Expr a, expr::Expr b);
    DiffusionModel(std::string_view a, std::string_view b);

    // a(x); a zero value is a DomainError.
    double a(double x) const;
    double b(double x) const;
    double beta(double x) const;  // b/a^2

    // The mirrored process -X: coefficients a(-x) and -b(-x).
    DiffusionModel reflected() const;
    bool is_reflected() const noexcept { return sign_ < 0.0; }

    // True when b/a^2 does not depend on x.
    bool constant_beta() const noexcept { return a_.is_constant() && b_.is_constant(); }

    const expr::Expr& a_expr() const noexcept { return a_; }
    const expr::Expr& b_expr() const noexcept { return b_; }

    // Known jump points of a and b, used as initial quadrature breaks.
    const std::vector<double>& breakpoints() const noexcept { return breaks_; }

private:
    expr::Expr a_;
    expr::Expr b_;
    double sign_ = 1.0;
    std::vector<double> breaks_;
};

// ---------------------------------------------------------------------------
// Integration along the scale
//
// Integrates g(u, q(u)) over the oriented interval [from, to], where
// q(u) = q_from + int_{from}^{u} b/a^2 is carried piecewise through the
// adaptive refinement instead of being recomputed per node.

namespace detail {

double beta_integral(const DiffusionModel& model, double from, double to, const QuadratureConfig& cfg);

template <class G>
struct ScaledRule {
    using State = double;
    const DiffusionModel& model;
    G& g;
    const QuadratureConfig& cfg;

    std::pair<quad::Estimate, double> operator()(double from, double to, const double& q_from) {
        const auto pos = quad::gk15_nodes(from, to);
        std::array<double, 15> fv{};
        double q = q_from;
        double prev = from;
        for (std::size_t i = 0; i < 15; ++i) {
            q += beta_integral(model, prev, pos[i], cfg);
            prev = pos[i];
            fv[i] = g(pos[i], q);
        }
        q += beta_integral(model, prev, to, cfg);
        return {quad::gk15_combine(from, to, fv), q};
    }
};

// Tracks successive tail rounds and decides Finite / Divergent.
class TailTracker {
public:
    explicit TailTracker(const QuadratureConfig& cfg) : cfg_(cfg) {}

    // Feed the segment ending at `t`; returns a verdict once one is reached.
    std::optional<TailVerdict> feed(const quad::Estimate& segment, double t);

    // The integrand overflowed on the segment ending at `t`.
    TailVerdict overflowed(double t) const;

    [[noreturn]] void inconclusive(double t) const;

private:
    const QuadratureConfig& cfg_;
    int rounds_ = 0;
    double sum_ = 0.0;
    double quad_error_ = 0.0;
    double prev_increment_ = 0.0;
    double last_ratio_ = std::nan("");
    std::optional<double> prev_extrapolated_;
    bool prev_settled_ = false;
    int non_decaying_ = 0;
    int leading_zeros_ = 0;
};

}  // namespace detail

// `breaks` are initial piece boundaries, normally the model's breakpoints
// merged with those of g.
template <class G>
quad::Estimate integrate_scaled(const DiffusionModel& model, double from, double to, double q_from, G&& g,
                                const QuadratureConfig& cfg, quad::Tolerance tol, double* q_to = nullptr,
                                std::span<const double> breaks = {}) {
    detail::ScaledRule<std::remove_reference_t<G>> rule{model, g, cfg};
    return quad::adaptive(rule, from, to, q_from, tol, cfg.limits(), cfg.stop, q_to, breaks);
}

// Improper integral driven by an arbitrary carried-state rule (see
// quad::adaptive), evaluated on the truncation points
// start +- tail_start * tail_growth^n.
template <class R>
TailVerdict integrate_tail_rule(R& rule, double start, Direction dir, typename R::State state,
                                const QuadratureConfig& cfg, std::span<const double> breaks = {}) {
    cfg.validate();
    const double sign = dir == Direction::Up ? 1.0 : -1.0;
    const quad::Tolerance segment_tol{0.1 * cfg.rel_tol, 0.1 * cfg.abs_tol};
    detail::TailTracker tracker(cfg);
    double pos = start;
    double span = cfg.tail_start;
    for (int n = 0; n < cfg.tail_rounds; ++n, span *= cfg.tail_growth) {
        const double t = start + sign * span;
        typename R::State next{};
        quad::Estimate seg;
        try {
            seg = quad::adaptive(rule, pos, t, state, segment_tol, cfg.limits(), cfg.stop, &next, breaks);
        } catch (const quad::Overflow&) {
            return tracker.overflowed(t);
        }
        pos = t;
        state = std::move(next);
        if (auto verdict = tracker.feed(seg, t)) return *verdict;
    }
    tracker.inconclusive(pos);
}

// Improper integral int_{start}^{+-inf} g(u, q(u)) du with q(start) = 0.
template <class G>
TailVerdict integrate_tail(const DiffusionModel& model, double start, Direction dir, G&& g,
                           const QuadratureConfig& cfg, std::span<const double> breaks = {}) {
    detail::ScaledRule<std::remove_reference_t<G>> rule{model, g, cfg};
    return integrate_tail_rule(rule, start, dir, 0.0, cfg, breaks);
}

double phi(const DiffusionModel& model, double x0, double x, const QuadratureConfig& cfg = {});
double big_phi(const DiffusionModel& model, double x0, double x, const QuadratureConfig& cfg = {});
TailVerdict phi_limit(const DiffusionModel& model, double x0, Direction dir, const QuadratureConfig& cfg = {});

// Value of Phi(x0, +-inf), or PreconditionFailed naming the divergent side.
double finite_phi_limit(const DiffusionModel& model, double x0, Direction dir, const QuadratureConfig& cfg);

struct Classification {
    Regime regime;
    TailVerdict up;    // Phi(0, +inf)
    TailVerdict down;  // Phi(0, -inf)
};

Regime regime_from_tails(const TailVerdict& up, const TailVerdict& down);
Classification classify_detailed(const DiffusionModel& model, const QuadratureConfig& cfg = {});
Regime classify(const DiffusionModel& model, const QuadratureConfig& cfg = {});

// Central-difference approximation of (a^2/2) g'' + b g' at x with step h.
double apply_generator(const DiffusionModel& model, const std::function<double(double)>& g, double x, double h);

}  // namespace ltime
