#pragma once

// Globally adaptive Gauss-Kronrod (7/15) quadrature on oriented intervals.
//
// The driver is written against a "rule": a callable that integrates one
// piece [from, to] given a state carried in from the left end, and returns the
// state at the right end. Plain integrals carry no state; the scale-function
// integrals carry the running value of the inner integral of b/a^2.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stop_token>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ltime/errors.hpp"

namespace ltime::quad {

struct Tolerance {
    double rel;
    double abs;
};

struct Estimate {
    double value = 0.0;
    double error = 0.0;
};

// The integrand produced a non-finite value.
class Overflow : public QuadratureError {
public:
    using QuadratureError::QuadratureError;
};

namespace detail {

inline constexpr std::array<double, 8> kKronrodNodes{
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};

inline constexpr std::array<double, 8> kKronrodWeights{
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};

// Gauss weights for Kronrod nodes 1, 3, 5 and the centre.
inline constexpr std::array<double, 4> kGaussWeights{
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

}  // namespace detail

// Positions of the 15 nodes of [from, to] ordered from `from` toward `to`.
inline std::array<double, 15> gk15_nodes(double from, double to) {
    const double centre = 0.5 * (from + to);
    const double half = 0.5 * (to - from);
    std::array<double, 15> pos{};
    for (int j = 0; j < 7; ++j) {
        pos[static_cast<std::size_t>(j)] = centre - half * detail::kKronrodNodes[static_cast<std::size_t>(j)];
        pos[static_cast<std::size_t>(14 - j)] = centre + half * detail::kKronrodNodes[static_cast<std::size_t>(j)];
    }
    pos[7] = centre;
    return pos;
}

// Combine integrand values at gk15_nodes(from, to) into a signed estimate with
// the QUADPACK error heuristic.
inline Estimate gk15_combine(double from, double to, const std::array<double, 15>& fv) {
    using namespace detail;
    const double half = 0.5 * (to - from);
    const double fc = fv[7];
    double resk = kKronrodWeights[7] * fc;
    double resg = kGaussWeights[3] * fc;
    double resabs = std::fabs(resk);
    for (std::size_t j = 0; j < 7; ++j) {
        const double f1 = fv[j];
        const double f2 = fv[14 - j];
        resk += kKronrodWeights[j] * (f1 + f2);
        resabs += kKronrodWeights[j] * (std::fabs(f1) + std::fabs(f2));
        if (j % 2 == 1) resg += kGaussWeights[j / 2] * (f1 + f2);
    }
    const double mean = 0.5 * resk;
    double resasc = kKronrodWeights[7] * std::fabs(fc - mean);
    for (std::size_t j = 0; j < 7; ++j)
        resasc += kKronrodWeights[j] * (std::fabs(fv[j] - mean) + std::fabs(fv[14 - j] - mean));

    const double ah = std::fabs(half);
    resabs *= ah;
    resasc *= ah;
    double err = std::fabs((resk - resg) * half);
    if (resasc != 0.0 && err != 0.0) err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
    constexpr double eps = std::numeric_limits<double>::epsilon();
    if (resabs > std::numeric_limits<double>::min() / (50.0 * eps)) err = std::max(50.0 * eps * resabs, err);
    return {resk * half, err};
}

template <class F>
Estimate gk15(F&& f, double from, double to) {
    const auto pos = gk15_nodes(from, to);
    std::array<double, 15> fv{};
    for (std::size_t i = 0; i < 15; ++i) fv[i] = f(pos[i]);
    return gk15_combine(from, to, fv);
}

struct Limits {
    int max_depth = 60;
    std::size_t max_pieces = 100000;
};

// Drives a rule `R` with
//   using State = ...;
//   std::pair<Estimate, State> operator()(double from, double to, const State&);
// to global accuracy max(tol.abs, tol.rel * |value|). `end_state`, when given,
// receives the state at `to`. Points of `breaks` inside the interval (known
// discontinuities) start out as piece boundaries.
template <class R>
Estimate adaptive(R& rule, double from, double to, const typename R::State& start, Tolerance tol,
                  Limits limits, const std::stop_token& stop, typename R::State* end_state = nullptr,
                  std::span<const double> breaks = {}) {
    using State = typename R::State;
    struct Piece {
        double from, to;
        Estimate est;
        State start;
        State end;
        int depth;
    };
    auto by_error = [](const Piece& a, const Piece& b) { return a.est.error < b.est.error; };
    auto check = [](const Estimate& e, double a, double b) {
        if (!std::isfinite(e.value) || !std::isfinite(e.error))
            throw Overflow("non-finite integrand on [" + std::to_string(std::min(a, b)) + ", " +
                           std::to_string(std::max(a, b)) + "]");
    };

    if (from == to) {
        if (end_state) *end_state = start;
        return {};
    }

    // Below this the 50 eps roundoff floor of the rule is unreachable.
    const double rel = std::max(tol.rel, 100.0 * std::numeric_limits<double>::epsilon());
    std::vector<double> cuts;
    for (double b : breaks)
        if (b > std::min(from, to) && b < std::max(from, to)) cuts.push_back(b);
    if (from < to) std::sort(cuts.begin(), cuts.end());
    else std::sort(cuts.begin(), cuts.end(), std::greater<>());
    cuts.push_back(to);

    std::vector<Piece> heap;
    double total = 0.0;
    double total_err = 0.0;
    {
        double left = from;
        State state = start;
        for (double right : cuts) {
            if (right == left) continue;
            auto [est, end] = rule(left, right, state);
            check(est, left, right);
            total += est.value;
            total_err += est.error;
            heap.push_back({left, right, est, std::move(state), end, 0});
            state = std::move(end);
            left = right;
        }
        if (end_state) *end_state = state;
        std::make_heap(heap.begin(), heap.end(), by_error);
    }

    for (;;) {
        if (stop.stop_requested()) throw Cancelled();
        if (total_err <= std::max(tol.abs, rel * std::fabs(total))) break;

        std::pop_heap(heap.begin(), heap.end(), by_error);
        Piece worst = std::move(heap.back());
        heap.pop_back();

        const double mid = 0.5 * (worst.from + worst.to);
        if (worst.depth >= limits.max_depth || mid == worst.from || mid == worst.to ||
            heap.size() + 2 > limits.max_pieces) {
            throw QuadratureError("quadrature did not converge near [" +
                                  std::to_string(std::min(worst.from, worst.to)) + ", " +
                                  std::to_string(std::max(worst.from, worst.to)) +
                                  "], error estimate " + std::to_string(total_err));
        }

        auto [left, left_end] = rule(worst.from, mid, worst.start);
        check(left, worst.from, mid);
        auto [right, right_end] = rule(mid, worst.to, left_end);
        check(right, mid, worst.to);

        total += left.value + right.value - worst.est.value;
        total_err += left.error + right.error - worst.est.error;

        heap.push_back({worst.from, mid, left, worst.start, left_end, worst.depth + 1});
        std::push_heap(heap.begin(), heap.end(), by_error);
        heap.push_back({mid, worst.to, right, std::move(left_end), std::move(right_end), worst.depth + 1});
        std::push_heap(heap.begin(), heap.end(), by_error);
    }

    // Re-sum to shed the drift of the incremental updates.
    Estimate out;
    for (const Piece& p : heap) {
        out.value += p.est.value;
        out.error += p.est.error;
    }
    return out;
}

template <class F>
struct PlainRule {
    using State = std::monostate;
    F& f;
    std::pair<Estimate, State> operator()(double from, double to, const State&) { return {gk15(f, from, to), {}}; }
};

// Signed integral of f over the oriented interval [from, to].
template <class F>
Estimate integrate(F&& f, double from, double to, Tolerance tol, Limits limits = {},
                   const std::stop_token& stop = {}, std::span<const double> breaks = {}) {
    PlainRule<std::remove_reference_t<F>> rule{f};
    return adaptive(rule, from, to, std::monostate{}, tol, limits, stop, nullptr, breaks);
}

}  // namespace ltime::quad
