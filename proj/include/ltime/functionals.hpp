#pragma once

// Integral functionals J^x(f) = int_0^inf f(X_s^x) ds of a transient diffusion:
// almost-sure finiteness, the exact mean, k-th moment bounds, the potential
// bound P0 and the exponential-moment bound 1/(1 - lambda P0).
//
// Mean and bounds are formulated for upward-transient models; downward ones
// are handled by mirroring x -> -x. Models transient in both directions only
// get finiteness verdicts.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ltime/scale.hpp"

namespace ltime {

class FunctionSpec {
public:
    explicit FunctionSpec(expr::Expr f) : f_(std::move(f)), breaks_(expr::jump_points(f_)) {}
    explicit FunctionSpec(std::string_view text) : FunctionSpec(expr::Expr(text)) {}

    double operator()(double x) const { return f_(sign_ * x); }
    FunctionSpec reflected() const {
        FunctionSpec out = *this;
        out.sign_ = -sign_;
        for (double& x : out.breaks_) x = -x;
        std::reverse(out.breaks_.begin(), out.breaks_.end());
        return out;
    }
    const expr::Expr& expr() const noexcept { return f_; }
    // Jump points of step() factors.
    const std::vector<double>& breakpoints() const noexcept { return breaks_; }

private:
    expr::Expr f_;
    double sign_ = 1.0;
    std::vector<double> breaks_;
};

enum class AsVerdict { FiniteAS, InfiniteAS, NotApplicable };
std::string_view to_string(AsVerdict v);

struct SearchWindow {
    double x_lo = -10.0;
    double x_hi = 10.0;
    int n_grid = 41;

    void validate() const;
};

// I1(f) = int_0^{+inf} |f|/a^2 Phi(y,+inf) dy. Requires Phi(0,+inf) finite.
TailVerdict i1(const DiffusionModel& model, const FunctionSpec& f, const QuadratureConfig& cfg = {});
// I2(f) = int_{-inf}^0 |f|/a^2 |Phi(y,-inf)| dy. Requires Phi(0,-inf) finite.
TailVerdict i2(const DiffusionModel& model, const FunctionSpec& f, const QuadratureConfig& cfg = {});

struct Finiteness {
    Regime regime = Regime::Recurrent;
    AsVerdict on_a_plus = AsVerdict::NotApplicable;   // paths escaping to +inf
    AsVerdict on_a_minus = AsVerdict::NotApplicable;  // paths escaping to -inf
    std::optional<TailVerdict> i1;
    std::optional<TailVerdict> i2;
};

// RecurrentModelError when the model is recurrent.
Finiteness finiteness(const DiffusionModel& model, const FunctionSpec& f, const QuadratureConfig& cfg = {});

// E J^x(f) = 2 int_x^inf f/a^2 Phi(u,+inf) du + 2 Phi(x,+inf) int_{-inf}^x f/a^2 phi(u,x) du.
// PreconditionFailed names the divergent integral (checked with |f|).
double mean_j(const DiffusionModel& model, const FunctionSpec& f, double x, const QuadratureConfig& cfg = {});

// Upper bound on (E|J|^k)^(1/k), not on E|J|^k. Valid for k >= 1; k = 1
// reproduces the mean of J(|f|).
double moment_bound_j(const DiffusionModel& model, const FunctionSpec& f, double x, int k,
                      const QuadratureConfig& cfg = {});

struct PotentialBound {
    double value = 0.0;   // P0
    double argmax = 0.0;  // location of the refined maximum
    bool boundary_warning = false;  // best grid point on the window edge
};

// P0 = 2 sup_x [int_x^inf |f|/a^2 Phi(u,+inf) du + Phi(x,+inf) int_{-inf}^x |f|/a^2 phi(u,x) du],
// with the sup taken over a grid on the window followed by golden-section
// refinement. The grid is evaluated in parallel.
PotentialBound potential_bound(const DiffusionModel& model, const FunctionSpec& f, const QuadratureConfig& cfg,
                               const SearchWindow& search, int threads = 0);
// Reference version evaluating the grid on the calling thread.
PotentialBound potential_bound_serial(const DiffusionModel& model, const FunctionSpec& f,
                                      const QuadratureConfig& cfg, const SearchWindow& search);

// Bracketed expression of P0 at a single starting point: half the mean of J(|f|).
double potential_integrand(const DiffusionModel& model, const FunctionSpec& f, double x, const QuadratureConfig& cfg);

// 1 / (1 - lambda P0); LambdaTooLarge unless lambda P0 < 1.
double exp_moment_bound(double potential, double lambda);
double exp_moment_bound(const DiffusionModel& model, const FunctionSpec& f, double lambda, const QuadratureConfig& cfg,
                        const SearchWindow& search, int threads = 0);

struct FunctionalReport {
    Finiteness finiteness;
    std::optional<double> mean;
    std::map<int, double> moment_bounds;
    std::optional<PotentialBound> potential;
    std::vector<std::pair<double, double>> exp_moment_bounds;  // (lambda, bound)
    std::vector<std::string> notes;                            // why an entry is absent
};

FunctionalReport analyze_functional(const DiffusionModel& model, const FunctionSpec& f, double x,
                                    const std::vector<int>& k_list, const std::vector<double>& lambda_list,
                                    const SearchWindow& search, const QuadratureConfig& cfg = {}, int threads = 0);

}  // namespace ltime
