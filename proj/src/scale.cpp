#include "ltime/scale.hpp"

#include <algorithm>
#include <sstream>

#include "ltime/errors.hpp"

namespace ltime {

namespace {

// Consecutive non-decaying increments needed to certify divergence.
constexpr int kDivergenceRounds = 4;
// Exactly vanishing segments before any mass is seen (support of an integrand
// further out) do not count as rounds, up to this many.
constexpr int kLeadingZeroRounds = 4;

}  // namespace

void QuadratureConfig::validate() const {
    if (!(rel_tol > 0.0) || !(abs_tol > 0.0)) throw PreconditionFailed("quadrature tolerances must be positive");
    if (!(tail_growth > 1.0)) throw PreconditionFailed("tail_growth must exceed 1");
    if (!(tail_start > 0.0)) throw PreconditionFailed("tail_start must be positive");
    if (max_subdivisions < 1 || tail_rounds < 1) throw PreconditionFailed("subdivision and round limits must be positive");
    if (!(divergence_ratio > 0.0)) throw PreconditionFailed("divergence_ratio must be positive");
}

QuadratureConfig QuadratureConfig::tightened(double factor) const {
    QuadratureConfig out = *this;
    out.rel_tol *= factor;
    out.abs_tol *= factor;
    return out;
}

std::string_view to_string(TailKind kind) { return kind == TailKind::Finite ? "Finite" : "Divergent"; }

std::string_view to_string(Direction dir) { return dir == Direction::Up ? "+inf" : "-inf"; }

std::string_view to_string(Regime regime) {
    switch (regime) {
        case Regime::Recurrent: return "Recurrent";
        case Regime::TransientUp: return "TransientUp";
        case Regime::TransientDown: return "TransientDown";
        case Regime::TransientBoth: return "TransientBoth";
    }
    return "?";
}

// ---------------------------------------------------------------------------

DiffusionModel::DiffusionModel(expr::Expr a, expr::Expr b) : a_(std::move(a)), b_(std::move(b)) {
    breaks_ = expr::jump_points(a_);
    for (double x : expr::jump_points(b_)) breaks_.push_back(x);
    std::sort(breaks_.begin(), breaks_.end());
    breaks_.erase(std::unique(breaks_.begin(), breaks_.end()), breaks_.end());
}

DiffusionModel::DiffusionModel(std::string_view a, std::string_view b)
    : DiffusionModel(expr::Expr(a), expr::Expr(b)) {}

double DiffusionModel::a(double x) const {
    const double v = a_(sign_ * x);
    if (v == 0.0) throw DomainError("zero diffusion coefficient", a_.source(), x);
    return v;
}

double DiffusionModel::b(double x) const { return sign_ * b_(sign_ * x); }

double DiffusionModel::beta(double x) const {
    const double av = a(x);
    return b(x) / (av * av);
}

DiffusionModel DiffusionModel::reflected() const {
    DiffusionModel out = *this;
    out.sign_ = -sign_;
    for (double& x : out.breaks_) x = -x;
    std::reverse(out.breaks_.begin(), out.breaks_.end());
    return out;
}

// ---------------------------------------------------------------------------

namespace detail {

double beta_integral(const DiffusionModel& model, double from, double to, const QuadratureConfig& cfg) {
    if (from == to) return 0.0;
    if (model.constant_beta()) return model.beta(from) * (to - from);
    const double tol = std::max(1e-3 * cfg.rel_tol, 1e-14);
    auto beta = [&model](double u) { return model.beta(u); };
    return quad::integrate(beta, from, to, {tol, tol}, cfg.limits(), cfg.stop, model.breakpoints()).value;
}

std::optional<TailVerdict> TailTracker::feed(const quad::Estimate& segment, double t) {
    if (sum_ == 0.0 && segment.value == 0.0 && segment.error == 0.0 && leading_zeros_ < kLeadingZeroRounds) {
        ++leading_zeros_;
        return std::nullopt;
    }
    ++rounds_;
    sum_ += segment.value;
    quad_error_ += segment.error;
    if (rounds_ == 1) return std::nullopt;  // base piece, not an increment

    const double increment = std::fabs(segment.value);
    std::optional<double> extrapolated;
    if (rounds_ >= 3) {
        double ratio = 0.0;
        if (prev_increment_ > 0.0) ratio = increment / prev_increment_;
        else if (increment > 0.0) ratio = std::numeric_limits<double>::infinity();
        last_ratio_ = ratio;

        non_decaying_ = ratio >= cfg_.divergence_ratio ? non_decaying_ + 1 : 0;
        if (non_decaying_ >= kDivergenceRounds) {
            TailVerdict v;
            v.kind = TailKind::Divergent;
            v.truncation_used = t;
            v.error_estimate = increment;
            v.rounds = rounds_;
            return v;
        }
        // Geometric extrapolation of the remaining tail.
        if (increment == 0.0) extrapolated = sum_;
        else if (ratio < 1.0) extrapolated = sum_ + segment.value * ratio / (1.0 - ratio);
    }
    prev_increment_ = increment;

    bool settled = false;
    double error = 0.0;
    if (extrapolated && prev_extrapolated_) {
        error = std::fabs(*extrapolated - *prev_extrapolated_) + quad_error_;
        settled = error <= std::max(cfg_.abs_tol, cfg_.rel_tol * std::fabs(*extrapolated));
    }
    const bool prev_settled = prev_settled_;
    prev_settled_ = settled;
    prev_extrapolated_ = extrapolated;
    if (settled && prev_settled) {
        TailVerdict v;
        v.kind = TailKind::Finite;
        v.value = *extrapolated;
        v.truncation_used = t;
        v.error_estimate = error;
        v.rounds = rounds_;
        return v;
    }
    return std::nullopt;
}

TailVerdict TailTracker::overflowed(double t) const {
    if (non_decaying_ == 0) {
        std::ostringstream msg;
        msg << "tail integral overflowed at truncation " << t << " without a non-decay signal";
        throw InconclusiveError(msg.str());
    }
    TailVerdict v;
    v.kind = TailKind::Divergent;
    v.truncation_used = t;
    v.error_estimate = std::numeric_limits<double>::infinity();
    v.rounds = rounds_ + 1;
    return v;
}

void TailTracker::inconclusive(double t) const {
    std::ostringstream msg;
    msg << "tail integral inconclusive after " << rounds_ << " rounds: truncation " << t << ", partial value "
        << sum_ << ", last increment " << prev_increment_ << ", last increment ratio " << last_ratio_;
    throw InconclusiveError(msg.str());
}

}  // namespace detail

// ---------------------------------------------------------------------------

double phi(const DiffusionModel& model, double x0, double x, const QuadratureConfig& cfg) {
    cfg.validate();
    if (x0 == x) return 1.0;
    if (model.constant_beta()) return std::exp(-2.0 * model.beta(x0) * (x - x0));
    auto beta = [&model](double u) { return model.beta(u); };
    const double tol = 0.1 * cfg.rel_tol;
    const double q = quad::integrate(beta, x0, x, {tol, tol}, cfg.limits(), cfg.stop, model.breakpoints()).value;
    return std::exp(-2.0 * q);
}

double big_phi(const DiffusionModel& model, double x0, double x, const QuadratureConfig& cfg) {
    cfg.validate();
    auto density = [](double, double q) { return std::exp(-2.0 * q); };
    return integrate_scaled(model, x0, x, 0.0, density, cfg, cfg.tolerance(), nullptr, model.breakpoints()).value;
}

TailVerdict phi_limit(const DiffusionModel& model, double x0, Direction dir, const QuadratureConfig& cfg) {
    auto density = [](double, double q) { return std::exp(-2.0 * q); };
    return integrate_tail(model, x0, dir, density, cfg, model.breakpoints());
}

double finite_phi_limit(const DiffusionModel& model, double x0, Direction dir, const QuadratureConfig& cfg) {
    TailVerdict v = phi_limit(model, x0, dir, cfg);
    if (!v.finite()) {
        std::ostringstream msg;
        msg << "Phi(" << x0 << ", " << to_string(dir) << ") diverges";
        throw PreconditionFailed(msg.str());
    }
    return *v.value;
}

Regime regime_from_tails(const TailVerdict& up, const TailVerdict& down) {
    if (up.finite() && down.finite()) return Regime::TransientBoth;
    if (up.finite()) return Regime::TransientUp;
    if (down.finite()) return Regime::TransientDown;
    return Regime::Recurrent;
}

Classification classify_detailed(const DiffusionModel& model, const QuadratureConfig& cfg) {
    TailVerdict up = phi_limit(model, 0.0, Direction::Up, cfg);
    TailVerdict down = phi_limit(model, 0.0, Direction::Down, cfg);
    return {regime_from_tails(up, down), up, down};
}

Regime classify(const DiffusionModel& model, const QuadratureConfig& cfg) {
    return classify_detailed(model, cfg).regime;
}

double apply_generator(const DiffusionModel& model, const std::function<double(double)>& g, double x, double h) {
    if (!(h > 0.0)) throw PreconditionFailed("finite-difference step must be positive");
    const double gp = g(x + h), g0 = g(x), gm = g(x - h);
    const double av = model.a(x);
    const double second = (gp - 2.0 * g0 + gm) / (h * h);
    const double first = (gp - gm) / (2.0 * h);
    return 0.5 * av * av * second + model.b(x) * first;
}

}  // namespace ltime
