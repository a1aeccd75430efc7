#include "ltime/localtime.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ltime/errors.hpp"

namespace ltime {

namespace {

struct Tails {
    TailVerdict up;
    TailVerdict down;
    Regime regime;
};

Tails tails_at(const DiffusionModel& model, double y, const QuadratureConfig& cfg) {
    Tails t{phi_limit(model, y, Direction::Up, cfg), phi_limit(model, y, Direction::Down, cfg), Regime::Recurrent};
    t.regime = regime_from_tails(t.up, t.down);
    return t;
}

double never_hit(const DiffusionModel& model, double x, double y, const Tails& t, const QuadratureConfig& cfg) {
    if (x == y) return 0.0;
    const TailVerdict& far = x > y ? t.up : t.down;
    if (!far.finite()) return 0.0;
    const double p = big_phi(model, y, x, cfg) / *far.value;
    return std::clamp(p, 0.0, 1.0);
}

double rate_from(const Tails& t, double y) {
    if (t.regime == Regime::Recurrent) {
        std::ostringstream msg;
        msg << "both scale tails diverge at y=" << y << "; the local time is a.s. infinite";
        throw RecurrentModelError(msg.str());
    }
    double r = 0.0;
    if (t.up.finite()) r += 1.0 / *t.up.value;
    if (t.down.finite()) r -= 1.0 / *t.down.value;
    return 0.5 * r;
}

void check_order(int k) {
    if (k < 1) throw PreconditionFailed("moment order must be a positive integer");
}

}  // namespace

void LocalTimeLaw::validate() const {
    if (!(atom_prob >= 0.0 && atom_prob <= 1.0)) throw PreconditionFailed("atom_prob must lie in [0, 1]");
    if (!(rate > 0.0) || !std::isfinite(rate)) throw PreconditionFailed("rate must be positive and finite");
}

double survival(const LocalTimeLaw& law, double l) {
    if (!(l >= 0.0)) throw PreconditionFailed("survival is defined for l >= 0");
    return (1.0 - law.atom_prob) * std::exp(-law.rate * l);
}

double cdf(const LocalTimeLaw& law, double l) {
    if (l < 0.0) return 0.0;
    return 1.0 - survival(law, l);
}

double factorial(int k) {
    double out = 1.0;
    for (int i = 2; i <= k; ++i) out *= i;
    return out;
}

double law_moment(const LocalTimeLaw& law, int k) {
    check_order(k);
    return (1.0 - law.atom_prob) * factorial(k) / std::pow(law.rate, k);
}

HittingReport prob_never_hit(const DiffusionModel& model, double x, double y, const QuadratureConfig& cfg) {
    Tails t = tails_at(model, y, cfg);
    HittingReport out;
    out.p_never_hit = never_hit(model, x, y, t, cfg);
    out.regime = t.regime;
    out.phi_plus = t.up;
    out.phi_minus = t.down;
    return out;
}

double psi0(const DiffusionModel& model, double x, const QuadratureConfig& cfg) {
    return rate_from(tails_at(model, x, cfg), x);
}

LocalTimeLaw local_time_law(const DiffusionModel& model, double x, double y, const QuadratureConfig& cfg) {
    Tails t = tails_at(model, y, cfg);
    LocalTimeLaw law;
    law.rate = rate_from(t, y);
    law.atom_prob = never_hit(model, x, y, t, cfg);
    law.validate();
    return law;
}

double local_time_moment(const DiffusionModel& model, double x, double y, int k, const QuadratureConfig& cfg) {
    check_order(k);
    return law_moment(local_time_law(model, x, y, cfg), k);
}

double local_time_moment_upward(const DiffusionModel& model, double x, double y, int k,
                                const QuadratureConfig& cfg) {
    check_order(k);
    Tails t = tails_at(model, y, cfg);
    if (t.regime != Regime::TransientUp)
        throw PreconditionFailed("closed-form moments require an upward-transient model, got " +
                                 std::string(to_string(t.regime)));
    const double tail_y = *t.up.value;
    if (x <= y) return factorial(k) * std::pow(2.0 * tail_y, k);
    const double tail_x = finite_phi_limit(model, x, Direction::Up, cfg);
    return std::pow(2.0, k) * factorial(k) * std::pow(tail_y, k - 1) * phi(model, y, x, cfg) * tail_x;
}

}  // namespace ltime
