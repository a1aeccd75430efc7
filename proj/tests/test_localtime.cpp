#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "ltime/errors.hpp"
#include "ltime/localtime.hpp"

using namespace ltime;
using std::numbers::pi;

namespace {

const DiffusionModel kDrifted("1", "1");
const DiffusionModel kArctan("sqrt(x^2+1)", "x");
const DiffusionModel kWobbly("1 + 0.3*sin(x)", "0.5 + 0.2*cos(2*x)");

// Rate for the arctan model from its closed-form scale tails.
double arctan_rate(double x) {
    const double t = std::atan(x);
    return 2.0 * pi / ((1 + x * x) * (pi * pi - 4 * t * t));
}

double arctan_never_hit(double x, double y) {
    if (x == y) return 0.0;
    if (x > y) return 1.0 - (pi - 2 * std::atan(x)) / (pi - 2 * std::atan(y));
    return 1.0 - (pi + 2 * std::atan(x)) / (pi + 2 * std::atan(y));
}

}  // namespace

TEST_CASE("never-hit probabilities") {
    CHECK(std::fabs(prob_never_hit(kDrifted, 1.0, 0.0).p_never_hit - (1 - std::exp(-2.0))) < 1e-10);
    CHECK(prob_never_hit(kDrifted, 0.7, 0.7).p_never_hit == 0.0);
    CHECK(prob_never_hit(kArctan, -2.0, -2.0).p_never_hit == 0.0);
    HittingReport below = prob_never_hit(kDrifted, -1.0, 0.0);
    CHECK(below.p_never_hit == 0.0);
    CHECK(below.phi_minus.kind == TailKind::Divergent);
    CHECK(below.regime == Regime::TransientUp);

    for (auto [x, y] : {std::pair{1.0, 0.0}, {-1.0, 0.5}, {2.5, -1.0}, {-3.0, -0.5}}) {
        CHECK(std::fabs(prob_never_hit(kArctan, x, y).p_never_hit - arctan_never_hit(x, y)) < 1e-9);
    }
}

TEST_CASE("psi0") {
    for (double x : {-2.0, -0.5, 0.0, 1.0, 3.0}) {
        CHECK(std::fabs(psi0(kDrifted, x) - 1.0) < 1e-9);
        CHECK(std::fabs(psi0(DiffusionModel("1", "-1"), x) - 1.0) < 1e-9);
    }
    CHECK(std::fabs(psi0(kArctan, 0.0) - 2.0 / pi) < 1e-9);
    for (double x : {-1.5, 0.5, 2.0})
        CHECK(std::fabs(psi0(kArctan, x) - arctan_rate(x)) < 1e-8 * arctan_rate(x));
    CHECK_THROWS_AS(psi0(DiffusionModel("1", "0"), 0.0), RecurrentModelError);
}

TEST_CASE("psi0 is invariant under reflection") {
    // Reflection through the model flag and through rewritten expressions.
    DiffusionModel rewritten("1 + 0.3*sin(-x)", "-(0.5 + 0.2*cos(2*(-x)))");
    for (double x : {-1.3, 0.0, 0.8, 2.2}) {
        double base = psi0(kWobbly, x);
        CHECK(std::fabs(psi0(kWobbly.reflected(), -x) - base) <= 1e-6 * base);
        CHECK(std::fabs(psi0(rewritten, -x) - base) <= 1e-6 * base);
        double arc = psi0(kArctan, x);
        CHECK(std::fabs(psi0(kArctan.reflected(), -x) - arc) <= 1e-6 * arc);
    }
}

TEST_CASE("local time law examples") {
    LocalTimeLaw up = local_time_law(kDrifted, 0.0, 1.0);
    CHECK(up.atom_prob == 0.0);
    CHECK(std::fabs(up.rate - 1.0) < 1e-9);

    LocalTimeLaw down = local_time_law(kDrifted, 1.0, 0.0);
    CHECK(std::fabs(down.atom_prob - (1 - std::exp(-2.0))) < 1e-10);
    CHECK(std::fabs((1 - down.atom_prob) - std::exp(-2.0)) < 1e-10);
    CHECK(std::fabs(down.rate - 1.0) < 1e-9);

    LocalTimeLaw arc = local_time_law(kArctan, 0.0, 0.0);
    CHECK(arc.atom_prob == 0.0);
    CHECK(std::fabs(arc.rate - 2.0 / pi) < 1e-9);

    CHECK_THROWS_AS(local_time_law(DiffusionModel("1", "0"), 0.0, 1.0), RecurrentModelError);
}

TEST_CASE("survival") {
    CHECK(survival({0.0, 1.0}, 0.0) == 1.0);
    CHECK(survival({0.5, 2.0}, 0.0) == 0.5);
    CHECK(survival({0.0, 1.0}, 1.0) == doctest::Approx(0.3678794412).epsilon(1e-10));
    CHECK_THROWS_AS(survival({0.0, 1.0}, -0.1), PreconditionFailed);
    CHECK(cdf({0.25, 1.0}, 0.0) == 0.25);
    CHECK(cdf({0.25, 1.0}, -1.0) == 0.0);
}

TEST_CASE("moments") {
    CHECK(std::fabs(local_time_moment(kDrifted, 0.0, 0.0, 1) - 1.0) < 1e-9);
    CHECK(std::fabs(local_time_moment(kDrifted, 1.0, 0.0, 1) - std::exp(-2.0)) < 1e-10);
    CHECK(std::fabs(local_time_moment(kDrifted, 0.0, 0.0, 2) - 2.0) < 1e-8);
    CHECK_THROWS_AS(local_time_moment(kDrifted, 0.0, 0.0, 0), PreconditionFailed);
}

TEST_CASE("generic moments agree with the upward closed forms") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> pt(-2.0, 2.0);
    for (const DiffusionModel* m : {&kDrifted, &kWobbly}) {
        for (int i = 0; i < 10; ++i) {
            double x = pt(rng), y = pt(rng);
            for (int k = 1; k <= 3; ++k) {
                double generic = local_time_moment(*m, x, y, k);
                double closed = local_time_moment_upward(*m, x, y, k);
                CHECK(std::fabs(generic - closed) <= 1e-8 * closed);
            }
        }
    }
    CHECK_THROWS_AS(local_time_moment_upward(kArctan, 0.0, 0.0, 1), PreconditionFailed);
}

TEST_CASE("second moment is determined by the law") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> pt(-2.0, 2.0);
    for (const DiffusionModel* m : {&kArctan, &kWobbly}) {
        for (int i = 0; i < 5; ++i) {
            double x = pt(rng), y = pt(rng);
            LocalTimeLaw law = local_time_law(*m, x, y);
            double m2 = local_time_moment(*m, x, y, 2);
            CHECK(std::fabs(m2 - 2.0 * (1 - law.atom_prob) / (law.rate * law.rate)) <= 1e-12 * m2);
        }
    }
}

TEST_CASE("strong Markov factorisation of the survival function") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> pt(-2.5, 2.5);
    std::uniform_real_distribution<double> ls(0.0, 4.0);
    const DiffusionModel* models[] = {&kDrifted, &kArctan, &kWobbly};
    for (int i = 0; i < 100; ++i) {
        const DiffusionModel& m = *models[i % 3];
        double x = pt(rng), y = pt(rng), l = ls(rng);
        double lhs = survival(local_time_law(m, x, y), l);
        double rhs = (1 - prob_never_hit(m, x, y).p_never_hit) * survival(local_time_law(m, y, y), l);
        CHECK(std::fabs(lhs - rhs) <= 1e-6 * std::max(rhs, 1e-300));
    }
}
