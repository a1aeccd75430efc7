#pragma once

// Law of the total local time L^x_inf(y) of a transient diffusion.
//
// L is a defective exponential: with probability atom_prob the level y is
// never reached and L = 0; otherwise L is exponential with rate
//   psi(y) = (1/2) (1/Phi(y,+inf) - 1/Phi(y,-inf)),  1/inf := 0.

#include "ltime/scale.hpp"

namespace ltime {

struct LocalTimeLaw {
    double atom_prob = 0.0;  // P(L = 0)
    double rate = 1.0;

    // Throws PreconditionFailed unless atom_prob is in [0, 1] and rate > 0.
    void validate() const;
};

// P(L > l) = (1 - atom_prob) exp(-rate l), for l >= 0.
double survival(const LocalTimeLaw& law, double l);
double cdf(const LocalTimeLaw& law, double l);
double law_moment(const LocalTimeLaw& law, int k);

struct HittingReport {
    double p_never_hit = 0.0;
    Regime regime = Regime::Recurrent;
    TailVerdict phi_plus;   // Phi(y, +inf)
    TailVerdict phi_minus;  // Phi(y, -inf)
};

// P(tau_y^x = inf). Zero for x == y and whenever the tail on the far side of y
// (seen from x) diverges.
HittingReport prob_never_hit(const DiffusionModel& model, double x, double y, const QuadratureConfig& cfg = {});

// Rate of L^x_inf(x). RecurrentModelError when both tails diverge.
double psi0(const DiffusionModel& model, double x, const QuadratureConfig& cfg = {});

LocalTimeLaw local_time_law(const DiffusionModel& model, double x, double y, const QuadratureConfig& cfg = {});

// E[L^k] = (1 - atom_prob) k! / rate^k.
double local_time_moment(const DiffusionModel& model, double x, double y, int k, const QuadratureConfig& cfg = {});

// Independent route for the upward-transient case:
//   x <= y:  k! (2 Phi(y,+inf))^k
//   x >  y:  2^k k! Phi(y,+inf)^(k-1) phi(y,x) Phi(x,+inf)
double local_time_moment_upward(const DiffusionModel& model, double x, double y, int k,
                                const QuadratureConfig& cfg = {});

double factorial(int k);

}  // namespace ltime
