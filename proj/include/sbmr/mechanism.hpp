#pragma once

// Branching mechanism family psi(u) = -beta*u + alpha*u^2 + eta*u^(1+theta)
// and its derived quantities. The (eta, theta) pair is the closed-form stand-
// in for a stable jump component; theta is ignored when eta == 0.

#include <string>

#include "sbmr/errors.hpp"

namespace sbmr {

struct Mechanism {
    double beta = 0.0;   // supercriticality, 1/time
    double alpha = 0.0;  // quadratic coefficient, >= 0
    double eta = 0.0;    // stable coefficient, >= 0
    double theta = 1.0;  // stable index in (0,1], unused when eta == 0

    // Throws ErrorCode::config on invalid parameters.
    void validate() const;
    bool supercritical() const { return beta > 0.0 && (alpha > 0.0 || eta > 0.0); }
};

struct AssumptionReport {
    bool supercritical = false;
    bool alpha_positive = false;
    bool log_moment_ok = false;
    std::string justification;
};

double psi(const Mechanism& mech, double u);

// psi(v)/v extended continuously by k(0) = -beta.
double k_rate(const Mechanism& mech, double v);

// Derivative psi'(u); used by the PDE solver's linearized reaction step.
double psi_prime(const Mechanism& mech, double u);

// Largest (unique) positive root of psi. Closed form beta/alpha when eta=0,
// otherwise bracketing bisection to 1e-12 relative tolerance.
double lambda_star(const Mechanism& mech);

// 1 - exp(-lambda_star)
double survival_probability(const Mechanism& mech);

// min over u >= 0 of psi(u); nonpositive for supercritical mechanisms.
double psi_min(const Mechanism& mech);

AssumptionReport check_assumptions(const Mechanism& mech, double gamma);

}  // namespace sbmr
