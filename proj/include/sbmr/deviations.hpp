#pragma once

// Large-deviation rate values for the range radius, the asymptotic-rate fit
// used to extrapolate desk-scale horizons, and the Gaussian tail bounds the
// upper-bound argument rests on.

#include <cstdint>
#include <string>
#include <vector>

#include "sbmr/mechanism.hpp"

namespace sbmr {

struct DeviationEntry {
    double t = 0.0;
    double log_prob = 0.0;    // <= 0
    double stderr_log = 0.0;  // 0 for deterministic (PDE) entries
};

struct DeviationEstimate {
    double rho = 0.0;
    std::vector<DeviationEntry> entries;  // strictly increasing t
    // Signed slope in log P ~ fitted_rate * t + a log t + b; directly
    // comparable to rate_upper / rate_lower (the decay constant is its
    // negative).
    double fitted_rate = 0.0;
    double fitted_rate_stderr = 0.0;
    double log_correction = 0.0;          // a
    double intercept = 0.0;               // b
    std::vector<double> naive_rates;      // log_prob / t diagnostics
    std::string method;                   // pde | mc_direct | mc_splitting

    void validate_entries() const;
};

// Limit of (1/t) log P(R_t >= rho t) for rho > sqrt(2 beta): -(rho^2/2 - beta).
double rate_upper(double beta, double rho);

// Limit of (1/t) log P(R_t <= rho t | survival) for rho in (0, sqrt(2 beta)):
// -beta + sqrt(beta/2) rho.
double rate_lower(double beta, double rho);

// Weighted least squares of log_prob against -I*t + a*log(t) + b; weights
// 1/stderr^2 where stderr > 0, uniform otherwise. Requires >= 3 entries.
DeviationEstimate fit_rate(DeviationEstimate estimate);

// P(|N_d| >= z): regularized upper incomplete gamma Q(d/2, z^2/2).
double gaussian_tail(int d, double z);

struct TailBoundReport {
    double c_d = 0.0;  // sup over the grid of tail / (e^{-z^2/2} z^{d-2})
    std::vector<double> ratios;            // raw ratio per grid point
    std::vector<double> normalized_ratios; // ratio / limit constant
    double limit_constant = 0.0;           // 2^{1-d/2} / Gamma(d/2)
    bool limit_ok = false;  // normalized ratio at the largest z within 5% of 1
};

// Checks the tail envelope P(|N| >= z) <= C_d e^{-z^2/2} z^{d-2} on a grid in
// (1, inf) and the L'Hopital limit at the largest grid point.
TailBoundReport gaussian_tail_bound_check(int d, const std::vector<double>& z_grid);

struct MaxRadiusReport {
    double mc_prob = 0.0;       // P(max_{s<=t} |B_s| >= a), bridge-corrected
    double mc_stderr = 0.0;
    double bound = 0.0;         // 2^d gaussian_tail(d, a/sqrt(t))
    bool bound_ok = false;      // mc_prob <= bound + 3 stderr
    double one_sided_prob = 0.0;    // P(max_{s<=t} B^(1)_s >= a), d = 1 path max
    double one_sided_stderr = 0.0;
    double reflection_exact = 0.0;  // 2 P(B_t >= a)
    bool reflection_ok = true;      // d = 1: equality within 3 stderr
};

MaxRadiusReport max_radius_bound_check(int d, double t, double a,
                                       std::size_t n_paths,
                                       std::size_t n_steps,
                                       std::uint64_t seed,
                                       unsigned threads = 0);

}  // namespace sbmr
