#pragma once

// Branching Brownian particle approximation of the measure-valued process:
// mass-1/N particles, per-particle birth rate alpha*N + beta (binary split in
// place) and death rate alpha*N, independent Brownian motion in between. The
// generator of this system converges to the quadratic mechanism
// -beta*u + alpha*u^2 + O(1/N).

#include <cstdint>
#include <limits>
#include <vector>

#include "sbmr/mechanism.hpp"

namespace sbmr {

struct SimParams {
    Mechanism mech;  // eta must be 0 (quadratic only)
    int d = 1;
    std::uint64_t scale = 1000;  // N: particle mass 1/N, initial count N
    double t_end = 1.0;
    std::vector<double> checkpoints;  // strictly increasing, <= t_end
    double bridge_dt = 0.01;          // sub-sampling cap for path maxima
    std::size_t population_cap = 10'000'000;
    bool track_positions = true;   // false: count chain only (mass studies)
    bool track_rightmost = true;
    // Early exit for hit/miss estimation: stop once the running radial max
    // reaches this value.
    double stop_radius = std::numeric_limits<double>::infinity();

    void validate() const;
};

struct RangeSimulationRecord {
    std::vector<double> checkpoints;
    std::vector<double> range_radius;  // running max |x| per checkpoint
    std::vector<double> rightmost;     // running max first coordinate
    bool survived = false;
    double final_mass = 0.0;
    double range_at_horizon = 0.0;
    double rightmost_at_horizon = 0.0;
    bool stopped_early = false;  // stop_radius was reached before t_end
};

// Deterministic given (params, seed, replicate); replicate indexes an
// independent stream.
RangeSimulationRecord simulate_population(const SimParams& params,
                                          std::uint64_t seed,
                                          std::uint64_t replicate = 0);

double rightmost_max(const RangeSimulationRecord& record);

struct MonteCarloPoint {
    double value = 0.0;
    double stderr_value = 0.0;
    std::size_t replicates = 0;
    std::size_t hits = 0;
    bool zero_hit_bound = false;  // value is the 3/n upper confidence bound
    bool low_hits = false;        // fewer than 10 hits: advise splitting
};

MonteCarloPoint estimate_range_prob_direct(const SimParams& params, double rho,
                                           std::size_t replicates,
                                           std::uint64_t seed,
                                           unsigned threads = 0);

struct MassMoments {
    double mean_mass = 0.0;
    double stderr_mass = 0.0;
    double survival_fraction = 0.0;
    double stderr_survival = 0.0;
    std::size_t replicates = 0;
    std::vector<double> masses;  // per-replicate horizon masses
};

// Count-chain run collecting horizon masses (positions not simulated).
MassMoments sample_total_mass(const SimParams& params, std::size_t replicates,
                              std::uint64_t seed, unsigned threads = 0);

struct LaplaceCheck {
    double theta = 0.0;
    double empirical = 0.0;
    double stderr_empirical = 0.0;
    double expected = 0.0;  // exp(-v(t)), v' = beta v - alpha v^2, v(0)=theta
    double z = 0.0;
};

LaplaceCheck total_mass_laplace_check(const SimParams& params, double theta,
                                      std::size_t replicates,
                                      std::uint64_t seed, unsigned threads = 0);
// Same check evaluated on a pre-drawn mass sample (several theta share one).
LaplaceCheck total_mass_laplace_check(const SimParams& params, double theta,
                                      const MassMoments& sample);

struct SplittingEstimate {
    double prob = 0.0;
    double log_prob = 0.0;
    double rel_stderr = 0.0;  // delta-method product approximation
    std::vector<double> level_fractions;
    bool partial = false;  // a level had no crossers; prob is a partial product
};

// Fixed-effort multilevel splitting on the running radial maximum. Levels
// must be strictly increasing and end at the target radius.
SplittingEstimate estimate_range_prob_splitting(const SimParams& params,
                                                const std::vector<double>& levels,
                                                std::size_t per_level,
                                                std::uint64_t seed,
                                                unsigned threads = 0);

// Riccati flow v' = beta v - alpha v^2 from v(0)=v0, closed form.
double quadratic_mass_exponent(const Mechanism& mech, double v0, double t);

// Stream key replicate k of a (seed-keyed) spatial simulation runs under;
// re-running simulate_population(params, seed, k) reproduces that replicate
// bit for bit.
std::uint64_t replicate_stream_key(std::uint64_t seed, std::uint64_t replicate);

}  // namespace sbmr
