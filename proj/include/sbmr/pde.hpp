#pragma once

// Radially symmetric semilinear solver for
//     dv/dt = (1/2)(v_rr + (d-1)/r v_r) - psi(v) + phi,   r in [0, r_max],
// with a symmetry stencil at the origin, and the blow-up-boundary sweeps
// that turn its t-slice at the origin into range probabilities
// -log P(R_t <= M).

#include <cstddef>
#include <functional>
#include <vector>

#include "sbmr/mechanism.hpp"

namespace sbmr {

enum class OuterBoundary {
    dirichlet,  // v(r_max) pinned to boundary_value
    neumann,    // zero flux; preserves spatially constant solutions
};

struct RadialField {
    int d = 1;
    double h = 0.0;
    double t = 0.0;
    std::vector<double> values;  // node i lives at radius i*h

    double r_max() const { return h * static_cast<double>(values.size() - 1); }
    // Linear interpolation in r; queries beyond r_max clamp to the boundary
    // node, queries below 0 are a caller bug.
    double value_at(double r) const;
};

struct PdeProblem {
    Mechanism mech;
    int d = 1;
    double r_max = 1.0;
    double h = 0.01;
    double dt = 1e-4;
    double t_end = 1.0;
    std::vector<double> g;    // initial profile on nodes, size m+1
    std::vector<double> phi;  // forcing profile on nodes, size m+1
    double boundary_value = 0.0;
    OuterBoundary boundary = OuterBoundary::dirichlet;

    std::size_t node_count() const;  // m+1
    void validate() const;

    static std::vector<double> sample_profile(
        double r_max, double h, const std::function<double(double)>& f);
};

struct SolveStats {
    double max_value = 0.0;      // max over nodes and steps
    double apriori_bound = 0.0;  // sup g + sup phi * t - min psi * t
    double margin = 0.0;         // apriori_bound - max_value
    std::size_t steps = 0;
};

// Time-indexed stack of solution slices for Feynman-Kac evaluation.
struct FieldStack {
    int d = 1;
    double h = 0.0;
    std::vector<double> times;
    std::vector<std::vector<double>> slices;

    double r_max() const {
        return slices.empty() ? 0.0
                              : h * static_cast<double>(slices[0].size() - 1);
    }
};

// Crank-Nicolson diffusion with a linearized-implicit reaction corrector.
// Optionally records every snapshot_stride-th slice (plus the first and the
// last) into *snapshots. Throws ErrorCode::blow_up past the 1e12 guard.
RadialField solve_radial(const PdeProblem& problem, SolveStats* stats = nullptr,
                         FieldStack* snapshots = nullptr,
                         std::size_t snapshot_stride = 1);

enum class RangeStrategy {
    boundary_sweep,  // restricted domain [0, M], Dirichlet value V -> infinity
    forcing_sweep,   // domain [0, M+pad], forcing lambda*f, f > 0 off B(M)
};

struct RangeSolveRow {
    double t = 0, M = 0, lambda_or_v = 0, v_origin = 0, prob = 0, h = 0, dt = 0;
    bool converged = false;
};

struct RangeOptions {
    RangeStrategy strategy = RangeStrategy::boundary_sweep;
    double tol = 5e-3;  // relative, on the sweep target at the origin
    double g0 = 0.0;    // constant initial datum inside B(M)
    double h = 0.0;     // explicit grid spacing target; 0 = auto
    double dt = 0.0;    // explicit step target; 0 = auto
    int min_nodes = 600;
    double max_h = 0.05;
    double dt_scale = 1.0;     // dt = dt_scale * h^2 when dt == 0
    // Surrogate schedule; 0 = strategy default (boundary: the blow-up profile
    // datum 3/(alpha h^2) growing 4x per sweep; forcing: 1e2 growing 10x).
    double sweep_start = 0.0;
    double sweep_factor = 0.0;
    int max_sweeps = 0;
    double forcing_pad = 2.0;   // domain extension beyond M (forcing_sweep)
    double forcing_scale = 1.0; // f(r) = forcing_scale * (r - M)^power
    int forcing_power = 2;
    std::vector<RangeSolveRow>* log = nullptr;
};

// v_inf(t, 0) = -log P(R_t <= M), by the requested sweep strategy.
double range_log_prob(const Mechanism& mech, int d, double t, double M,
                      const RangeOptions& options);
double range_log_prob(const Mechanism& mech, int d, double t, double M,
                      double tol);

// P(R_t >= rho t) up to the null boundary event, = 1 - exp(-v_inf).
double upper_deviation_prob(const Mechanism& mech, int d, double t, double rho,
                            const RangeOptions& options);
double upper_deviation_prob(const Mechanism& mech, int d, double t, double rho,
                            double tol);

struct LowerDeviationResult {
    double conditional = 0.0;    // P(R_t <= rho t | survival)
    double unconditional = 0.0;  // P(R_t <= rho t)
    double v = 0.0;              // -log P(R_t <= rho t)
    double w = 0.0;              // -log P(R_t <= rho t, extinction)
};

// Joint sweep for the conditional probability; the stopping rule watches the
// numerator exp(-v) - exp(-w), which is the quantity that survives the
// cancellation between the two solves.
LowerDeviationResult lower_deviation(const Mechanism& mech, int d, double t,
                                     double rho, const RangeOptions& options);
double conditional_lower_deviation_prob(const Mechanism& mech, int d, double t,
                                        double rho, double tol);

}  // namespace sbmr
