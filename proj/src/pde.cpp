#include "sbmr/pde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace sbmr {

namespace {

constexpr double kBlowUpGuard = 1e12;

// Positive root of psi(u) = target for target > 0; used as the consistent
// Dirichlet datum under strong local forcing.
double psi_inverse_above(const Mechanism& mech, double target) {
    require(target > 0.0, ErrorCode::invalid_argument,
            "psi_inverse_above: target must be > 0");
    double hi = std::max(1.0, 2.0 * lambda_star(mech));
    while (psi(mech, hi) < target) {
        hi *= 2.0;
        require(hi < 1e300, ErrorCode::config,
                "psi_inverse_above: psi is bounded below target");
    }
    double lo = 0.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (psi(mech, mid) < target) {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo <= 1e-12 * hi) break;
    }
    return 0.5 * (lo + hi);
}

struct Tridiag {
    std::vector<double> sub, diag_factored, sup, mult;

    void factor(const std::vector<double>& diag) {
        const std::size_t n = diag.size();
        diag_factored = diag;
        mult.assign(n, 0.0);
        for (std::size_t i = 1; i < n; ++i) {
            mult[i] = sub[i] / diag_factored[i - 1];
            diag_factored[i] -= mult[i] * sup[i - 1];
        }
    }

    void solve(std::vector<double>& rhs) const {
        const std::size_t n = rhs.size();
        for (std::size_t i = 1; i < n; ++i) rhs[i] -= mult[i] * rhs[i - 1];
        rhs[n - 1] /= diag_factored[n - 1];
        for (std::size_t i = n - 1; i-- > 0;) {
            rhs[i] = (rhs[i] - sup[i] * rhs[i + 1]) / diag_factored[i];
        }
    }
};

}  // namespace

double RadialField::value_at(double r) const {
    require(r >= 0.0, ErrorCode::invalid_argument, "value_at: r must be >= 0");
    const double x = r / h;
    const std::size_t m = values.size() - 1;
    if (x >= static_cast<double>(m)) return values[m];
    const std::size_t i = static_cast<std::size_t>(x);
    const double frac = x - static_cast<double>(i);
    return values[i] * (1.0 - frac) + values[i + 1] * frac;
}

std::size_t PdeProblem::node_count() const {
    return static_cast<std::size_t>(std::llround(r_max / h)) + 1;
}

void PdeProblem::validate() const {
    mech.validate();
    require(d >= 1, ErrorCode::config, "dimension must be >= 1");
    require(r_max > 0.0 && h > 0.0 && dt > 0.0 && t_end > 0.0,
            ErrorCode::config, "r_max, h, dt, t_end must be > 0");
    const double cells = r_max / h;
    require(std::abs(cells - std::llround(cells)) <= 1e-9 * std::max(1.0, cells),
            ErrorCode::config, "h must divide r_max");
    const double steps = t_end / dt;
    require(std::abs(steps - std::llround(steps)) <= 1e-9 * std::max(1.0, steps),
            ErrorCode::config, "dt must divide t_end");
    const std::size_t n = node_count();
    require(g.size() == n, ErrorCode::config, "g must be sampled on the grid");
    require(phi.size() == n, ErrorCode::config, "phi must be sampled on the grid");
    for (double x : g)
        require(x >= 0.0, ErrorCode::config, "g must be nonnegative");
    for (double x : phi)
        require(x >= 0.0, ErrorCode::config, "phi must be nonnegative");
    require(boundary_value >= 0.0, ErrorCode::config,
            "boundary_value must be >= 0");
}

std::vector<double> PdeProblem::sample_profile(
    double r_max, double h, const std::function<double(double)>& f) {
    const std::size_t n = static_cast<std::size_t>(std::llround(r_max / h)) + 1;
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = f(h * static_cast<double>(i));
    return values;
}

RadialField solve_radial(const PdeProblem& problem, SolveStats* stats,
                         FieldStack* snapshots, std::size_t snapshot_stride) {
    problem.validate();

    const std::size_t n = problem.node_count();
    const std::size_t m = n - 1;
    const double h = problem.h;
    const double dt = problem.dt;
    const int d = problem.d;
    const bool dirichlet = problem.boundary == OuterBoundary::dirichlet;
    const std::size_t n_solve = dirichlet ? m : n;
    const std::size_t steps =
        static_cast<std::size_t>(std::llround(problem.t_end / dt));
    const Mechanism& mech = problem.mech;
    const bool quad_only = mech.eta == 0.0;

    // Conservative stencil for (1/2)Laplacian: lo[i]*v[i-1] - (lo+up)[i]*v[i]
    // + up[i]*v[i+1]; limit form d*(v1-v0)/h^2 at the origin.
    std::vector<double> lo(n, 0.0), up(n, 0.0);
    up[0] = static_cast<double>(d) / (h * h);
    for (std::size_t i = 1; i < m; ++i) {
        const double rc = std::pow(static_cast<double>(i) * h, d - 1);
        const double rp = std::pow((static_cast<double>(i) + 0.5) * h, d - 1);
        const double rm = std::pow((static_cast<double>(i) - 0.5) * h, d - 1);
        lo[i] = rm / (2.0 * h * h * rc);
        up[i] = rp / (2.0 * h * h * rc);
    }
    if (!dirichlet) {
        const double rc = std::pow(static_cast<double>(m) * h, d - 1);
        const double rp = std::pow((static_cast<double>(m) + 0.5) * h, d - 1);
        const double rm = std::pow((static_cast<double>(m) - 0.5) * h, d - 1);
        lo[m] = (rp + rm) / (2.0 * h * h * rc);
    }

    std::vector<double> v = problem.g;
    if (dirichlet) v[m] = problem.boundary_value;

    auto psi_at = [&](double u) {
        double val = -mech.beta * u + mech.alpha * u * u;
        if (!quad_only) val += mech.eta * std::pow(u, 1.0 + mech.theta);
        return val;
    };
    auto jac_at = [&](double u) {
        double val = -mech.beta + 2.0 * mech.alpha * u;
        if (!quad_only && u > 0.0)
            val += mech.eta * (1.0 + mech.theta) * std::pow(u, mech.theta);
        return val > 0.0 ? val : 0.0;
    };
    auto laplacian_at = [&](const std::vector<double>& w, std::size_t i) {
        if (i == 0) return up[0] * (w[1] - w[0]);
        if (i == m) return lo[m] * (w[m - 1] - w[m]);  // neumann only
        return lo[i] * w[i - 1] - (lo[i] + up[i]) * w[i] + up[i] * w[i + 1];
    };

    double sup_g = 0.0, sup_phi = 0.0;
    for (double x : problem.g) sup_g = std::max(sup_g, x);
    if (dirichlet) sup_g = std::max(sup_g, problem.boundary_value);
    for (double x : problem.phi) sup_phi = std::max(sup_phi, x);
    const double bound =
        sup_g + (sup_phi - psi_min(mech)) * problem.t_end;
    double max_value = sup_g;

    if (snapshots) {
        snapshots->d = d;
        snapshots->h = h;
        snapshots->times.clear();
        snapshots->slices.clear();
        snapshots->times.push_back(0.0);
        snapshots->slices.push_back(v);
    }

    Tridiag tri;
    tri.sub.assign(n_solve, 0.0);
    tri.sup.assign(n_solve, 0.0);
    std::vector<double> diag(n_solve, 0.0);
    std::vector<double> jdiag(n), jstar(n), rhs(n_solve), vstar(n);
    std::vector<double> theta(n_solve), shift(n_solve);

    auto build_matrix = [&](const std::vector<double>& shift) {
        for (std::size_t i = 0; i < n_solve; ++i) {
            const double a = i == 0 ? 0.0 : lo[i];
            const double c = (i == m) ? 0.0 : up[i];
            tri.sub[i] = -0.5 * dt * a;
            tri.sup[i] = -0.5 * dt * c;
            diag[i] = 1.0 + 0.5 * dt * (a + c) + 0.5 * dt * shift[i];
        }
        if (dirichlet && n_solve >= 1) tri.sup[n_solve - 1] = 0.0;
        tri.factor(diag);
    };

    for (std::size_t step = 1; step <= steps; ++step) {
        // Predictor: reaction explicit at v^n with the Jacobian shift at v^n.
        for (std::size_t i = 0; i < n; ++i) jdiag[i] = jac_at(v[i]);
        build_matrix(jdiag);
        for (std::size_t i = 0; i < n_solve; ++i) {
            rhs[i] = v[i] + 0.5 * dt * laplacian_at(v, i) +
                     dt * (problem.phi[i] - psi_at(v[i])) +
                     0.5 * dt * jdiag[i] * v[i];
        }
        if (dirichlet) {
            rhs[m - 1] += 0.5 * dt * up[m - 1] * problem.boundary_value;
        }
        tri.solve(rhs);
        for (std::size_t i = 0; i < n_solve; ++i) {
            vstar[i] = rhs[i] > 0.0 ? rhs[i] : 0.0;
        }
        if (dirichlet) vstar[m] = problem.boundary_value;

        // Corrector: theta-weighted reaction between v^n and the predictor,
        // linearized at the predictor. theta stays at 1/2 (trapezoid, second
        // order) wherever dt * psi' is small and slides toward 1 (linearized
        // backward Euler, damped) at nodes a blow-up surrogate has driven
        // stiff; those nodes are slaved to the local stationary balance, so
        // the lower order there never reaches the origin value.
        for (std::size_t i = 0; i < n; ++i) jstar[i] = jac_at(vstar[i]);
        for (std::size_t i = 0; i < n_solve; ++i) {
            const double s = dt * std::max(jdiag[i], jstar[i]);
            theta[i] = s <= 1.0 ? 0.5 : 0.5 * (2.0 - 1.0 / s);
            shift[i] = 2.0 * theta[i] * jstar[i];  // build_matrix halves it
        }
        build_matrix(shift);
        for (std::size_t i = 0; i < n_solve; ++i) {
            rhs[i] = v[i] + 0.5 * dt * laplacian_at(v, i) +
                     dt * problem.phi[i] -
                     dt * ((1.0 - theta[i]) * psi_at(v[i]) +
                           theta[i] * (psi_at(vstar[i]) - jstar[i] * vstar[i]));
        }
        if (dirichlet) {
            rhs[m - 1] += 0.5 * dt * up[m - 1] * problem.boundary_value;
        }
        tri.solve(rhs);

        double step_max = 0.0;
        for (std::size_t i = 0; i < n_solve; ++i) {
            v[i] = rhs[i] > 0.0 ? rhs[i] : 0.0;
            step_max = std::max(step_max, v[i]);
        }
        if (dirichlet) {
            v[m] = problem.boundary_value;
            step_max = std::max(step_max, v[m]);
        }
        max_value = std::max(max_value, step_max);

        if (step_max > kBlowUpGuard) {
            throw Error(ErrorCode::blow_up,
                        "solution exceeded the blow-up guard at t = " +
                            std::to_string(dt * static_cast<double>(step)));
        }

        if (snapshots && (step % snapshot_stride == 0 || step == steps)) {
            const double t_now = dt * static_cast<double>(step);
            if (snapshots->times.back() < t_now) {
                snapshots->times.push_back(t_now);
                snapshots->slices.push_back(v);
            }
        }
    }

    if (stats) {
        stats->max_value = max_value;
        stats->apriori_bound = bound;
        stats->margin = bound - max_value;
        stats->steps = steps;
    }
    require(max_value <= bound * (1.0 + 1e-6) + 1e-9, ErrorCode::internal,
            "a-priori bound violated: max " + std::to_string(max_value) +
                " vs bound " + std::to_string(bound));

    RadialField field;
    field.d = d;
    field.h = h;
    field.t = problem.t_end;
    field.values = std::move(v);
    return field;
}

namespace {

// Dirichlet datum that truncates the stationary blow-up profile one grid
// cell from its singularity: 3/(alpha h^2) when the quadratic term leads,
// otherwise the stable-term profile C / h^(2/theta).
double blow_up_profile_value(const Mechanism& mech, double h) {
    if (mech.alpha > 0.0) return 3.0 / (mech.alpha * h * h);
    const double p = 2.0 / mech.theta;
    const double c = std::pow(p * (p + 1.0) / (2.0 * mech.eta), 1.0 / mech.theta);
    return c * std::pow(h, -p);
}

struct SweepSchedule {
    double start = 0.0;
    double factor = 0.0;
    int max_sweeps = 0;
};

// The boundary sweep multiplies the calibrated datum by 4 per step, which
// pulls the effective singularity onto r = M geometrically (increment ratio
// about 1/2); the forcing sweep follows the decade schedule 1e2, 1e3, ...
SweepSchedule make_schedule(const RangeOptions& opt, const Mechanism& mech,
                            double h) {
    SweepSchedule schedule;
    if (opt.strategy == RangeStrategy::boundary_sweep) {
        schedule.start = opt.sweep_start > 0.0 ? opt.sweep_start
                                               : blow_up_profile_value(mech, h);
        schedule.factor = opt.sweep_factor > 0.0 ? opt.sweep_factor : 4.0;
        schedule.max_sweeps = opt.max_sweeps > 0 ? opt.max_sweeps : 14;
    } else {
        schedule.start = opt.sweep_start > 0.0 ? opt.sweep_start : 1e2;
        schedule.factor = opt.sweep_factor > 0.0 ? opt.sweep_factor : 10.0;
        schedule.max_sweeps = opt.max_sweeps > 0 ? opt.max_sweeps : 9;
    }
    return schedule;
}

struct SweepGrid {
    double h = 0.0;
    double dt = 0.0;
    std::size_t inner_nodes = 0;  // nodes on [0, M], M = inner_nodes * h
};

SweepGrid make_sweep_grid(double t, double M, const RangeOptions& opt) {
    SweepGrid grid;
    const double target_h =
        opt.h > 0.0 ? opt.h : std::min(opt.max_h, M / opt.min_nodes);
    grid.inner_nodes =
        static_cast<std::size_t>(std::ceil(M / target_h - 1e-12));
    grid.h = M / static_cast<double>(grid.inner_nodes);
    const double dt_target =
        opt.dt > 0.0 ? opt.dt : opt.dt_scale * grid.h * grid.h;
    const std::size_t steps =
        static_cast<std::size_t>(std::ceil(t / dt_target - 1e-12));
    grid.dt = t / static_cast<double>(steps);
    return grid;
}

double sweep_origin_value(const Mechanism& mech, int d, double t, double M,
                          const RangeOptions& opt, double surrogate,
                          const SweepGrid& grid) {
    PdeProblem problem;
    problem.mech = mech;
    problem.d = d;
    problem.h = grid.h;
    problem.dt = grid.dt;
    problem.t_end = t;
    problem.boundary = OuterBoundary::dirichlet;

    if (opt.strategy == RangeStrategy::boundary_sweep) {
        problem.r_max = M;
        problem.g.assign(grid.inner_nodes + 1, opt.g0);
        problem.phi.assign(grid.inner_nodes + 1, 0.0);
        problem.boundary_value = surrogate;
    } else {
        const std::size_t pad_nodes = static_cast<std::size_t>(
            std::ceil(opt.forcing_pad / grid.h - 1e-12));
        const std::size_t mtot = grid.inner_nodes + pad_nodes;
        problem.r_max = grid.h * static_cast<double>(mtot);
        problem.g.assign(mtot + 1, opt.g0);
        problem.phi.assign(mtot + 1, 0.0);
        for (std::size_t i = grid.inner_nodes + 1; i <= mtot; ++i) {
            const double excess = grid.h * static_cast<double>(i) - M;
            problem.phi[i] = surrogate * opt.forcing_scale *
                             std::pow(excess, opt.forcing_power);
        }
        problem.boundary_value =
            psi_inverse_above(mech, problem.phi[mtot]);
    }

    const RadialField field = solve_radial(problem);
    return field.values[0];
}

}  // namespace

double range_log_prob(const Mechanism& mech, int d, double t, double M,
                      const RangeOptions& options) {
    mech.validate();
    require(mech.supercritical(), ErrorCode::config,
            "range_log_prob requires a supercritical mechanism");
    require(t > 0.0 && M > 0.0, ErrorCode::invalid_argument,
            "range_log_prob: t and M must be > 0");
    require(options.tol > 0.0, ErrorCode::invalid_argument, "tol must be > 0");

    const SweepGrid grid = make_sweep_grid(t, M, options);
    const SweepSchedule schedule = make_schedule(options, mech, grid.h);
    double prev = std::numeric_limits<double>::quiet_NaN();
    double surrogate = schedule.start;
    for (int k = 0; k < schedule.max_sweeps && surrogate < 5e11; ++k) {
        const double v0 =
            sweep_origin_value(mech, d, t, M, options, surrogate, grid);
        if (std::isfinite(prev)) {
            require(v0 >= prev - std::max(1e-9 * prev, 1e-12),
                    ErrorCode::internal,
                    "surrogate sweep lost monotonicity in lambda/V");
        }
        const bool converged =
            std::isfinite(prev) &&
            std::abs(v0 - prev) <= options.tol * std::max(v0, 1e-300);
        if (options.log) {
            options.log->push_back({t, M, surrogate, v0, -std::expm1(-v0),
                                    grid.h, grid.dt, converged});
        }
        if (converged) return v0;
        prev = v0;
        surrogate *= schedule.factor;
    }
    throw Error(ErrorCode::resolution,
                "surrogate sweep did not converge; refine the grid near r = " +
                    std::to_string(M) + " (reduce max_h or raise min_nodes)");
}

double range_log_prob(const Mechanism& mech, int d, double t, double M,
                      double tol) {
    RangeOptions options;
    options.tol = tol;
    return range_log_prob(mech, d, t, M, options);
}

double upper_deviation_prob(const Mechanism& mech, int d, double t, double rho,
                            const RangeOptions& options) {
    require(rho > 0.0, ErrorCode::invalid_argument, "rho must be > 0");
    const double v = range_log_prob(mech, d, t, rho * t, options);
    return -std::expm1(-v);
}

double upper_deviation_prob(const Mechanism& mech, int d, double t, double rho,
                            double tol) {
    RangeOptions options;
    options.tol = tol;
    return upper_deviation_prob(mech, d, t, rho, options);
}

LowerDeviationResult lower_deviation(const Mechanism& mech, int d, double t,
                                     double rho, const RangeOptions& options) {
    mech.validate();
    require(mech.supercritical(), ErrorCode::config,
            "lower_deviation requires a supercritical mechanism");
    require(mech.alpha > 0.0, ErrorCode::config,
            "lower_deviation requires alpha > 0");
    const double speed = std::sqrt(2.0 * mech.beta);
    require(rho > 0.0 && rho < speed, ErrorCode::invalid_argument,
            "rho must lie in (0, sqrt(2 beta))");
    require(t > 0.0, ErrorCode::invalid_argument, "t must be > 0");

    const double M = rho * t;
    const double lam = lambda_star(mech);
    const double surv = survival_probability(mech);
    const SweepGrid grid = make_sweep_grid(t, M, options);

    RangeOptions opt_v = options;
    opt_v.g0 = 0.0;
    RangeOptions opt_w = options;
    opt_w.g0 = lam;

    const SweepSchedule schedule = make_schedule(options, mech, grid.h);
    double prev_num = std::numeric_limits<double>::quiet_NaN();
    double surrogate = std::max(schedule.start, 10.0 * lam);
    LowerDeviationResult result;
    for (int k = 0; k < schedule.max_sweeps && surrogate < 5e11; ++k) {
        const double v =
            sweep_origin_value(mech, d, t, M, opt_v, surrogate, grid);
        const double w =
            sweep_origin_value(mech, d, t, M, opt_w, surrogate, grid);
        double numerator = std::exp(-v) - std::exp(-w);
        require(numerator >= -options.tol, ErrorCode::internal,
                "lower_deviation: numerator exp(-v) - exp(-w) is negative "
                "beyond tolerance; solver inconsistency");
        if (numerator < 0.0) numerator = 0.0;
        if (options.log) {
            options.log->push_back(
                {t, M, surrogate, v, std::exp(-v), grid.h, grid.dt, false});
        }
        result.v = v;
        result.w = w;
        result.unconditional = std::exp(-v);
        result.conditional = std::clamp(numerator / surv, 0.0, 1.0);
        if (std::isfinite(prev_num) &&
            std::abs(numerator - prev_num) <=
                options.tol * std::max(numerator, 1e-300)) {
            if (options.log && !options.log->empty()) {
                options.log->back().converged = true;
            }
            return result;
        }
        prev_num = numerator;
        surrogate *= schedule.factor;
    }
    throw Error(ErrorCode::resolution,
                "lower_deviation sweep did not converge; refine the grid near "
                "r = " + std::to_string(M));
}

double conditional_lower_deviation_prob(const Mechanism& mech, int d, double t,
                                        double rho, double tol) {
    RangeOptions options;
    options.tol = tol;
    return lower_deviation(mech, d, t, rho, options).conditional;
}

}  // namespace sbmr
