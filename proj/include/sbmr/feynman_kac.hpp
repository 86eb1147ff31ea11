#pragma once

// Path-integral certification of PDE solves: the solution of
// dv/dt = (1/2)Lap v - psi(v) + phi equals
//   E_x[ g(B_t) e^{-int_0^t k(v(t-r,B_r)) dr}
//        + int_0^t phi(B_s) e^{-int_0^s k(v(t-r,B_r)) dr} ds ],
// and its mild (Duhamel) form. Both are estimated over shared Brownian paths
// against a recorded solution stack, giving an independent statistical check
// on the solver.

#include <cstdint>
#include <functional>

#include "sbmr/mechanism.hpp"
#include "sbmr/pde.hpp"

namespace sbmr {

using RadialProfile = std::function<double(double)>;

class FieldInterpolant {
public:
    explicit FieldInterpolant(FieldStack stack);

    // Bilinear in (t, r); r beyond the grid clamps to the boundary node,
    // which carries the Dirichlet datum for restricted-domain solves.
    double value(double t, double r) const;

    double t_max() const { return stack_.times.back(); }
    double r_max() const { return stack_.r_max(); }
    int dimension() const { return stack_.d; }
    double grid_h() const { return stack_.h; }
    double max_time_gap() const { return max_time_gap_; }

private:
    FieldStack stack_;
    double max_time_gap_ = 0.0;
};

struct FkEstimate {
    double mean = 0.0;
    double stderr_mean = 0.0;
    double clipped_fraction = 0.0;  // path-time spent beyond the grid
    std::size_t n_paths = 0;
};

// Monte Carlo evaluation of the Feynman-Kac representation at |x| = x_radius.
FkEstimate fk_estimate(const FieldInterpolant& field, const Mechanism& mech,
                       const RadialProfile& g, const RadialProfile& phi,
                       double t, double x_radius, std::size_t n_paths,
                       std::size_t n_steps, std::uint64_t seed,
                       unsigned threads = 0);

struct MildFormResidual {
    double residual = 0.0;  // v(t,x) - E[g] - int E[phi] + E[int psi(v)]
    double stderr_residual = 0.0;
    double clipped_fraction = 0.0;
    std::size_t n_paths = 0;
};

MildFormResidual mild_form_residual(const FieldInterpolant& field,
                                    const Mechanism& mech,
                                    const RadialProfile& g,
                                    const RadialProfile& phi, double t,
                                    double x_radius, std::size_t n_paths,
                                    std::size_t n_steps, std::uint64_t seed,
                                    unsigned threads = 0);

struct AprioriReport {
    double bound = 0.0;      // sup g + (sup phi - min psi) * t
    double max_value = 0.0;  // max over slices and nodes
    double margin = 0.0;     // bound - max_value
    bool ok = false;
    double arg_time = 0.0;   // location of the max
    double arg_radius = 0.0;
};

AprioriReport apriori_bound_check(const FieldStack& field, double sup_g,
                                  double sup_phi, const Mechanism& mech);

}  // namespace sbmr
