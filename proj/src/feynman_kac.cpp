#include "sbmr/feynman_kac.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "sbmr/parallel.hpp"
#include "sbmr/rng.hpp"

namespace sbmr {

namespace {

const std::uint64_t kFkTag = fnv1a64("sbmr.fk");
const std::uint64_t kMildTag = fnv1a64("sbmr.mild");

}  // namespace

FieldInterpolant::FieldInterpolant(FieldStack stack) : stack_(std::move(stack)) {
    require(stack_.times.size() >= 2 && stack_.times.size() == stack_.slices.size(),
            ErrorCode::invalid_argument,
            "field stack needs at least two time slices");
    require(stack_.h > 0.0, ErrorCode::invalid_argument, "field stack h <= 0");
    for (std::size_t i = 1; i < stack_.times.size(); ++i) {
        require(stack_.times[i] > stack_.times[i - 1], ErrorCode::invalid_argument,
                "field stack times must increase");
        max_time_gap_ = std::max(max_time_gap_,
                                 stack_.times[i] - stack_.times[i - 1]);
    }
}

double FieldInterpolant::value(double t, double r) const {
    const auto& times = stack_.times;
    require(t >= times.front() - 1e-12 && t <= times.back() + 1e-9,
            ErrorCode::invalid_argument, "field query outside the time range");
    t = std::clamp(t, times.front(), times.back());

    const auto it = std::upper_bound(times.begin(), times.end(), t);
    std::size_t hi = static_cast<std::size_t>(it - times.begin());
    if (hi == times.size()) --hi;
    if (hi == 0) ++hi;
    const std::size_t lo = hi - 1;
    const double w =
        (t - times[lo]) / (times[hi] - times[lo]);

    auto slice_value = [&](const std::vector<double>& v) {
        const double xr = std::max(r, 0.0) / stack_.h;
        const std::size_t m = v.size() - 1;
        if (xr >= static_cast<double>(m)) return v[m];
        const std::size_t i = static_cast<std::size_t>(xr);
        const double frac = xr - static_cast<double>(i);
        return v[i] * (1.0 - frac) + v[i + 1] * frac;
    };
    return (1.0 - w) * slice_value(stack_.slices[lo]) +
           w * slice_value(stack_.slices[hi]);
}

namespace {

struct PathAccumulators {
    double fk = 0.0;       // g(B_t) e^{-I_t} + int phi e^{-I_s} ds
    double mild = 0.0;     // g(B_t) + int phi ds - int psi(v(t-s,B_s)) ds
    double clipped = 0.0;  // fraction of samples beyond the grid
};

// One d-dimensional Brownian path with trapezoidal quadrature of the
// exponent integral; both representations share the path.
PathAccumulators run_path(const FieldInterpolant& field, const Mechanism& mech,
                          const RadialProfile& g, const RadialProfile& phi,
                          double t, double x_radius, std::size_t n_steps,
                          Rng& rng) {
    const int d = field.dimension();
    const double delta = t / static_cast<double>(n_steps);
    const double sd = std::sqrt(delta);
    const double r_grid = field.r_max();

    double x[8] = {0.0};
    x[0] = x_radius;

    double radius = x_radius;
    double k_prev = k_rate(mech, field.value(t, radius));
    double exponent = 0.0;  // int_0^s k(v(t-r, B_r)) dr, trapezoid
    double phi_exp_int = 0.5 * phi(radius) * std::exp(-exponent) * delta;
    double phi_int = 0.5 * phi(radius) * delta;
    double psi_int = 0.5 * psi(mech, field.value(t, radius)) * delta;
    std::size_t clipped = radius > r_grid ? 1 : 0;

    for (std::size_t s = 1; s <= n_steps; ++s) {
        double r2 = 0.0;
        for (int c = 0; c < d; ++c) {
            x[c] += sd * rng.next_normal();
            r2 += x[c] * x[c];
        }
        radius = std::sqrt(r2);
        if (radius > r_grid) ++clipped;

        const double time_left = t - delta * static_cast<double>(s);
        const double v_here = field.value(std::max(time_left, 0.0), radius);
        const double k_here = k_rate(mech, v_here);
        exponent += 0.5 * delta * (k_prev + k_here);
        k_prev = k_here;

        const double weight = s == n_steps ? 0.5 : 1.0;
        phi_exp_int += weight * phi(radius) * std::exp(-exponent) * delta;
        phi_int += weight * phi(radius) * delta;
        psi_int += weight * psi(mech, v_here) * delta;
    }

    PathAccumulators acc;
    acc.fk = g(radius) * std::exp(-exponent) + phi_exp_int;
    acc.mild = g(radius) + phi_int - psi_int;
    acc.clipped =
        static_cast<double>(clipped) / static_cast<double>(n_steps + 1);
    return acc;
}

struct SampleStats {
    double mean = 0.0;
    double stderr_mean = 0.0;
};

SampleStats reduce(const std::vector<double>& slots) {
    SampleStats stats;
    const double n = static_cast<double>(slots.size());
    stats.mean = pairwise_sum(slots) / n;
    std::vector<double> sq(slots.size());
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const double d = slots[i] - stats.mean;
        sq[i] = d * d;
    }
    stats.stderr_mean = std::sqrt(pairwise_sum(sq) / (n - 1.0) / n);
    return stats;
}

}  // namespace

FkEstimate fk_estimate(const FieldInterpolant& field, const Mechanism& mech,
                       const RadialProfile& g, const RadialProfile& phi,
                       double t, double x_radius, std::size_t n_paths,
                       std::size_t n_steps, std::uint64_t seed,
                       unsigned threads) {
    require(t > 0.0 && t <= field.t_max() + 1e-9, ErrorCode::invalid_argument,
            "field must cover [0, t]");
    require(x_radius >= 0.0 && x_radius <= field.r_max(),
            ErrorCode::invalid_argument, "x must lie inside the grid");
    require(n_paths >= 2 && n_steps >= 2, ErrorCode::invalid_argument,
            "need n_paths >= 2 and n_steps >= 2");

    std::vector<double> values(n_paths), clipped(n_paths);
    parallel_for(n_paths, threads, [&](std::size_t p) {
        Rng rng(derive_key(seed, kFkTag, p));
        const auto acc =
            run_path(field, mech, g, phi, t, x_radius, n_steps, rng);
        values[p] = acc.fk;
        clipped[p] = acc.clipped;
    });

    const auto stats = reduce(values);
    FkEstimate out;
    out.mean = stats.mean;
    out.stderr_mean = stats.stderr_mean;
    out.clipped_fraction = pairwise_sum(clipped) / static_cast<double>(n_paths);
    out.n_paths = n_paths;
    return out;
}

MildFormResidual mild_form_residual(const FieldInterpolant& field,
                                    const Mechanism& mech,
                                    const RadialProfile& g,
                                    const RadialProfile& phi, double t,
                                    double x_radius, std::size_t n_paths,
                                    std::size_t n_steps, std::uint64_t seed,
                                    unsigned threads) {
    require(t > 0.0 && t <= field.t_max() + 1e-9, ErrorCode::invalid_argument,
            "field must cover [0, t]");
    require(x_radius >= 0.0 && x_radius <= field.r_max(),
            ErrorCode::invalid_argument, "x must lie inside the grid");
    require(n_paths >= 2 && n_steps >= 2, ErrorCode::invalid_argument,
            "need n_paths >= 2 and n_steps >= 2");

    std::vector<double> values(n_paths), clipped(n_paths);
    parallel_for(n_paths, threads, [&](std::size_t p) {
        Rng rng(derive_key(seed, kMildTag, p));
        const auto acc =
            run_path(field, mech, g, phi, t, x_radius, n_steps, rng);
        values[p] = acc.mild;
        clipped[p] = acc.clipped;
    });

    const auto stats = reduce(values);
    MildFormResidual out;
    out.residual = field.value(t, x_radius) - stats.mean;
    out.stderr_residual = stats.stderr_mean;
    out.clipped_fraction = pairwise_sum(clipped) / static_cast<double>(n_paths);
    out.n_paths = n_paths;
    return out;
}

AprioriReport apriori_bound_check(const FieldStack& field, double sup_g,
                                  double sup_phi, const Mechanism& mech) {
    require(!field.times.empty() && field.times.size() == field.slices.size(),
            ErrorCode::invalid_argument, "empty field stack");
    AprioriReport report;
    report.bound =
        sup_g + (sup_phi - psi_min(mech)) * field.times.back();
    for (std::size_t s = 0; s < field.slices.size(); ++s) {
        const auto& slice = field.slices[s];
        for (std::size_t i = 0; i < slice.size(); ++i) {
            if (slice[i] > report.max_value) {
                report.max_value = slice[i];
                report.arg_time = field.times[s];
                report.arg_radius = field.h * static_cast<double>(i);
            }
        }
    }
    report.margin = report.bound - report.max_value;
    report.ok = report.max_value <= report.bound * (1.0 + 1e-9) + 1e-12;
    return report;
}

}  // namespace sbmr
