#include "sbmr/deviations.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "sbmr/parallel.hpp"
#include "sbmr/rng.hpp"

namespace sbmr {

namespace {

const std::uint64_t kMaxRadiusTag = fnv1a64("sbmr.maxradius");

// 3x3 linear solve with partial pivoting; throws on (near-)singular systems.
std::array<double, 3> solve3(std::array<std::array<double, 3>, 3> A,
                             std::array<double, 3> b) {
    for (int col = 0; col < 3; ++col) {
        int pivot = col;
        for (int row = col + 1; row < 3; ++row) {
            if (std::fabs(A[row][col]) > std::fabs(A[pivot][col])) pivot = row;
        }
        require(std::fabs(A[pivot][col]) > 1e-300, ErrorCode::invalid_argument,
                "fit_rate: singular design (duplicate t values?)");
        std::swap(A[col], A[pivot]);
        std::swap(b[col], b[pivot]);
        for (int row = col + 1; row < 3; ++row) {
            const double f = A[row][col] / A[col][col];
            for (int k = col; k < 3; ++k) A[row][k] -= f * A[col][k];
            b[row] -= f * b[col];
        }
    }
    std::array<double, 3> x{};
    for (int row = 2; row >= 0; --row) {
        double s = b[row];
        for (int k = row + 1; k < 3; ++k) s -= A[row][k] * x[k];
        x[row] = s / A[row][row];
    }
    return x;
}

// Inverse of a symmetric positive definite 3x3 via the adjugate.
std::array<std::array<double, 3>, 3> invert3(
    const std::array<std::array<double, 3>, 3>& m) {
    const double det =
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
        m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
        m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    require(std::fabs(det) > 1e-300, ErrorCode::invalid_argument,
            "fit_rate: singular normal equations");
    std::array<std::array<double, 3>, 3> inv;
    inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
    inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
    inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
    inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
    inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
    inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
    inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
    inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
    return inv;
}

}  // namespace

void DeviationEstimate::validate_entries() const {
    require(entries.size() >= 3, ErrorCode::invalid_argument,
            "fit_rate needs at least 3 entries");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        require(entries[i].t > 0.0, ErrorCode::invalid_argument,
                "entry times must be > 0");
        if (i > 0) {
            require(entries[i].t > entries[i - 1].t, ErrorCode::invalid_argument,
                    "entries must be sorted by strictly increasing t");
        }
    }
}

double rate_upper(double beta, double rho) {
    require(beta > 0.0, ErrorCode::invalid_argument, "beta must be > 0");
    require(rho > std::sqrt(2.0 * beta), ErrorCode::invalid_argument,
            "rate_upper requires rho > sqrt(2 beta)");
    return -(rho * rho / 2.0 - beta);
}

double rate_lower(double beta, double rho) {
    require(beta > 0.0, ErrorCode::invalid_argument, "beta must be > 0");
    require(rho > 0.0 && rho < std::sqrt(2.0 * beta), ErrorCode::invalid_argument,
            "rate_lower requires rho in (0, sqrt(2 beta))");
    return -beta + std::sqrt(beta / 2.0) * rho;
}

DeviationEstimate fit_rate(DeviationEstimate estimate) {
    estimate.validate_entries();
    const std::size_t n = estimate.entries.size();

    std::array<std::array<double, 3>, 3> xtx{};
    std::array<double, 3> xty{};
    auto row = [](const DeviationEntry& e) {
        return std::array<double, 3>{e.t, std::log(e.t), 1.0};
    };
    for (const auto& e : estimate.entries) {
        const double w = e.stderr_log > 0.0 ? 1.0 / (e.stderr_log * e.stderr_log)
                                            : 1.0;
        const auto x = row(e);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) xtx[i][j] += w * x[i] * x[j];
            xty[i] += w * x[i] * e.log_prob;
        }
    }
    const auto coef = solve3(xtx, xty);
    estimate.fitted_rate = coef[0];
    estimate.log_correction = coef[1];
    estimate.intercept = coef[2];

    double wrss = 0.0;
    for (const auto& e : estimate.entries) {
        const double w = e.stderr_log > 0.0 ? 1.0 / (e.stderr_log * e.stderr_log)
                                            : 1.0;
        const auto x = row(e);
        const double fit = coef[0] * x[0] + coef[1] * x[1] + coef[2] * x[2];
        const double r = e.log_prob - fit;
        wrss += w * r * r;
    }
    if (n > 3) {
        const double s2 = wrss / static_cast<double>(n - 3);
        estimate.fitted_rate_stderr = std::sqrt(s2 * invert3(xtx)[0][0]);
    } else {
        estimate.fitted_rate_stderr = 0.0;
    }

    estimate.naive_rates.clear();
    for (const auto& e : estimate.entries) {
        estimate.naive_rates.push_back(e.log_prob / e.t);
    }
    return estimate;
}

double gaussian_tail(int d, double z) {
    require(d >= 1, ErrorCode::invalid_argument, "d must be >= 1");
    require(z >= 0.0, ErrorCode::invalid_argument, "z must be >= 0");
    const double x = 0.5 * z * z;

    if (d % 2 == 0) {
        // Q(a, x) with integer a = d/2: e^{-x} sum_{k<a} x^k / k!
        const int a = d / 2;
        double term = 1.0, sum = 1.0;
        for (int k = 1; k < a; ++k) {
            term *= x / static_cast<double>(k);
            sum += term;
        }
        return std::exp(-x) * sum;
    }
    // Half-integer a = (d-1)/2 + 1/2; upward recurrence from Q(1/2, x).
    double q = std::erfc(std::sqrt(x));
    double a = 0.5;
    // x^a e^{-x} / Gamma(a+1) terms, accumulated stably in log space when
    // large x would overflow pow().
    for (int step = 0; step < (d - 1) / 2; ++step) {
        double term;
        if (x > 0.0) {
            const double log_term =
                a * std::log(x) - x - std::lgamma(a + 1.0);
            term = std::exp(log_term);
        } else {
            term = 0.0;
        }
        q += term;
        a += 1.0;
    }
    return std::min(q, 1.0);
}

TailBoundReport gaussian_tail_bound_check(int d,
                                          const std::vector<double>& z_grid) {
    require(d >= 1, ErrorCode::invalid_argument, "d must be >= 1");
    require(!z_grid.empty(), ErrorCode::invalid_argument, "z_grid is empty");
    TailBoundReport report;
    report.limit_constant =
        std::pow(2.0, 1.0 - 0.5 * d) / std::tgamma(0.5 * d);

    double z_max = 0.0;
    double ratio_at_zmax = 0.0;
    for (double z : z_grid) {
        require(z > 1.0, ErrorCode::invalid_argument,
                "z_grid must lie in (1, inf)");
        const double tail = gaussian_tail(d, z);
        const double envelope =
            std::exp(-0.5 * z * z) * std::pow(z, static_cast<double>(d - 2));
        const double ratio = tail / envelope;
        report.ratios.push_back(ratio);
        report.normalized_ratios.push_back(ratio / report.limit_constant);
        report.c_d = std::max(report.c_d, ratio);
        if (z > z_max) {
            z_max = z;
            ratio_at_zmax = ratio / report.limit_constant;
        }
    }
    report.limit_ok =
        z_max < 8.0 || std::fabs(ratio_at_zmax - 1.0) <= 0.05;
    require(std::isfinite(report.c_d), ErrorCode::internal,
            "tail envelope constant is not finite");
    return report;
}

MaxRadiusReport max_radius_bound_check(int d, double t, double a,
                                       std::size_t n_paths,
                                       std::size_t n_steps,
                                       std::uint64_t seed, unsigned threads) {
    require(d >= 1 && d <= 8, ErrorCode::invalid_argument, "d in [1, 8]");
    require(t > 0.0 && a > 0.0, ErrorCode::invalid_argument,
            "t and a must be > 0");
    require(a / std::sqrt(t) > 1.0, ErrorCode::invalid_argument,
            "max_radius_bound_check requires a/sqrt(t) > 1");
    require(n_paths >= 2 && n_steps >= 1, ErrorCode::invalid_argument,
            "need n_paths >= 2 and n_steps >= 1");

    const double delta = t / static_cast<double>(n_steps);
    std::vector<std::uint8_t> hit_abs(n_paths, 0), hit_one(n_paths, 0);

    parallel_for(n_paths, threads, [&](std::size_t p) {
        Rng rng(derive_key(seed, kMaxRadiusTag, p));
        double x[8] = {0.0};
        double max_abs = 0.0, max_one = 0.0;
        const double sd = std::sqrt(delta);
        for (std::size_t s = 0; s < n_steps; ++s) {
            double r2 = 0.0;
            for (int c = 0; c < d; ++c) {
                const double prev = x[c];
                const double next = prev + sd * rng.next_normal();
                const double diff = next - prev;
                const double mx =
                    0.5 * (prev + next +
                           std::sqrt(diff * diff -
                                     2.0 * delta * std::log(rng.next_double())));
                if (d == 1) {
                    const double mn =
                        0.5 * (prev + next -
                               std::sqrt(diff * diff -
                                         2.0 * delta *
                                             std::log(rng.next_double())));
                    max_abs = std::max(max_abs, std::max(mx, -mn));
                }
                if (c == 0) max_one = std::max(max_one, mx);
                x[c] = next;
                r2 += next * next;
            }
            if (d > 1) max_abs = std::max(max_abs, std::sqrt(r2));
        }
        hit_abs[p] = max_abs >= a;
        hit_one[p] = max_one >= a;
    });

    const double n = static_cast<double>(n_paths);
    double p_abs = 0.0, p_one = 0.0;
    for (std::size_t i = 0; i < n_paths; ++i) {
        p_abs += hit_abs[i];
        p_one += hit_one[i];
    }
    p_abs /= n;
    p_one /= n;

    MaxRadiusReport report;
    report.mc_prob = p_abs;
    report.mc_stderr = std::sqrt(p_abs * (1.0 - p_abs) / n);
    report.bound = std::pow(2.0, d) * gaussian_tail(d, a / std::sqrt(t));
    report.bound_ok = p_abs <= report.bound + 3.0 * report.mc_stderr;
    report.one_sided_prob = p_one;
    report.one_sided_stderr = std::sqrt(p_one * (1.0 - p_one) / n);
    report.reflection_exact = std::erfc(a / std::sqrt(2.0 * t));
    report.reflection_ok =
        std::fabs(p_one - report.reflection_exact) <=
        3.0 * std::max(report.one_sided_stderr, 1e-12);
    return report;
}

}  // namespace sbmr
