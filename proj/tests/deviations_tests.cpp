#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sbmr/deviations.hpp"
#include "sbmr/rng.hpp"
#include "test_support.hpp"

using namespace sbmr;

TEST_CASE("rate_upper values and domain") {
    CHECK(rate_upper(1.0, 2.0) == doctest::Approx(-1.0));
    CHECK(rate_upper(0.5, 2.0) == doctest::Approx(-1.5));
    CHECK_THROWS_AS(rate_upper(1.0, std::sqrt(2.0)), Error);
    // limit toward the critical speed vanishes
    CHECK(rate_upper(1.0, std::sqrt(2.0) + 1e-7) ==
          doctest::Approx(0.0).epsilon(1e-5));
}

TEST_CASE("rate_lower values and domain") {
    CHECK(rate_lower(1.0, 0.7) ==
          doctest::Approx(-1.0 + 0.7 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(rate_lower(2.0, 1e-9) == doctest::Approx(-2.0).epsilon(1e-6));
    CHECK_THROWS_AS(rate_lower(1.0, std::sqrt(2.0)), Error);
    CHECK_THROWS_AS(rate_lower(1.0, 0.0), Error);
    // both rates vanish at the law-of-large-numbers speed
    CHECK(rate_lower(1.0, std::sqrt(2.0) - 1e-7) ==
          doctest::Approx(0.0).epsilon(1e-5));
}

namespace {
DeviationEstimate synth(const std::vector<double>& ts, double I, double a,
                        double b, double noise, std::uint64_t seed) {
    DeviationEstimate est;
    est.rho = 2.0;
    est.method = "pde";
    Rng rng(derive_key(seed, fnv1a64("dev.synth")));
    for (double t : ts) {
        const double eps = noise > 0.0 ? noise * rng.next_normal() : 0.0;
        est.entries.push_back({t, -I * t + a * std::log(t) + b + eps, 0.0});
    }
    return est;
}
}  // namespace

TEST_CASE("fit_rate recovers exact synthetic data") {
    // decay constant 1.0, i.e. signed rate -1.0
    auto est = fit_rate(synth({4, 6, 8, 10, 12}, 1.0, 0.0, 0.0, 0.0, 1));
    CHECK(est.fitted_rate == doctest::Approx(-1.0).epsilon(1e-10));
    CHECK(est.log_correction == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(est.intercept == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(est.naive_rates.size() == 5);
    CHECK(est.naive_rates[0] == doctest::Approx(-1.0));
}

TEST_CASE("fit_rate identifies the full model under tiny noise") {
    auto est = fit_rate(synth({4, 6, 8, 10, 12, 14}, 1.0, 0.5, 0.3, 1e-6, 2));
    CHECK(est.fitted_rate == doctest::Approx(-1.0).epsilon(1e-3));
    CHECK(est.log_correction == doctest::Approx(0.5).epsilon(1e-2));
    CHECK(est.intercept == doctest::Approx(0.3).epsilon(1e-2));
}

TEST_CASE("fit_rate rejects degenerate designs") {
    DeviationEstimate est;
    est.entries = {{4, -4, 0}, {4, -4.1, 0}, {8, -8, 0}};
    CHECK_THROWS_AS(fit_rate(est), Error);
    est.entries = {{4, -4, 0}, {6, -6, 0}};
    CHECK_THROWS_AS(fit_rate(est), Error);
}

TEST_CASE("fit_rate is invariant under reordering-by-construction and "
          "common stderr scaling") {
    DeviationEstimate base;
    base.rho = 2.0;
    Rng rng(derive_key(5, fnv1a64("dev.wls")));
    for (double t : {4.0, 6.0, 8.0, 10.0, 12.0}) {
        const double se = 0.01 * (1.0 + 0.5 * rng.next_double());
        base.entries.push_back(
            {t, -1.2 * t + 0.4 * std::log(t) + se * rng.next_normal(), se});
    }
    const auto fit1 = fit_rate(base);
    DeviationEstimate scaled = base;
    for (auto& e : scaled.entries) e.stderr_log *= 7.5;
    const auto fit2 = fit_rate(scaled);
    CHECK(fit1.fitted_rate == doctest::Approx(fit2.fitted_rate).epsilon(1e-12));
    CHECK(fit1.fitted_rate_stderr ==
          doctest::Approx(fit2.fitted_rate_stderr).epsilon(1e-10));
}

TEST_CASE("gaussian_tail closed forms") {
    CHECK(gaussian_tail(2, 2.0) == doctest::Approx(std::exp(-2.0)).epsilon(1e-13));
    CHECK(gaussian_tail(1, 0.0) == doctest::Approx(1.0));
    CHECK(gaussian_tail(3, 0.0) == doctest::Approx(1.0));
    // d=1 equals the two-sided normal tail
    for (double z : {0.5, 1.0, 2.5, 6.0}) {
        CHECK(gaussian_tail(1, z) ==
              doctest::Approx(2.0 * oracle::normal_tail(z)).epsilon(1e-13));
    }
}

TEST_CASE("gaussian_tail matches adaptive quadrature of the polar integral") {
    for (int d : {1, 2, 3, 4, 5, 7}) {
        for (double z : {0.5, 1.0, 2.0, 3.5, 5.0}) {
            const double exact = gaussian_tail(d, z);
            const double quad = oracle::chi_tail_quadrature(d, z);
            CHECK(exact == doctest::Approx(quad).epsilon(1e-10));
        }
    }
    // the spec's pinned spot value
    CHECK(gaussian_tail(3, 1.0) ==
          doctest::Approx(oracle::chi_tail_quadrature(3, 1.0)).epsilon(1e-11));
}

TEST_CASE("gaussian_tail monotonicity in z and d") {
    for (int d : {1, 2, 3, 5}) {
        double prev = 1.1;
        for (double z = 0.0; z <= 10.0; z += 0.25) {
            const double tail = gaussian_tail(d, z);
            CHECK(tail < prev + 1e-15);
            prev = tail;
        }
    }
    for (double z : {0.5, 2.0, 4.0}) {
        for (int d = 1; d < 8; ++d) {
            CHECK(gaussian_tail(d + 1, z) > gaussian_tail(d, z));
        }
    }
}

TEST_CASE("tail envelope: d=2 ratio is exactly 1 and limits normalize") {
    const auto r2 = gaussian_tail_bound_check(2, {2.0, 4.0, 8.0});
    for (double ratio : r2.ratios) CHECK(ratio == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r2.limit_constant == doctest::Approx(1.0));
    CHECK(r2.limit_ok);

    // d=1 at z=8: 2(1-Phi(8)) e^{32} 8 ~ sqrt(2/pi), confirmed via erfc
    const auto r1 = gaussian_tail_bound_check(1, {8.0});
    const double manual = 2.0 * oracle::normal_tail(8.0) * std::exp(32.0) * 8.0;
    CHECK(r1.ratios[0] == doctest::Approx(manual).epsilon(1e-9));
    CHECK(r1.limit_constant == doctest::Approx(std::sqrt(2.0 / M_PI)));
    CHECK(r1.limit_ok);

    // d=3: raw ratios decrease toward the constant
    const auto r3 = gaussian_tail_bound_check(3, {2.0, 4.0, 8.0});
    CHECK(r3.ratios[0] > r3.ratios[1]);
    CHECK(r3.ratios[1] > r3.ratios[2]);
    CHECK(r3.limit_ok);
    CHECK_THROWS_AS(gaussian_tail_bound_check(2, {0.5}), Error);
}

TEST_CASE("max radius bound: d=1 reflection equality and 2^d envelope") {
    const auto report = max_radius_bound_check(1, 1.0, 2.0, 40000, 400, 99);
    CHECK(report.reflection_exact ==
          doctest::Approx(2.0 * oracle::normal_tail(2.0)).epsilon(1e-12));
    CHECK(report.reflection_ok);
    CHECK(report.bound_ok);
    // the two-sided max probability exceeds the one-sided one
    CHECK(report.mc_prob >= report.one_sided_prob);
}

TEST_CASE("max radius bound: d=2 case stays below 4 e^{-4.5}") {
    const auto report = max_radius_bound_check(2, 1.0, 3.0, 60000, 400, 7);
    CHECK(report.bound == doctest::Approx(4.0 * std::exp(-4.5)).epsilon(1e-12));
    CHECK(report.bound_ok);
    CHECK(report.reflection_ok);  // first coordinate is a 1-d Brownian motion
}

TEST_CASE("max radius bound rejects the sub-diffusive regime") {
    CHECK_THROWS_AS(max_radius_bound_check(1, 4.0, 1.0, 100, 10, 1), Error);
}
