#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sbmr/particles.hpp"
#include "sbmr/pde.hpp"
#include "test_support.hpp"

using namespace sbmr;

namespace {

SimParams base_params(double beta, double alpha, std::uint64_t scale,
                      double t_end, int d = 1) {
    SimParams p;
    p.mech = {beta, alpha, 0.0, 1.0};
    p.d = d;
    p.scale = scale;
    p.t_end = t_end;
    return p;
}

}  // namespace

TEST_CASE("delta_0 start: unit mass and no spread at a degenerate horizon") {
    auto p = base_params(1.0, 1.0, 100, 1e-12);
    const auto record = simulate_population(p, 1, 0);
    CHECK(record.final_mass == doctest::Approx(1.0));
    CHECK(record.survived);
    CHECK(record.range_at_horizon < 1e-4);
    CHECK(record.rightmost_at_horizon < 1e-4);
}

TEST_CASE("records are deterministic per (seed, replicate) and independent "
          "across replicates") {
    auto p = base_params(1.0, 1.0, 200, 1.0);
    p.checkpoints = {0.5, 1.0};
    const auto a = simulate_population(p, 42, 3);
    const auto b = simulate_population(p, 42, 3);
    CHECK(a.final_mass == b.final_mass);
    CHECK(a.range_at_horizon == b.range_at_horizon);
    CHECK(a.rightmost_at_horizon == b.rightmost_at_horizon);
    CHECK(a.range_radius == b.range_radius);

    const auto c = simulate_population(p, 42, 4);
    CHECK(a.range_at_horizon != c.range_at_horizon);
}

TEST_CASE("range is nondecreasing across checkpoints and dominates the "
          "rightmost coordinate") {
    auto p = base_params(1.0, 1.0, 300, 2.0);
    p.checkpoints = {0.5, 1.0, 1.5, 2.0};
    for (std::uint64_t rep = 0; rep < 50; ++rep) {
        const auto record = simulate_population(p, 7, rep);
        for (std::size_t i = 0; i < record.range_radius.size(); ++i) {
            if (i > 0) {
                CHECK(record.range_radius[i] >= record.range_radius[i - 1]);
                CHECK(record.rightmost[i] >= record.rightmost[i - 1]);
            }
            CHECK(record.range_radius[i] >= record.rightmost[i] - 1e-12);
        }
        CHECK(record.range_at_horizon >= record.rightmost_at_horizon - 1e-12);
    }
}

TEST_CASE("Yule process: mean mass e^{beta t} with no deaths") {
    // alpha = 0, N = 1: pure binary branching at rate beta
    auto p = base_params(1.0, 0.0, 1, 2.0);
    const std::size_t reps = 4000;
    double sum = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < reps; ++i) {
        const auto record = simulate_population(p, 11, i);
        sum += record.final_mass;
    }
    const double mean = sum / reps;
    for (std::size_t i = 0; i < reps; ++i) {
        const auto record = simulate_population(p, 11, i);
        ss += (record.final_mass - mean) * (record.final_mass - mean);
    }
    const double se = std::sqrt(ss / (reps - 1.0) / reps);
    const auto check = oracle::z_check(mean, std::exp(2.0), se);
    INFO(check.detail);
    CHECK(check.ok);
}

TEST_CASE("mean total mass matches e^{beta t} via the count chain") {
    for (std::uint64_t scale : {500ull, 2000ull}) {
        auto p = base_params(1.0, 1.0, scale, 1.0);
        const auto mass = sample_total_mass(p, 1500, 23, 2);
        const auto check =
            oracle::z_check(mass.mean_mass, std::exp(1.0), mass.stderr_mass);
        INFO("N = " << scale << ": " << check.detail);
        CHECK(check.ok);
    }
}

TEST_CASE("survival fraction matches the exact finite-(N,t) law and the "
          "lambda_star limit") {
    const double beta = 1.0, alpha = 1.0;
    const std::uint64_t scale = 50;
    const double t = 8.0;
    auto p = base_params(beta, alpha, scale, t);
    const auto mass = sample_total_mass(p, 600, 31, 2);

    const double b = alpha * scale + beta, d0 = alpha * scale;
    const double exact =
        1.0 - std::pow(oracle::bdp_extinct_by(b, d0, t), scale);
    const auto vs_exact =
        oracle::z_check(mass.survival_fraction, exact, mass.stderr_survival);
    INFO("exact: " << vs_exact.detail);
    CHECK(vs_exact.ok);

    const double limit = survival_probability(p.mech);
    const auto vs_limit =
        oracle::z_check(mass.survival_fraction, limit, mass.stderr_survival);
    INFO("limit: " << vs_limit.detail);
    CHECK(vs_limit.ok);
    // finite-t and finite-N bias is far below the Monte Carlo resolution here
    CHECK(std::fabs(exact - limit) < mass.stderr_survival);
}

TEST_CASE("quadratic mass exponent matches an RK4 integration") {
    const Mechanism mech{1.0, 1.0, 0.0, 1.0};
    for (double v0 : {0.25, 0.5, 1.0, 2.0}) {
        for (double t : {0.5, 1.0, 2.0}) {
            const double closed = quadratic_mass_exponent(mech, v0, t);
            const double rk = oracle::rk4_flow(
                [&](double v) { return -psi(mech, v); }, v0, t, 1e-5);
            CHECK(closed == doctest::Approx(rk).epsilon(1e-8));
        }
    }
    // the root of psi is a fixed point
    CHECK(quadratic_mass_exponent(mech, 1.0, 5.0) == doctest::Approx(1.0));
}

TEST_CASE("Laplace functional check passes across theta and t") {
    const double lambda = 1.0;  // lambda* for beta = alpha = 1
    for (double t : {1.0, 2.0}) {
        auto p = base_params(1.0, 1.0, 500, t);
        const auto sample = sample_total_mass(p, 1500, 47, 2);
        for (double theta : {0.25, 0.5, 1.0, lambda}) {
            const auto check = total_mass_laplace_check(p, theta, sample);
            INFO("t=" << t << " theta=" << theta << " z=" << check.z);
            CHECK(std::fabs(check.z) < 3.0);
        }
        // theta = 0 is exact on both sides
        const auto trivial = total_mass_laplace_check(p, 0.0, sample);
        CHECK(trivial.empirical == doctest::Approx(1.0));
        CHECK(trivial.expected == doctest::Approx(1.0));
    }
}

TEST_CASE("single Brownian particle: rightmost max obeys the reflection "
          "principle") {
    auto p = base_params(0.0, 0.0, 1, 1.0);  // no branching, no deaths
    const std::size_t reps = 20000;
    const double a = 1.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < reps; ++i) {
        const auto record = simulate_population(p, 61, i);
        CHECK(record.range_at_horizon >= record.rightmost_at_horizon - 1e-12);
        hits += rightmost_max(record) >= a;
    }
    const double phat = static_cast<double>(hits) / reps;
    const double se = std::sqrt(phat * (1.0 - phat) / reps);
    const double exact = 2.0 * oracle::normal_tail(a);  // 2 P(B_1 >= 1)
    const auto check = oracle::z_check(phat, exact, se);
    INFO(check.detail);
    CHECK(check.ok);
}

TEST_CASE("direct estimator endpoints: rho = 0 is certain, absurd rho gives "
          "a flagged bound") {
    auto p = base_params(1.0, 1.0, 100, 0.5);
    const auto sure = estimate_range_prob_direct(p, 0.0, 200, 3, 2);
    CHECK(sure.value == doctest::Approx(1.0));
    CHECK(sure.hits == 200);

    const auto none = estimate_range_prob_direct(p, 200.0, 200, 3, 2);
    CHECK(none.zero_hit_bound);
    CHECK(none.low_hits);
    CHECK(none.value == doctest::Approx(3.0 / 200.0));
}

TEST_CASE("direct estimator agrees with the PDE route at moderate scale") {
    const double t = 1.0, rho = 1.5;
    auto p = base_params(1.0, 1.0, 500, t);
    const auto direct = estimate_range_prob_direct(p, rho, 4000, 71, 2);

    RangeOptions opt;
    opt.tol = 1e-4;
    opt.min_nodes = 300;
    const double pde =
        upper_deviation_prob(p.mech, 1, t, rho, opt);
    // 4 SE plus a 1/N allowance at this deliberately small N
    const double slack = 4.0 * direct.stderr_value + 2.0 / 500.0;
    INFO("direct " << direct.value << " pde " << pde << " slack " << slack);
    CHECK(std::fabs(direct.value - pde) <= slack);
}

TEST_CASE("splitting with a single level reduces to the direct estimator") {
    const double t = 1.0, rho = 1.2;
    auto p = base_params(1.0, 1.0, 200, t);
    const auto direct = estimate_range_prob_direct(p, rho, 3000, 83, 2);
    const auto split =
        estimate_range_prob_splitting(p, {rho * t}, 3000, 83, 2);
    CHECK_FALSE(split.partial);
    REQUIRE(split.level_fractions.size() == 1);
    const double se_combined = std::sqrt(
        direct.stderr_value * direct.stderr_value +
        split.prob * split.rel_stderr * split.prob * split.rel_stderr);
    const auto check = oracle::z_check(split.prob, direct.value, se_combined);
    INFO(check.detail);
    CHECK(check.ok);
}

TEST_CASE("multilevel splitting agrees with direct Monte Carlo on an "
          "overlapping case") {
    const double t = 1.5, rho = 1.4;
    auto p = base_params(1.0, 1.0, 200, t);
    const auto direct = estimate_range_prob_direct(p, rho, 6000, 97, 2);
    const auto split = estimate_range_prob_splitting(
        p, {0.525, 1.05, 1.575, 2.1}, 1500, 97, 2);
    CHECK_FALSE(split.partial);
    const double se_combined =
        std::sqrt(direct.stderr_value * direct.stderr_value +
                  std::pow(split.prob * split.rel_stderr, 2));
    const auto check = oracle::z_check(split.prob, direct.value,
                                       std::max(se_combined, 1e-12));
    INFO("split " << split.prob << " direct " << direct.value << " z "
                  << check.z);
    CHECK(check.ok);
}

TEST_CASE("splitting flags level extinction as a partial product") {
    auto p = base_params(1.0, 1.0, 50, 0.05);  // almost no time to move
    const auto split =
        estimate_range_prob_splitting(p, {5.0, 10.0}, 50, 5, 2);
    CHECK(split.partial);
    CHECK(split.level_fractions.front() == doctest::Approx(0.0));
}

TEST_CASE("population cap aborts with an explosion error") {
    auto p = base_params(2.0, 0.0, 64, 8.0);  // pure growth, mean e^{16}
    p.population_cap = 256;
    CHECK_THROWS_AS(simulate_population(p, 5, 0), Error);
    try {
        simulate_population(p, 5, 0);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::explosion);
    }
}

TEST_CASE("parameter validation") {
    auto p = base_params(1.0, 1.0, 100, 1.0);
    p.mech.eta = 0.5;
    p.mech.theta = 0.5;
    CHECK_THROWS_AS(p.validate(), Error);

    auto q = base_params(-1.0, 1.0, 100, 1.0);
    CHECK_THROWS_AS(q.validate(), Error);

    auto r = base_params(1.0, 1.0, 100, 1.0);
    r.checkpoints = {0.5, 0.4};
    CHECK_THROWS_AS(r.validate(), Error);
}

TEST_CASE("replicate stream keys are stable and distinct") {
    const auto k0 = replicate_stream_key(9, 0);
    CHECK(k0 == replicate_stream_key(9, 0));
    CHECK(k0 != replicate_stream_key(9, 1));
    CHECK(k0 != replicate_stream_key(10, 0));
}
